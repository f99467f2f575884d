#pragma once

// Counterfactual attribute interventions on generated records. A record is
// rendered as "name: value" lines, one per schema attribute, in schema order.

#include <cftoken/engine.hpp>
#include <cftoken/experiment.hpp>
#include <cftoken/tokenizer.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

namespace cftoken {

// ============================================================================
// Schema
// ============================================================================

enum class AttributeKind { categorical, numeric };

inline std::string to_string(AttributeKind k) { return k == AttributeKind::categorical ? "categorical" : "numeric"; }

struct Attribute {
  std::string name;
  AttributeKind kind = AttributeKind::categorical;
  std::vector<std::string> values;  // categorical only
  double min = -std::numeric_limits<double>::infinity();
  double max = std::numeric_limits<double>::infinity();
  bool outcome = false;
  /// Records whose value is exactly zero are discarded at generation time.
  bool exclude_zero = false;
  /// "education" maps values through education_to_numeric in summaries.
  std::string scale;

  friend bool operator==(const Attribute&, const Attribute&) = default;
};

class AttributeSchema {
 public:
  AttributeSchema() = default;
  AttributeSchema(std::vector<Attribute> attributes, std::string prompt)
      : attributes_(std::move(attributes)), prompt_(std::move(prompt)) {
    if (attributes_.empty()) throw DomainError("schema: no attributes");
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
      const auto& a = attributes_[i];
      if (a.name.empty() || a.name.find_first_of(":\n") != std::string::npos)
        throw DomainError("schema: attribute names must be non-empty and free of ':' and newlines");
      if (index_of(a.name) != i) throw DomainError("schema: duplicate attribute '" + a.name + "'");
      if (a.kind == AttributeKind::categorical && a.values.empty())
        throw DomainError("schema: categorical attribute '" + a.name + "' lists no values");
      if (a.kind == AttributeKind::numeric && !(a.min <= a.max))
        throw DomainError("schema: attribute '" + a.name + "' has an empty range");
    }
  }

  const std::vector<Attribute>& attributes() const { return attributes_; }
  std::size_t size() const { return attributes_.size(); }
  const Attribute& operator[](std::size_t i) const { return attributes_.at(i); }
  /// Text the generator is prompted with; records follow it.
  const std::string& prompt() const { return prompt_; }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < attributes_.size(); ++i)
      if (attributes_[i].name == name) return i;
    return std::nullopt;
  }

  std::size_t require(std::string_view name) const {
    auto i = index_of(name);
    if (!i) throw DomainError("schema: unknown attribute '" + std::string(name) + "'");
    return *i;
  }

  bool accepts(std::size_t attr, const std::string& value) const {
    const auto& a = attributes_.at(attr);
    if (a.kind == AttributeKind::categorical) return std::find(a.values.begin(), a.values.end(), value) != a.values.end();
    auto v = parse_number(value);
    return v && *v >= a.min && *v <= a.max;
  }

  static std::optional<double> parse_number(std::string_view s) {
    double v = 0.0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  }

  friend bool operator==(const AttributeSchema&, const AttributeSchema&) = default;

 private:
  std::vector<Attribute> attributes_;
  std::string prompt_;
};

inline nlohmann::ordered_json schema_to_json(const AttributeSchema& s) {
  nlohmann::ordered_json j;
  j["prompt"] = s.prompt();
  auto arr = nlohmann::ordered_json::array();
  for (const auto& a : s.attributes()) {
    nlohmann::ordered_json o;
    o["name"] = a.name;
    o["kind"] = to_string(a.kind);
    if (a.kind == AttributeKind::categorical) {
      o["values"] = a.values;
    } else {
      if (std::isfinite(a.min)) o["min"] = a.min;
      if (std::isfinite(a.max)) o["max"] = a.max;
    }
    if (a.outcome) o["outcome"] = true;
    if (a.exclude_zero) o["exclude_zero"] = true;
    if (!a.scale.empty()) o["scale"] = a.scale;
    arr.push_back(std::move(o));
  }
  j["attributes"] = std::move(arr);
  return j;
}

inline AttributeSchema schema_from_json(const nlohmann::json& j) {
  std::vector<Attribute> attrs;
  for (const auto& o : j.at("attributes")) {
    Attribute a;
    a.name = o.at("name").get<std::string>();
    const auto kind = o.at("kind").get<std::string>();
    if (kind == "categorical") {
      a.kind = AttributeKind::categorical;
      a.values = o.at("values").get<std::vector<std::string>>();
    } else if (kind == "numeric") {
      a.kind = AttributeKind::numeric;
      if (o.contains("min")) a.min = o["min"].get<double>();
      if (o.contains("max")) a.max = o["max"].get<double>();
    } else {
      throw DomainError("schema: attribute '" + a.name + "' has unknown kind '" + kind + "'");
    }
    a.outcome = o.value("outcome", false);
    a.exclude_zero = o.value("exclude_zero", false);
    a.scale = o.value("scale", std::string());
    attrs.push_back(std::move(a));
  }
  return AttributeSchema(std::move(attrs), j.value("prompt", std::string()));
}

// ============================================================================
// Education scale
// ============================================================================

/// 1 (high school) .. 5 (doctorate and professional degrees); nullopt when
/// the value is not in the table.
inline std::optional<int> education_to_numeric(std::string_view value) {
  static const std::map<std::string, int, std::less<>> table = {
      {"high school diploma", 1}, {"high school", 1},
      {"associate's degree", 2},  {"associate degree", 2},  {"associate's", 2},  {"associate", 2},
      {"undergraduate", 2},       {"some college", 2},      {"college", 2},      {"vocational training", 2},
      {"bachelor's degree", 3},   {"bachelor's", 3},        {"nursing degree", 3},
      {"master's degree", 4},     {"master's", 4},
      {"ph.d.", 5},               {"phd", 5},               {"doctorate degree", 5}, {"doctorate", 5},
      {"doctoral degree", 5},     {"jd", 5},                {"juris doctor", 5},     {"juris doctor (jd)", 5},
      {"law degree", 5},          {"pharmd", 5},            {"pharmacy degree", 5},  {"dental degree", 5},
      {"dentistry degree", 5},    {"md", 5},                {"medical degree", 5},
  };
  const auto b = value.find_first_not_of(" \t");
  if (b == std::string_view::npos) return std::nullopt;
  const auto e = value.find_last_not_of(" \t");
  std::string key(value.substr(b, e - b + 1));
  for (char& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  auto it = table.find(key);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

// ============================================================================
// Parsing
// ============================================================================

/// Inclusive token range of one value inside prompt + output.
struct FieldSpan {
  std::size_t first = 0;
  std::size_t last = 0;
};

struct ParsedRecord {
  std::vector<std::string> values;  // schema order
  std::vector<FieldSpan> spans;
};

enum class ParseStatus { ok, malformed, zero_excluded };

struct ParseResult {
  ParseStatus status = ParseStatus::malformed;
  ParsedRecord record;
  std::string reason;
};

/// Lines before the first attribute are preamble; after it every non-empty
/// line must be the next attribute, and all attributes must appear.
inline ParseResult parse_record(const Tokenizer& tok, const Vocabulary& vocab, const AttributeSchema& schema,
                                std::span<const TokenId> tokens, bool apply_zero_exclusion = true) {
  ParseResult res;
  const auto rendered = tok.render(tokens, vocab);
  const std::string& text = rendered.text;
  auto fail = [&](std::string why) {
    res.status = ParseStatus::malformed;
    res.reason = std::move(why);
    return res;
  };

  std::size_t next = 0;
  for (std::size_t pos = 0; pos <= text.size();) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string_view line(text.data() + pos, nl - pos);
    const std::size_t line_begin = pos;
    pos = nl + 1;
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    const auto colon = line.find(':');
    const bool names_next = next < schema.size() && colon != std::string_view::npos &&
                            line.substr(0, colon) == schema[next].name;
    if (!names_next) {
      if (next == 0) continue;
      if (next == schema.size()) return fail("trailing text after the last attribute");
      return fail("expected attribute '" + schema[next].name + "'");
    }
    auto vb = line.find_first_not_of(" \t", colon + 1);
    if (vb == std::string_view::npos) return fail("attribute '" + schema[next].name + "' has no value");
    auto ve = line.find_last_not_of(" \t") + 1;
    std::string value(line.substr(vb, ve - vb));
    if (!schema.accepts(next, value))
      return fail("value '" + value + "' not allowed for attribute '" + schema[next].name + "'");

    const std::size_t cb = line_begin + vb, ce = line_begin + ve;
    std::optional<std::size_t> first, last;
    for (std::size_t t = 0; t < rendered.spans.size(); ++t) {
      auto [b, e] = rendered.spans[t];
      if (b == e) continue;
      if (b >= cb && e <= ce) {
        if (!first) first = t;
        last = t;
      } else if (b < ce && e > cb) {
        return fail("value '" + value + "' does not sit on token boundaries");
      }
    }
    res.record.values.push_back(std::move(value));
    res.record.spans.push_back({*first, *last});
    ++next;
  }
  if (next < schema.size()) return fail("missing attribute '" + schema[next].name + "'");

  res.status = ParseStatus::ok;
  if (apply_zero_exclusion) {
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (!schema[i].exclude_zero) continue;
      auto v = AttributeSchema::parse_number(res.record.values[i]);
      if (v && *v == 0.0) {
        res.status = ParseStatus::zero_excluded;
        res.reason = "attribute '" + schema[i].name + "' is zero";
      }
    }
  }
  return res;
}

// ============================================================================
// Record generation
// ============================================================================

struct RecordOptions {
  SamplerConfig sampler = SamplerConfig::gumbel(1.0);
  std::size_t max_steps = 64;
  unsigned threads = 0;
};

struct GeneratedRecord {
  std::size_t id = 0;  // index into RecordBatch::sessions
  ParsedRecord record;
};

struct RecordBatch {
  std::vector<GenerationSession> sessions;  // every session, kept for audit
  std::vector<GeneratedRecord> records;
  std::size_t excluded_zero = 0;
  std::size_t excluded_malformed = 0;
  std::vector<std::pair<std::size_t, std::string>> exclusions;

  std::size_t generated() const { return sessions.size(); }
};

/// One record per session; session i uses seed derive_seed(seed, i).
inline RecordBatch generate_records(const DistributionProvider& provider, const Tokenizer& tok,
                                    const AttributeSchema& schema, std::size_t count, std::uint64_t seed,
                                    const RecordOptions& opts = {}) {
  const auto prompt = tok.encode(schema.prompt(), provider.vocabulary());
  RecordBatch batch;
  batch.sessions.resize(count);
  std::vector<ParseResult> parsed(count);
  detail::parallel_for(count, opts.threads, [&](std::size_t i) {
    batch.sessions[i] = generate(provider, prompt, opts.sampler, derive_seed(seed, i), opts.max_steps);
    const auto& s = batch.sessions[i];
    parsed[i] = parse_record(tok, provider.vocabulary(), schema, detail::concat(s.prompt, s.output));
  });
  for (std::size_t i = 0; i < count; ++i) {
    auto& p = parsed[i];
    if (p.status == ParseStatus::ok) {
      batch.records.push_back({i, std::move(p.record)});
      continue;
    }
    ++(p.status == ParseStatus::zero_excluded ? batch.excluded_zero : batch.excluded_malformed);
    batch.exclusions.emplace_back(i, std::move(p.reason));
  }
  if (batch.records.empty()) throw DomainError("bias: no parseable records among " + std::to_string(count));
  return batch;
}

// ============================================================================
// Effects
// ============================================================================

enum class EffectKind { total, direct };

inline std::string to_string(EffectKind k) { return k == EffectKind::total ? "total" : "direct"; }

struct EffectRecord {
  std::size_t record_id = 0;
  std::string attribute;
  std::string old_value;
  std::string new_value;
  std::string outcome;
  std::string factual;
  std::string counterfactual;
  EffectKind kind = EffectKind::total;
  bool excluded = false;
  std::string note;
};

class BiasLab {
 public:
  BiasLab(const DistributionProvider& provider, Tokenizer tok, AttributeSchema schema)
      : provider_(provider), tok_(tok), schema_(std::move(schema)) {}

  const AttributeSchema& schema() const { return schema_; }

  RecordBatch generate(std::size_t count, std::uint64_t seed, const RecordOptions& opts = {}) const {
    return generate_records(provider_, tok_, schema_, count, seed, opts);
  }

  /// Prefix ends at the new value; everything after it is regenerated, so
  /// attributes between `attribute` and each outcome may change.
  std::vector<EffectRecord> total_effect(const GenerationSession& s, const GeneratedRecord& r,
                                         std::string_view attribute, const std::string& new_value) const {
    const std::size_t a = schema_.require(attribute);
    std::vector<std::size_t> outcomes;
    for (std::size_t o = a + 1; o < schema_.size(); ++o)
      if (schema_[o].outcome) outcomes.push_back(o);
    if (outcomes.empty()) throw DomainError("bias: no outcome follows attribute '" + std::string(attribute) + "'");

    const auto iv = make_intervention(s, r, a, new_value, std::nullopt);
    std::vector<EffectRecord> out;
    const auto cf = regenerate_and_parse(s, iv);
    for (std::size_t o : outcomes) out.push_back(effect(r, a, new_value, o, EffectKind::total, cf));
    return out;
  }

  /// Prefix holds the new value and the factual values of everything up to
  /// the outcome; only the outcome onward is regenerated.
  EffectRecord direct_effect(const GenerationSession& s, const GeneratedRecord& r, std::string_view attribute,
                             const std::string& new_value, std::string_view outcome) const {
    const std::size_t a = schema_.require(attribute), o = schema_.require(outcome);
    if (o <= a) throw DomainError("bias: outcome must follow the intervened attribute");
    const auto iv = make_intervention(s, r, a, new_value, o);
    return effect(r, a, new_value, o, EffectKind::direct, regenerate_and_parse(s, iv));
  }

  /// Every record × every alternative value of `attribute` (all other
  /// categorical values unless `new_values` is given), total and direct
  /// effects on each downstream outcome.
  std::vector<EffectRecord> run(const RecordBatch& batch, std::string_view attribute,
                                std::vector<std::string> new_values = {}, unsigned threads = 0) const {
    const std::size_t a = schema_.require(attribute);
    if (new_values.empty()) {
      if (schema_[a].kind != AttributeKind::categorical)
        throw DomainError("bias: numeric attribute '" + schema_[a].name + "' needs explicit new values");
      new_values = schema_[a].values;
    }
    std::vector<std::vector<EffectRecord>> per(batch.records.size());
    detail::parallel_for(batch.records.size(), threads, [&](std::size_t i) {
      const auto& r = batch.records[i];
      const auto& s = batch.sessions.at(r.id);
      for (const auto& v : new_values) {
        if (v == r.record.values[a]) continue;
        auto tot = total_effect(s, r, attribute, v);
        for (auto& e : tot) {
          per[i].push_back(std::move(e));
          per[i].push_back(direct_effect(s, r, attribute, v, per[i].back().outcome));
        }
      }
    });
    std::vector<EffectRecord> out;
    for (auto& v : per) std::move(v.begin(), v.end(), std::back_inserter(out));
    return out;
  }

 private:
  struct Counterfactual {
    ParseResult parsed;
    TokenSequence tokens;
  };

  Intervention make_intervention(const GenerationSession& s, const GeneratedRecord& r, std::size_t a,
                                 const std::string& new_value, std::optional<std::size_t> outcome) const {
    if (!schema_.accepts(a, new_value))
      throw DomainError("bias: value '" + new_value + "' not allowed for attribute '" + schema_[a].name + "'");
    const std::size_t P = s.prompt.size();
    const auto span = r.record.spans.at(a);
    if (span.first < P) throw DomainError("bias: attribute '" + schema_[a].name + "' lies in the prompt");
    const std::size_t first = span.first - P, last = span.last - P;

    Intervention iv;
    iv.prompt = s.prompt;
    iv.output_prefix.assign(s.output.begin(), s.output.begin() + static_cast<std::ptrdiff_t>(first));
    const auto repl = tok_.encode(new_value, provider_.vocabulary());
    iv.output_prefix.insert(iv.output_prefix.end(), repl.begin(), repl.end());
    iv.step = last + 1;
    if (outcome) {
      const std::size_t stop = r.record.spans.at(*outcome).first - P;
      iv.output_prefix.insert(iv.output_prefix.end(), s.output.begin() + static_cast<std::ptrdiff_t>(last + 1),
                              s.output.begin() + static_cast<std::ptrdiff_t>(stop));
      iv.step = stop;
    }
    return iv;
  }

  Counterfactual regenerate_and_parse(const GenerationSession& s, const Intervention& iv) const {
    const auto reg = regenerate_counterfactual(provider_, s, iv);
    Counterfactual cf;
    cf.tokens = detail::concat(reg.prompt, reg.output);
    cf.parsed = parse_record(tok_, provider_.vocabulary(), schema_, cf.tokens, false);
    return cf;
  }

  EffectRecord effect(const GeneratedRecord& r, std::size_t a, const std::string& new_value, std::size_t o,
                      EffectKind kind, const Counterfactual& cf) const {
    EffectRecord e;
    e.record_id = r.id;
    e.attribute = schema_[a].name;
    e.old_value = r.record.values[a];
    e.new_value = new_value;
    e.outcome = schema_[o].name;
    e.factual = r.record.values[o];
    e.kind = kind;
    if (cf.parsed.status != ParseStatus::ok) {
      e.excluded = true;
      e.note = cf.parsed.reason;
      return e;
    }
    const auto& cv = cf.parsed.record.values;
    if (cv[a] != new_value) {
      e.excluded = true;
      e.note = "intervened value did not survive re-parsing";
      return e;
    }
    if (kind == EffectKind::direct) {
      for (std::size_t m = a + 1; m < o; ++m) {
        if (cv[m] != r.record.values[m]) {
          e.excluded = true;
          e.note = "intermediate attribute '" + schema_[m].name + "' changed";
          return e;
        }
      }
    }
    e.counterfactual = cv[o];
    return e;
  }

  const DistributionProvider& provider_;
  Tokenizer tok_;
  AttributeSchema schema_;
};

// ============================================================================
// Summaries
// ============================================================================

struct EffectSummary {
  EffectKind kind = EffectKind::total;
  std::string attribute, old_value, new_value, outcome;
  std::size_t n = 0;
  std::size_t excluded = 0;
  // numeric outcomes; median_shift compares group medians, the rest are paired
  std::optional<double> factual_median, counterfactual_median, median_shift, mean_shift, se_shift;
  // education-scaled outcomes
  std::optional<double> education_mean_diff;
  std::size_t education_n = 0;
  std::map<std::string, std::size_t> factual_hist, counterfactual_hist;
  std::map<std::pair<std::string, std::string>, std::size_t> flows;
};

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) throw DomainError("median of an empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

/// Groups by (kind, attribute, old, new, outcome), in that key order.
inline std::vector<EffectSummary> summarize_effects(std::span<const EffectRecord> records,
                                                    const AttributeSchema& schema) {
  if (records.empty()) throw DomainError("summary: no effect records");
  using Key = std::tuple<int, std::string, std::string, std::string, std::string>;
  std::map<Key, std::vector<const EffectRecord*>> groups;
  for (const auto& r : records)
    groups[{static_cast<int>(r.kind), r.attribute, r.old_value, r.new_value, r.outcome}].push_back(&r);

  std::vector<EffectSummary> out;
  for (const auto& [key, rs] : groups) {
    EffectSummary s;
    s.kind = rs.front()->kind;
    s.attribute = rs.front()->attribute;
    s.old_value = rs.front()->old_value;
    s.new_value = rs.front()->new_value;
    s.outcome = rs.front()->outcome;
    const auto oi = schema.index_of(s.outcome);
    const bool numeric = oi && schema[*oi].kind == AttributeKind::numeric;
    const bool education = oi && schema[*oi].scale == "education";

    std::vector<double> shifts, fvals, cvals;
    double edu_sum = 0.0;
    for (const auto* r : rs) {
      if (r->excluded) {
        ++s.excluded;
        continue;
      }
      ++s.n;
      ++s.factual_hist[r->factual];
      ++s.counterfactual_hist[r->counterfactual];
      ++s.flows[{r->factual, r->counterfactual}];
      if (numeric) {
        auto f = AttributeSchema::parse_number(r->factual), c = AttributeSchema::parse_number(r->counterfactual);
        if (f && c) {
          shifts.push_back(*c - *f);
          fvals.push_back(*f);
          cvals.push_back(*c);
        }
      }
      if (education) {
        auto f = education_to_numeric(r->factual), c = education_to_numeric(r->counterfactual);
        if (f && c) {
          edu_sum += *c - *f;
          ++s.education_n;
        }
      }
    }
    if (!shifts.empty()) {
      s.factual_median = median_of(fvals);
      s.counterfactual_median = median_of(cvals);
      s.median_shift = *s.counterfactual_median - *s.factual_median;
      double sum = 0.0;
      for (double x : shifts) sum += x;
      const double mean = sum / static_cast<double>(shifts.size());
      s.mean_shift = mean;
      double ss = 0.0;
      for (double x : shifts) ss += (x - mean) * (x - mean);
      s.se_shift = shifts.size() > 1 ? std::sqrt(ss / static_cast<double>(shifts.size() - 1) /
                                                 static_cast<double>(shifts.size()))
                                     : 0.0;
    }
    if (s.education_n) s.education_mean_diff = edu_sum / static_cast<double>(s.education_n);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string opt_field(const std::optional<double>& v) { return v ? format_double(*v, "%.6g") : ""; }

}  // namespace detail

/// Excluded rows carry an empty counterfactual.
inline void write_effects_csv(std::span<const EffectRecord> records, std::ostream& os) {
  using detail::csv_escape;
  os << "record_id,attribute,old,new,outcome,factual,counterfactual,kind\n";
  for (const auto& r : records)
    os << r.record_id << ',' << csv_escape(r.attribute) << ',' << csv_escape(r.old_value) << ','
       << csv_escape(r.new_value) << ',' << csv_escape(r.outcome) << ',' << csv_escape(r.factual) << ','
       << csv_escape(r.counterfactual) << ',' << to_string(r.kind) << '\n';
}

inline void write_summary_csv(std::span<const EffectSummary> sums, std::ostream& os) {
  using detail::csv_escape;
  os << "kind,attribute,old,new,outcome,n,excluded,factual_median,counterfactual_median,median_shift,mean_shift,"
        "se_shift,education_mean_diff\n";
  for (const auto& s : sums)
    os << to_string(s.kind) << ',' << csv_escape(s.attribute) << ',' << csv_escape(s.old_value) << ','
       << csv_escape(s.new_value) << ',' << csv_escape(s.outcome) << ',' << s.n << ',' << s.excluded << ','
       << detail::opt_field(s.factual_median) << ',' << detail::opt_field(s.counterfactual_median) << ','
       << detail::opt_field(s.median_shift) << ',' << detail::opt_field(s.mean_shift) << ','
       << detail::opt_field(s.se_shift) << ',' << detail::opt_field(s.education_mean_diff) << '\n';
}

inline void write_flows_csv(std::span<const EffectSummary> sums, std::ostream& os) {
  using detail::csv_escape;
  os << "kind,attribute,old,new,outcome,factual,counterfactual,count\n";
  for (const auto& s : sums)
    for (const auto& [fc, count] : s.flows)
      os << to_string(s.kind) << ',' << csv_escape(s.attribute) << ',' << csv_escape(s.old_value) << ','
         << csv_escape(s.new_value) << ',' << csv_escape(s.outcome) << ',' << csv_escape(fc.first) << ','
         << csv_escape(fc.second) << ',' << count << '\n';
}

inline nlohmann::ordered_json bias_report_json(const RecordBatch& batch, std::span<const EffectSummary> sums) {
  nlohmann::ordered_json j;
  j["records"] = {{"generated", batch.generated()},
                  {"parsed", batch.records.size()},
                  {"excluded_zero", batch.excluded_zero},
                  {"excluded_malformed", batch.excluded_malformed}};
  auto groups = nlohmann::ordered_json::array();
  for (const auto& s : sums) {
    nlohmann::ordered_json g;
    g["kind"] = to_string(s.kind);
    g["attribute"] = s.attribute;
    g["old"] = s.old_value;
    g["new"] = s.new_value;
    g["outcome"] = s.outcome;
    g["n"] = s.n;
    g["excluded"] = s.excluded;
    if (s.median_shift) {
      g["factual_median"] = *s.factual_median;
      g["counterfactual_median"] = *s.counterfactual_median;
      g["median_shift"] = *s.median_shift;
      g["mean_shift"] = *s.mean_shift;
      g["se_shift"] = *s.se_shift;
    }
    if (s.education_mean_diff) {
      g["education_mean_diff"] = *s.education_mean_diff;
      g["education_n"] = s.education_n;
    }
    g["factual_hist"] = s.factual_hist;
    g["counterfactual_hist"] = s.counterfactual_hist;
    groups.push_back(std::move(g));
  }
  j["groups"] = std::move(groups);
  return j;
}

}  // namespace cftoken
