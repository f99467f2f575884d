#pragma once

// Command-line front end. Exit codes: 0 success, 1 replay mismatch,
// 2 usage error, 3 runtime failure.

#include <cftoken/bias.hpp>
#include <cftoken/planted.hpp>
#include <cftoken/service.hpp>

#include "CLI11.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace cftoken::cli {

inline constexpr int kExitMismatch = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitFailure = 3;

inline std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
}

/// Writes to `path`, or to `fallback` when the path is empty.
template <class Fn>
void emit(const std::string& path, std::ostream& fallback, Fn&& fn) {
  if (path.empty()) {
    fn(fallback);
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  fn(os);
}

struct ModelFlags {
  std::string model;
  // remote endpoints only
  std::string vocab;
  std::size_t context_limit = 0;
  std::string tokenizer = "char";

  void add(CLI::App* app, bool required = true) {
    auto* o = app->add_option("--model", model, "model file, or http://host:port of a logits server");
    if (required) o->required();
    app->add_option("--vocab", vocab, "vocabulary file (remote models)");
    app->add_option("--context-limit", context_limit, "context window (remote models)");
    app->add_option("--tokenizer", tokenizer, "char or word (remote models)")->check(CLI::IsMember({"char", "word"}));
  }
};

inline LoadedModel load_model(const std::string& spec, const ModelFlags& flags) {
  if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) {
    if (flags.vocab.empty() || flags.context_limit == 0)
      throw DomainError("remote models need --vocab and --context-limit");
    std::ifstream is(flags.vocab, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + flags.vocab + "'");
    auto vocab = load_vocabulary(is);
    return {std::make_shared<RemoteProvider>(spec, std::move(vocab), flags.context_limit),
            Tokenizer(parse_tokenizer_kind(flags.tokenizer))};
  }
  auto m = std::make_shared<NGramModel>(model_from_json(nlohmann::json::parse(read_text(spec))));
  Tokenizer tok = m->tokenizer();
  return {std::move(m), tok};
}

struct SamplerFlags {
  std::string sampler = "gumbel";
  double tau = 1.0;
  std::optional<std::size_t> top_k;
  std::optional<double> top_p;

  void add(CLI::App* app, bool with_tau = true) {
    app->add_option("--sampler", sampler, "gumbel or its")->check(CLI::IsMember({"gumbel", "its"}));
    if (with_tau) app->add_option("--tau", tau, "temperature");
    app->add_option("--top-k", top_k, "restrict to the k most likely tokens");
    app->add_option("--top-p", top_p, "restrict to the smallest mass-p set");
  }

  SamplerConfig build(std::string_view kind, double t) const {
    if (top_k && top_p) throw CLI::ValidationError("--top-k and --top-p are mutually exclusive");
    SamplerConfig c;
    if (kind == "its") {
      if (top_k || top_p) throw CLI::ValidationError("--top-k/--top-p apply to the gumbel sampler only");
      c = SamplerConfig::inverse_transform(t);
    } else if (top_k) {
      c = SamplerConfig::top_k(*top_k, t);
    } else if (top_p) {
      c = SamplerConfig::top_p(*top_p, t);
    } else {
      c = SamplerConfig::gumbel(t);
    }
    try {
      c.validate();
    } catch (const DomainError& e) {
      throw CLI::ValidationError(e.what());
    }
    return c;
  }
  SamplerConfig build() const { return build(sampler, tau); }
};

inline std::vector<TokenSequence> read_prompts(const std::string& path, const LoadedModel& m) {
  std::vector<TokenSequence> prompts;
  std::istringstream is(read_text(path));
  for (std::string line; std::getline(is, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    prompts.push_back(m.tokenizer.encode(line, m.provider->vocabulary()));
  }
  return prompts;
}

inline std::pair<std::string, int> split_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw DomainError("bind address must be host:port");
  return {bind.substr(0, colon), std::stoi(bind.substr(colon + 1))};
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Counterfactual token generation with Gumbel-Max structural causal models"};
  app.require_subcommand(1);

  // train
  struct {
    std::string corpus, out, tokenizer = "char", model_id = "ngram";
    std::size_t order = 3;
    double alpha = 0.1;
  } train;
  auto* c_train = app.add_subcommand("train", "train an add-alpha n-gram model on a text corpus");
  c_train->add_option("--corpus", train.corpus, "corpus text file")->required();
  c_train->add_option("--order", train.order, "n-gram order n")->check(CLI::PositiveNumber);
  c_train->add_option("--alpha", train.alpha, "additive smoothing constant")->check(CLI::PositiveNumber);
  c_train->add_option("--tokenizer", train.tokenizer, "char or word")->check(CLI::IsMember({"char", "word"}));
  c_train->add_option("--model-id", train.model_id, "identifier recorded in sessions");
  c_train->add_option("--out", train.out, "model file to write")->required();

  // generate
  ModelFlags gen_model;
  SamplerFlags gen_sampler;
  struct {
    std::string prompt, out;
    std::uint64_t seed = 0;
    std::size_t max_steps = 64;
  } gen;
  auto* c_gen = app.add_subcommand("generate", "sample a continuation and record the session");
  gen_model.add(c_gen);
  gen_sampler.add(c_gen);
  c_gen->add_option("--prompt", gen.prompt, "prompt text");
  c_gen->add_option("--seed", gen.seed, "noise seed");
  c_gen->add_option("--max-steps", gen.max_steps, "generation budget K")->check(CLI::PositiveNumber);
  c_gen->add_option("--out", gen.out, "session file to write");

  // intervene
  ModelFlags iv_model;
  struct {
    std::string session, replacement, mode = "counterfactual", out, diff = "positional";
    std::size_t position = 0;
    std::optional<std::uint64_t> fresh_seed;
    bool replacement_is_tokens = false;
  } iv;
  auto* c_iv = app.add_subcommand("intervene", "replace a generated token and regenerate the rest");
  iv_model.add(c_iv);
  c_iv->add_option("--session", iv.session, "session file")->required();
  c_iv->add_option("--position", iv.position, "1-based output position")->required()->check(CLI::PositiveNumber);
  c_iv->add_option("--replacement", iv.replacement, "replacement text (tokenized with the model)")->required();
  c_iv->add_flag("--token-ids", iv.replacement_is_tokens, "read --replacement as comma-separated token indices");
  c_iv->add_option("--mode", iv.mode, "counterfactual or interventional")
      ->check(CLI::IsMember({"counterfactual", "interventional"}));
  c_iv->add_option("--fresh-seed", iv.fresh_seed, "noise seed for interventional mode");
  c_iv->add_option("--diff", iv.diff, "positional or alignment")->check(CLI::IsMember({"positional", "alignment"}));
  c_iv->add_option("--out", iv.out, "result JSON to write");

  // replay
  ModelFlags rp_model;
  std::string rp_session;
  auto* c_rp = app.add_subcommand("replay", "check that a session regenerates token for token");
  rp_model.add(c_rp);
  c_rp->add_option("--session", rp_session, "session file")->required();

  // experiment
  ModelFlags ex_model;
  SamplerFlags ex_sampler;
  struct {
    std::string prompts, rows_csv, out;
    std::vector<double> taus = {0.4, 0.6, 0.8, 1.0, 1.2};
    std::vector<std::string> samplers = {"gumbel"};
    std::uint64_t seed = 0;
    std::size_t max_steps = 64;
    unsigned threads = 0;
  } ex;
  auto* c_ex = app.add_subcommand("experiment", "edit-distance experiment over a sampler grid");
  ex_model.add(c_ex);
  c_ex->add_option("--prompts", ex.prompts, "prompt file, one per line")->required();
  c_ex->add_option("--tau", ex.taus, "temperatures (repeatable)");
  c_ex->add_option("--sampler", ex.samplers, "gumbel and/or its (repeatable)")
      ->check(CLI::IsMember({"gumbel", "its"}));
  c_ex->add_option("--top-k", ex_sampler.top_k, "restrict gumbel cells to the k most likely tokens");
  c_ex->add_option("--top-p", ex_sampler.top_p, "restrict gumbel cells to the smallest mass-p set");
  c_ex->add_option("--seed", ex.seed, "experiment seed");
  c_ex->add_option("--max-steps", ex.max_steps, "generation budget K")->check(CLI::PositiveNumber);
  c_ex->add_option("--threads", ex.threads, "worker threads (0 = all cores)");
  c_ex->add_option("--rows-csv", ex.rows_csv, "per-row CSV");
  c_ex->add_option("--out,--aggregate-csv", ex.out, "aggregate CSV (default: stdout)");

  // bias
  ModelFlags bi_model;
  SamplerFlags bi_sampler;
  struct {
    std::string schema, effects_csv, summary_csv, flows_csv, report;
    std::vector<std::string> attributes, values;
    std::size_t records = 200, max_steps = 64;
    std::uint64_t seed = 0;
    unsigned threads = 0;
  } bi;
  auto* c_bi = app.add_subcommand("bias", "total and direct effects of attribute interventions");
  bi_model.add(c_bi);
  bi_sampler.add(c_bi);
  c_bi->add_option("--schema", bi.schema, "attribute schema JSON")->required();
  c_bi->add_option("--attribute", bi.attributes, "attribute to intervene on (repeatable)")->required();
  c_bi->add_option("--value", bi.values, "new values (default: every other categorical value)");
  c_bi->add_option("--records", bi.records, "sessions to generate")->check(CLI::PositiveNumber);
  c_bi->add_option("--seed", bi.seed, "generation seed");
  c_bi->add_option("--max-steps", bi.max_steps, "generation budget K")->check(CLI::PositiveNumber);
  c_bi->add_option("--threads", bi.threads, "worker threads (0 = all cores)");
  c_bi->add_option("--effects-csv", bi.effects_csv, "per-record effects CSV");
  c_bi->add_option("--out,--summary-csv", bi.summary_csv, "summary CSV (default: stdout)");
  c_bi->add_option("--flows-csv", bi.flows_csv, "factual -> counterfactual value counts");
  c_bi->add_option("--report", bi.report, "JSON report");

  // planted
  struct {
    std::string variant = "mediated", out, schema_out;
    std::uint64_t seed = 7;
  } pl;
  auto* c_pl = app.add_subcommand("planted", "write a synthetic census corpus with known dependencies");
  c_pl->add_option("--variant", pl.variant, "mediated or direct")->check(CLI::IsMember({"mediated", "direct"}));
  c_pl->add_option("--seed", pl.seed, "shuffle seed");
  c_pl->add_option("--out", pl.out, "corpus file")->required();
  c_pl->add_option("--schema-out", pl.schema_out, "schema JSON file");

  // serve
  ModelFlags sv_model;
  struct {
    std::vector<std::string> models;
    std::string store = "cf_store", bind = "127.0.0.1:8080";
  } sv;
  auto* c_sv = app.add_subcommand("serve", "HTTP API under /v1");
  c_sv->add_option("--model", sv.models, "model file (repeatable)")->required();
  c_sv->add_option("--vocab", sv_model.vocab, "vocabulary file (remote models)");
  c_sv->add_option("--context-limit", sv_model.context_limit, "context window (remote models)");
  c_sv->add_option("--tokenizer", sv_model.tokenizer, "char or word (remote models)")
      ->check(CLI::IsMember({"char", "word"}));
  c_sv->add_option("--store", sv.store, "store root")->envname("CF_ENGINE_STORE");
  c_sv->add_option("--bind", sv.bind, "host:port")->envname("CF_ENGINE_BIND");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*c_train) {
      auto model = train_ngram_from_text(read_text(train.corpus), train.order, train.alpha,
                                         parse_tokenizer_kind(train.tokenizer));
      model.set_model_id(train.model_id);
      write_text(train.out, model_to_json(model).dump() + "\n");
      out << "trained order-" << train.order << " model: " << model.vocabulary().size() << " tokens, "
          << model.rows().size() << " contexts\n";
      return 0;
    }

    if (*c_gen) {
      const auto sampler = gen_sampler.build();
      const auto m = load_model(gen_model.model, gen_model);
      const auto prompt = m.tokenizer.encode(gen.prompt, m.provider->vocabulary());
      const auto s = generate(*m.provider, prompt, sampler, gen.seed, gen.max_steps);
      if (!gen.out.empty()) write_text(gen.out, session_to_json(s).dump(2) + "\n");
      out << m.tokenizer.decode(detail::concat(s.prompt, s.output), m.provider->vocabulary()) << "\n";
      return 0;
    }

    if (*c_iv) {
      const auto m = load_model(iv_model.model, iv_model);
      const auto s = session_from_json(nlohmann::json::parse(read_text(iv.session)));
      TokenSequence repl;
      if (iv.replacement_is_tokens) {
        std::istringstream is(iv.replacement);
        for (std::string f; std::getline(is, f, ',');) repl.push_back(static_cast<TokenId>(std::stoul(f)));
      } else {
        repl = m.tokenizer.encode(iv.replacement, m.provider->vocabulary());
      }
      const auto mode = parse_mode(iv.mode);
      if (mode == RegenerationMode::interventional && !iv.fresh_seed)
        throw CLI::ValidationError("--fresh-seed is required in interventional mode");
      const auto intervention = Intervention::replace_span(s, iv.position, repl);
      const auto r = regenerate(*m.provider, s, intervention, mode, iv.fresh_seed.value_or(0));
      if (r.warning) err << "warning: " << *r.warning << "\n";
      const std::span<const TokenId> f(s.output), g(r.output);
      const auto flags = iv.diff == "alignment" ? alignment_diff(f, g) : positional_diff(f, g);
      if (!iv.out.empty()) {
        nlohmann::ordered_json j;
        j["mode"] = iv.mode;
        j["intervention"] = intervention_to_json(intervention);
        j["output"] = r.output;
        j["prefix_length"] = r.prefix_length;
        j["truncated"] = r.truncated;
        auto d = nlohmann::ordered_json::array();
        for (auto fl : flags) d.push_back(to_string(fl));
        j["diff"] = std::move(d);
        write_text(iv.out, j.dump(2) + "\n");
      }
      out << m.tokenizer.decode(detail::concat(r.prompt, r.output), m.provider->vocabulary()) << "\n";
      return 0;
    }

    if (*c_rp) {
      const auto m = load_model(rp_model.model, rp_model);
      const auto s = session_from_json(nlohmann::json::parse(read_text(rp_session)));
      const auto rep = verify_replay(*m.provider, s);
      if (rep.identical) {
        out << "replay identical: " << s.output.size() << " tokens\n";
        return 0;
      }
      err << "replay mismatch";
      if (rep.first_divergence) {
        const std::size_t i = *rep.first_divergence;
        const auto& v = m.provider->vocabulary();
        err << " at output position " << i + 1 << ": recorded "
            << (i < s.output.size() ? "'" + v.token(s.output[i]) + "'" : std::string("<end>")) << ", replayed "
            << (i < rep.replayed.size() ? "'" + v.token(rep.replayed[i]) + "'" : std::string("<end>"));
      }
      if (rep.first_fingerprint_mismatch)
        err << "; distribution changed first at step " << *rep.first_fingerprint_mismatch;
      err << "\n";
      return kExitMismatch;
    }

    if (*c_ex) {
      const auto m = load_model(ex_model.model, ex_model);
      const auto prompts = read_prompts(ex.prompts, m);
      std::vector<SamplerConfig> grid;
      for (const auto& kind : ex.samplers)
        for (double t : ex.taus) grid.push_back(ex_sampler.build(kind, t));
      ExperimentOptions opts;
      opts.seed = ex.seed;
      opts.max_steps = ex.max_steps;
      opts.threads = ex.threads;
      const auto res = run_similarity_experiment(*m.provider, prompts, grid, opts);
      if (!ex.rows_csv.empty()) emit(ex.rows_csv, out, [&](std::ostream& os) { write_rows_csv(res, os); });
      emit(ex.out, out, [&](std::ostream& os) { write_aggregate_csv(res, os); });
      err << "sessions skipped as too short: " << res.skipped_short << "\n";
      return 0;
    }

    if (*c_bi) {
      const auto sampler = bi_sampler.build();
      const auto m = load_model(bi_model.model, bi_model);
      BiasLab lab(*m.provider, m.tokenizer, schema_from_json(nlohmann::json::parse(read_text(bi.schema))));
      RecordOptions ropts;
      ropts.sampler = sampler;
      ropts.max_steps = bi.max_steps;
      ropts.threads = bi.threads;
      const auto batch = lab.generate(bi.records, bi.seed, ropts);
      std::vector<EffectRecord> effects;
      for (const auto& a : bi.attributes) {
        auto e = lab.run(batch, a, bi.values, bi.threads);
        std::move(e.begin(), e.end(), std::back_inserter(effects));
      }
      if (effects.empty()) throw DomainError("bias: no interventions to run");
      const auto sums = summarize_effects(effects, lab.schema());
      if (!bi.effects_csv.empty())
        emit(bi.effects_csv, out, [&](std::ostream& os) { write_effects_csv(effects, os); });
      if (!bi.flows_csv.empty()) emit(bi.flows_csv, out, [&](std::ostream& os) { write_flows_csv(sums, os); });
      if (!bi.report.empty()) write_text(bi.report, bias_report_json(batch, sums).dump(2) + "\n");
      emit(bi.summary_csv, out, [&](std::ostream& os) { write_summary_csv(sums, os); });
      err << "records: " << batch.generated() << " generated, " << batch.records.size() << " parsed, "
          << batch.excluded_zero << " zero-income, " << batch.excluded_malformed << " malformed\n";
      return 0;
    }

    if (*c_pl) {
      write_text(pl.out, planted_corpus(parse_planted_variant(pl.variant), pl.seed));
      if (!pl.schema_out.empty()) write_text(pl.schema_out, schema_to_json(planted_schema()).dump(2) + "\n");
      return 0;
    }

    if (*c_sv) {
      ModelRegistry reg;
      for (const auto& spec : sv.models) {
        auto m = load_model(spec, sv_model);
        reg.add(m.provider, m.tokenizer);
      }
      SessionStore store(sv.store);
      Service service(std::move(reg), store);
      const auto [host, port] = split_bind(sv.bind);
      out << "listening on " << host << ":" << port << " (store " << sv.store << ")\n" << std::flush;
      if (!service.listen(host, port)) throw std::runtime_error("cannot bind " + sv.bind);
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace cftoken::cli
