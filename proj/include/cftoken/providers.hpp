#pragma once

// Distribution providers: the f_D side of the token generation SCM. A
// provider maps a token context to next-token logits and must be a pure
// function of that context.

#include <cftoken/core_types.hpp>
#include <cftoken/tokenizer.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace cftoken {

class DistributionProvider {
 public:
  virtual ~DistributionProvider() = default;

  virtual const Vocabulary& vocabulary() const = 0;
  /// Maximum number of trailing context tokens the provider looks at.
  virtual std::size_t context_limit() const = 0;
  virtual std::string model_id() const = 0;
  virtual std::vector<double> next_logits(std::span<const TokenId> context) const = 0;
};

inline std::span<const TokenId> trailing(std::span<const TokenId> context, std::size_t limit) {
  return context.size() > limit ? context.last(limit) : context;
}

// ============================================================================
// Lookup table
// ============================================================================

/// Stored logit rows keyed by trailing context. The longest stored suffix of
/// the context (up to `window` tokens) wins; the empty key is the default row.
class LookupTableProvider final : public DistributionProvider {
 public:
  LookupTableProvider(Vocabulary vocab, std::size_t window, std::vector<double> default_row,
                      std::string id = "lookup")
      : vocab_(std::move(vocab)), window_(window), id_(std::move(id)) {
    set_row({}, std::move(default_row));
  }

  void set_row(TokenSequence key, std::vector<double> logits) {
    if (logits.size() != vocab_.size()) throw DomainError("lookup table: row length != vocabulary size");
    if (key.size() > window_) throw DomainError("lookup table: key longer than window");
    vocab_.validate(key);
    rows_[std::move(key)] = std::move(logits);
  }

  /// Row putting all mass on one token.
  std::vector<double> point_mass_row(TokenId t) const {
    std::vector<double> row(vocab_.size(), -std::numeric_limits<double>::infinity());
    row.at(t) = 0.0;
    return row;
  }

  const Vocabulary& vocabulary() const override { return vocab_; }
  std::size_t context_limit() const override { return window_; }
  std::string model_id() const override { return id_; }

  std::vector<double> next_logits(std::span<const TokenId> context) const override {
    vocab_.validate(context);
    auto ctx = trailing(context, window_);
    for (std::size_t len = ctx.size() + 1; len-- > 0;) {
      auto key = ctx.last(len);
      auto it = rows_.find(TokenSequence(key.begin(), key.end()));
      if (it != rows_.end()) return it->second;
    }
    return rows_.at({});
  }

 private:
  Vocabulary vocab_;
  std::size_t window_;
  std::string id_;
  std::map<TokenSequence, std::vector<double>> rows_;
};

// ============================================================================
// Add-alpha smoothed n-gram model
// ============================================================================

class NGramModel final : public DistributionProvider {
 public:
  struct Row {
    std::vector<std::uint32_t> counts;
    std::uint64_t total = 0;
    friend bool operator==(const Row&, const Row&) = default;
  };

  NGramModel(Vocabulary vocab, std::size_t order, double alpha, TokenizerKind tokenizer,
             std::string id = "ngram")
      : vocab_(std::move(vocab)), order_(order), alpha_(alpha), tokenizer_(tokenizer), id_(std::move(id)) {
    if (order_ < 1) throw DomainError("ngram: order must be >= 1");
    if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw DomainError("ngram: alpha must be positive");
  }

  const Vocabulary& vocabulary() const override { return vocab_; }
  std::size_t context_limit() const override { return order_ - 1; }
  std::string model_id() const override { return id_; }

  std::size_t order() const { return order_; }
  double alpha() const { return alpha_; }
  TokenizerKind tokenizer_kind() const { return tokenizer_; }
  Tokenizer tokenizer() const { return Tokenizer(tokenizer_); }
  const std::map<TokenSequence, Row>& rows() const { return rows_; }
  void set_model_id(std::string id) { id_ = std::move(id); }

  void add(std::span<const TokenId> context, TokenId next, std::uint32_t count = 1) {
    auto& row = rows_[TokenSequence(context.begin(), context.end())];
    if (row.counts.empty()) row.counts.assign(vocab_.size(), 0);
    row.counts.at(next) += count;
    row.total += count;
  }

  /// log((count + alpha) / (total + alpha |V|)) over the last n-1 tokens.
  /// Contexts never seen in training (including ones shorter than n-1)
  /// yield the uniform distribution.
  std::vector<double> next_logits(std::span<const TokenId> context) const override {
    vocab_.validate(context);
    auto ctx = trailing(context, context_limit());
    const double v = static_cast<double>(vocab_.size());
    auto it = rows_.find(TokenSequence(ctx.begin(), ctx.end()));
    if (it == rows_.end()) return std::vector<double>(vocab_.size(), -std::log(v));
    const auto& row = it->second;
    const double denom = std::log(static_cast<double>(row.total) + alpha_ * v);
    std::vector<double> logits(vocab_.size());
    for (std::size_t t = 0; t < logits.size(); ++t) logits[t] = std::log(row.counts[t] + alpha_) - denom;
    return logits;
  }

  friend bool operator==(const NGramModel& a, const NGramModel& b) {
    return a.vocab_ == b.vocab_ && a.order_ == b.order_ && a.alpha_ == b.alpha_ &&
           a.tokenizer_ == b.tokenizer_ && a.rows_ == b.rows_;
  }

 private:
  Vocabulary vocab_;
  std::size_t order_;
  double alpha_;
  TokenizerKind tokenizer_;
  std::string id_;
  std::map<TokenSequence, Row> rows_;
};

/// Counts every n-gram of the token stream once. Documents are expected to be
/// concatenated with the end-of-sequence token after each.
inline NGramModel train_ngram(std::span<const TokenId> stream, const Vocabulary& vocab, std::size_t n,
                              double alpha, TokenizerKind tokenizer = TokenizerKind::character) {
  NGramModel model(vocab, n, alpha, tokenizer);
  if (stream.size() < n) throw DomainError("ngram: corpus shorter than the model order");
  for (TokenId t : stream)
    if (!vocab.contains(t)) throw DomainError("ngram: unknown token in corpus");
  for (std::size_t i = n - 1; i < stream.size(); ++i)
    model.add(stream.subspan(i - (n - 1), n - 1), stream[i]);
  return model;
}

/// Tokenizes a corpus, builds its vocabulary and trains on it.
inline NGramModel train_ngram_from_text(std::string_view corpus, std::size_t n, double alpha,
                                        TokenizerKind kind = TokenizerKind::character) {
  Tokenizer tok(kind);
  auto docs = tok.documents(corpus);
  auto vocab = build_vocabulary(docs);
  TokenSequence stream;
  for (const auto& doc : docs) {
    for (const auto& s : doc) stream.push_back(vocab.id_of(s));
    stream.push_back(vocab.eos());
  }
  return train_ngram(stream, vocab, n, alpha, kind);
}

// ---------------------------------------------------------------------------
// Persistence: a versioned JSON container, see docs/formats.md.

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::ordered_json model_to_json(const NGramModel& m) {
  nlohmann::ordered_json j;
  j["format"] = "cftoken-ngram";
  j["version"] = kModelFormatVersion;
  j["model_id"] = m.model_id();
  j["order"] = m.order();
  j["alpha"] = m.alpha();
  j["tokenizer"] = to_string(m.tokenizer_kind());
  j["vocabulary"] = {{"eos_index", m.vocabulary().eos()}, {"tokens", m.vocabulary().tokens()}};
  auto rows = nlohmann::ordered_json::array();
  for (const auto& [ctx, row] : m.rows()) {
    auto next = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < row.counts.size(); ++t)
      if (row.counts[t] != 0) next.push_back({t, row.counts[t]});
    rows.push_back({{"context", ctx}, {"next", next}});
  }
  j["rows"] = std::move(rows);
  return j;
}

inline NGramModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "cftoken-ngram") throw DomainError("model file: not a cftoken-ngram container");
  if (j.at("version").get<int>() != kModelFormatVersion)
    throw DomainError("model file: unsupported version " + j.at("version").dump());
  Vocabulary vocab(j.at("vocabulary").at("tokens").get<std::vector<std::string>>(),
                   j.at("vocabulary").at("eos_index").get<TokenId>());
  NGramModel m(std::move(vocab), j.at("order").get<std::size_t>(), j.at("alpha").get<double>(),
               parse_tokenizer_kind(j.at("tokenizer").get<std::string>()),
               j.value("model_id", std::string("ngram")));
  for (const auto& row : j.at("rows")) {
    auto ctx = row.at("context").get<TokenSequence>();
    if (ctx.size() != m.context_limit()) throw DomainError("model file: context length != order - 1");
    for (TokenId t : ctx)
      if (!m.vocabulary().contains(t)) throw DomainError("model file: unknown token index");
    for (const auto& e : row.at("next")) {
      auto t = e.at(0).get<TokenId>();
      if (!m.vocabulary().contains(t)) throw DomainError("model file: unknown token index");
      m.add(ctx, t, e.at(1).get<std::uint32_t>());
    }
  }
  return m;
}

}  // namespace cftoken
