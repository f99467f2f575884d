#pragma once

// Vocabulary, token sequences and the probability-vector arithmetic used to
// turn model logits into the distribution a sampler consumes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cftoken {

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

/// Precondition or contract violation on user-supplied values.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tolerance on sum-to-one after normalization.
inline constexpr double kProbTolerance = 1e-9;

// ============================================================================
// Vocabulary
// ============================================================================

class Vocabulary {
 public:
  Vocabulary() = default;

  Vocabulary(std::vector<std::string> tokens, TokenId eos_index)
      : tokens_(std::move(tokens)), eos_(eos_index) {
    if (tokens_.empty()) throw DomainError("vocabulary: empty token list");
    if (eos_ >= tokens_.size()) throw DomainError("vocabulary: eos index out of range");
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].empty()) throw DomainError("vocabulary: empty token string");
      auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
      if (!inserted) throw DomainError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }

  std::size_t size() const { return tokens_.size(); }
  TokenId eos() const { return eos_; }
  bool contains(TokenId id) const { return id < tokens_.size(); }
  const std::string& token(TokenId id) const {
    if (!contains(id)) throw DomainError("vocabulary: unknown token index " + std::to_string(id));
    return tokens_[id];
  }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<TokenId> find(const std::string& surface) const {
    auto it = index_.find(surface);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TokenId id_of(const std::string& surface) const {
    auto id = find(surface);
    if (!id) throw DomainError("vocabulary: unknown token '" + surface + "'");
    return *id;
  }

  /// Checks indices and the "eos only in final position" rule. max_length 0
  /// means unbounded.
  void validate(std::span<const TokenId> seq, std::size_t max_length = 0) const {
    if (max_length != 0 && seq.size() > max_length)
      throw DomainError("token sequence longer than " + std::to_string(max_length));
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (!contains(seq[i]))
        throw DomainError("unknown token index " + std::to_string(seq[i]));
      if (seq[i] == eos_ && i + 1 != seq.size())
        throw DomainError("end-of-sequence token before the final position");
    }
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.eos_ == b.eos_ && a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId eos_ = 0;
};

namespace detail {

inline std::string escape_line(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string unescape_line(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i == s.size()) throw DomainError("vocabulary file: dangling escape");
    switch (s[i]) {
      case '\\': out += '\\'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      case 't': out += '\t'; break;
      default: throw DomainError(std::string("vocabulary file: bad escape \\") + s[i]);
    }
  }
  return out;
}

}  // namespace detail

// Line format: "eos<TAB><index>" header, then one escaped token per line.
inline void save_vocabulary(const Vocabulary& vocab, std::ostream& os) {
  os << "eos\t" << vocab.eos() << '\n';
  for (const auto& t : vocab.tokens()) os << detail::escape_line(t) << '\n';
}

inline Vocabulary load_vocabulary(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("eos\t", 0) != 0)
    throw DomainError("vocabulary file: missing 'eos<TAB>index' header");
  TokenId eos = 0;
  try {
    eos = static_cast<TokenId>(std::stoul(line.substr(4)));
  } catch (const std::exception&) {
    throw DomainError("vocabulary file: bad eos index");
  }
  std::vector<std::string> tokens;
  while (std::getline(is, line)) tokens.push_back(detail::unescape_line(line));
  return Vocabulary(std::move(tokens), eos);
}

// ============================================================================
// TokenDistribution
// ============================================================================

/// Non-negative probability vector summing to one within kProbTolerance.
/// Only constructible through validated factories.
class TokenDistribution {
 public:
  static TokenDistribution from_probs(std::vector<double> probs) {
    if (probs.empty()) throw DomainError("distribution: empty");
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("distribution: invalid entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kProbTolerance) throw DomainError("distribution: does not sum to 1");
    return TokenDistribution(std::move(probs));
  }

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }

  std::size_t support_size() const {
    return static_cast<std::size_t>(
        std::count_if(probs_.begin(), probs_.end(), [](double p) { return p > 0.0; }));
  }

  TokenId argmax() const {
    return static_cast<TokenId>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
  }

  friend bool operator==(const TokenDistribution&, const TokenDistribution&) = default;

 private:
  explicit TokenDistribution(std::vector<double> probs) : probs_(std::move(probs)) {}
  friend TokenDistribution normalize(std::span<const double> weights);

  std::vector<double> probs_;
};

inline TokenDistribution normalize(std::span<const double> weights) {
  if (weights.empty()) throw DomainError("normalize: empty weight vector");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("normalize: negative or non-finite weight");
    sum += w;
  }
  if (sum <= 0.0) throw DomainError("normalize: all weights are zero");
  std::vector<double> probs(weights.begin(), weights.end());
  for (double& p : probs) p /= sum;
  return TokenDistribution(std::move(probs));
}

/// Softmax of logits / tau. -inf logits are allowed and map to probability 0;
/// NaN and +inf are rejected.
inline TokenDistribution apply_temperature(std::span<const double> logits, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("temperature must be positive and finite");
  if (logits.empty()) throw DomainError("apply_temperature: empty logits");
  double max_logit = -std::numeric_limits<double>::infinity();
  for (double l : logits) {
    if (std::isnan(l)) throw DomainError("apply_temperature: NaN logit");
    if (l == std::numeric_limits<double>::infinity()) throw DomainError("apply_temperature: +inf logit");
    max_logit = std::max(max_logit, l);
  }
  if (!std::isfinite(max_logit)) throw DomainError("apply_temperature: no finite logit");
  std::vector<double> weights(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) weights[i] = std::exp((logits[i] - max_logit) / tau);
  return normalize(weights);
}

/// Token indices ordered by descending probability, lower index first on ties.
inline std::vector<TokenId> descending_order(const TokenDistribution& d) {
  std::vector<TokenId> order(d.size());
  std::iota(order.begin(), order.end(), TokenId{0});
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return d[a] > d[b]; });
  return order;
}

namespace detail {

inline TokenDistribution keep_only(const TokenDistribution& d, std::span<const TokenId> kept) {
  std::vector<double> w(d.size(), 0.0);
  for (TokenId t : kept) w[t] = d[t];
  return normalize(w);
}

}  // namespace detail

inline TokenDistribution restrict_top_k(const TokenDistribution& d, std::size_t k) {
  if (k < 1 || k > d.size()) throw DomainError("top-k: k out of range");
  if (k == d.size()) return d;
  auto order = descending_order(d);
  return detail::keep_only(d, std::span<const TokenId>(order).first(k));
}

/// Smallest most-probable prefix whose mass reaches p.
inline TokenDistribution restrict_top_p(const TokenDistribution& d, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw DomainError("top-p: p must lie in (0, 1]");
  auto order = descending_order(d);
  double mass = 0.0;
  std::size_t kept = 0;
  while (kept < order.size() && d[order[kept]] > 0.0) {
    mass += d[order[kept]];
    ++kept;
    if (mass >= p - kProbTolerance) break;
  }
  if (kept == d.support_size()) return d;
  return detail::keep_only(d, std::span<const TokenId>(order).first(kept));
}

}  // namespace cftoken
