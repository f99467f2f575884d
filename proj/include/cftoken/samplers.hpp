#pragma once

// Sampling mechanisms f_T(d, u): the Gumbel-Max SCM, its top-k / top-p
// restricted variants, and inverse-transform sampling.

#include <cftoken/core_types.hpp>
#include <cftoken/noise.hpp>

#include <limits>
#include <optional>
#include <string>
#include <string_view>

namespace cftoken {

enum class SamplerKind { gumbel_max, gumbel_max_top_k, gumbel_max_top_p, inverse_transform };

inline std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::gumbel_max: return "gumbel_max";
    case SamplerKind::gumbel_max_top_k: return "gumbel_max_top_k";
    case SamplerKind::gumbel_max_top_p: return "gumbel_max_top_p";
    case SamplerKind::inverse_transform: return "inverse_transform";
  }
  return "?";
}

inline SamplerKind parse_sampler_kind(std::string_view s) {
  if (s == "gumbel_max") return SamplerKind::gumbel_max;
  if (s == "gumbel_max_top_k") return SamplerKind::gumbel_max_top_k;
  if (s == "gumbel_max_top_p") return SamplerKind::gumbel_max_top_p;
  if (s == "inverse_transform") return SamplerKind::inverse_transform;
  throw DomainError("unknown sampler kind '" + std::string(s) + "'");
}

struct SamplerConfig {
  SamplerKind kind = SamplerKind::gumbel_max;
  double tau = 1.0;
  std::optional<std::size_t> k;
  std::optional<double> p;

  static SamplerConfig gumbel(double tau = 1.0) { return {SamplerKind::gumbel_max, tau, {}, {}}; }
  static SamplerConfig top_k(std::size_t k, double tau = 1.0) {
    return {SamplerKind::gumbel_max_top_k, tau, k, {}};
  }
  static SamplerConfig top_p(double p, double tau = 1.0) {
    return {SamplerKind::gumbel_max_top_p, tau, {}, p};
  }
  static SamplerConfig inverse_transform(double tau = 1.0) {
    return {SamplerKind::inverse_transform, tau, {}, {}};
  }

  bool uses_gumbel() const { return kind != SamplerKind::inverse_transform; }

  void validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("sampler: tau must be positive");
    if (k.has_value() != (kind == SamplerKind::gumbel_max_top_k))
      throw DomainError("sampler: k is required exactly for gumbel_max_top_k");
    if (p.has_value() != (kind == SamplerKind::gumbel_max_top_p))
      throw DomainError("sampler: p is required exactly for gumbel_max_top_p");
    if (k && *k < 1) throw DomainError("sampler: k must be positive");
    if (p && !(*p > 0.0 && *p <= 1.0)) throw DomainError("sampler: p must lie in (0, 1]");
  }

  friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
};

/// Applies the config's support restriction (identity for unrestricted kinds).
/// Not idempotent for top-p, so callers restrict exactly once per step.
inline TokenDistribution restrict_support(const TokenDistribution& d, const SamplerConfig& cfg) {
  switch (cfg.kind) {
    case SamplerKind::gumbel_max_top_k: return restrict_top_k(d, std::min(*cfg.k, d.size()));
    case SamplerKind::gumbel_max_top_p: return restrict_top_p(d, *cfg.p);
    default: return d;
  }
}

/// Temperature first, then restriction.
inline TokenDistribution prepare_distribution(std::span<const double> logits, const SamplerConfig& cfg) {
  return restrict_support(apply_temperature(logits, cfg.tau), cfg);
}

/// argmax over support(d) of log d_t + u_t; zero-probability tokens are
/// excluded outright, exact ties go to the lower index.
inline TokenId gumbel_max_sample(const TokenDistribution& d, std::span<const double> u) {
  if (u.size() != d.size()) throw DomainError("gumbel_max_sample: noise/vocabulary size mismatch");
  double best = -std::numeric_limits<double>::infinity();
  std::optional<TokenId> arg;
  for (std::size_t t = 0; t < d.size(); ++t) {
    if (d[t] <= 0.0) continue;
    const double score = std::log(d[t]) + u[t];
    if (!arg || score > best) {
      best = score;
      arg = static_cast<TokenId>(t);
    }
  }
  if (!arg) throw DomainError("gumbel_max_sample: empty support");
  return *arg;
}

inline TokenId restricted_gumbel_max_sample(const TokenDistribution& d, std::span<const double> u,
                                            const SamplerConfig& cfg) {
  if (cfg.kind != SamplerKind::gumbel_max_top_k && cfg.kind != SamplerKind::gumbel_max_top_p)
    throw DomainError("restricted_gumbel_max_sample: config is not a restricted variant");
  return gumbel_max_sample(restrict_support(d, cfg), u);
}

/// Smallest index whose cumulative probability reaches u.
inline TokenId its_sample(const TokenDistribution& d, double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("its_sample: u must lie in (0, 1)");
  double cum = 0.0;
  std::optional<TokenId> last_supported;
  for (std::size_t j = 0; j < d.size(); ++j) {
    if (d[j] <= 0.0) continue;
    cum += d[j];
    last_supported = static_cast<TokenId>(j);
    if (cum >= u) return *last_supported;
  }
  // Rounding left the total a hair below u.
  return *last_supported;
}

/// One generation step on an already prepared distribution: draws the noise
/// for `step` from the provenance and applies the mechanism.
inline TokenId sample_step(const TokenDistribution& prepared, const SamplerConfig& cfg,
                           const NoiseProvenance& noise, std::size_t step) {
  if (cfg.uses_gumbel()) return gumbel_max_sample(prepared, gumbel_vector(noise, step, prepared.size()));
  return its_sample(prepared, uniform_scalar(noise, step));
}

}  // namespace cftoken
