#pragma once

// Autoregressive generation with recorded noise provenance, and the three
// regeneration modes built on it:
//
//   factual         t_j = f_T(f_D(s_{j-1}), u_j)            u_j from the session seed
//   counterfactual  prefix replaced by s~, then the same u_j for every j > i
//   interventional  prefix replaced by s~, then u_j from a fresh seed
//
// Noise is never stored; u_j is regenerated from (seed, j) when needed.

#include <cftoken/core_types.hpp>
#include <cftoken/noise.hpp>
#include <cftoken/providers.hpp>
#include <cftoken/samplers.hpp>

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace cftoken {

/// FNV-1a over the bit patterns of the probabilities.
inline std::uint64_t fingerprint(const TokenDistribution& d) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (double p : d.probs()) {
    auto bits = std::bit_cast<std::uint64_t>(p);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFF;
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

struct GenerationSession {
  std::string model_id;
  SamplerConfig sampler;
  NoiseProvenance noise;
  std::size_t max_steps = 0;
  TokenSequence prompt;
  TokenSequence output;
  bool truncated = false;
  /// fingerprint(d_j) for j = 1..noise.step_count; empty when not recorded.
  std::vector<std::uint64_t> fingerprints;

  friend bool operator==(const GenerationSession&, const GenerationSession&) = default;
};

/// do[S_i = s~]. The replacement s~ is `prompt` followed by `output_prefix`;
/// `step` is the factual generation step it stands in for (0 = the prompt).
struct Intervention {
  std::size_t step = 0;
  TokenSequence prompt;
  TokenSequence output_prefix;

  /// s~ equal to the factual S_step.
  static Intervention identity(const GenerationSession& s, std::size_t step) {
    if (step > s.output.size()) throw DomainError("intervention: step beyond the factual output");
    return {step, s.prompt, TokenSequence(s.output.begin(), s.output.begin() + static_cast<std::ptrdiff_t>(step))};
  }

  /// Replace the token generated at `position` (1-based) with `token`.
  static Intervention replace_token(const GenerationSession& s, std::size_t position, TokenId token) {
    if (position < 1 || position > s.output.size())
      throw DomainError("intervention: position must lie in 1.." + std::to_string(s.output.size()));
    auto iv = identity(s, position);
    iv.output_prefix.back() = token;
    return iv;
  }

  /// Replace the token at `position` with a (possibly empty or longer) run of tokens.
  static Intervention replace_span(const GenerationSession& s, std::size_t position,
                                   std::span<const TokenId> tokens) {
    if (position < 1 || position > s.output.size())
      throw DomainError("intervention: position must lie in 1.." + std::to_string(s.output.size()));
    auto iv = identity(s, position - 1);
    iv.step = position;
    iv.output_prefix.insert(iv.output_prefix.end(), tokens.begin(), tokens.end());
    return iv;
  }

  static Intervention replace_prompt(const GenerationSession& s, TokenSequence prompt) {
    (void)s;
    return {0, std::move(prompt), {}};
  }

  friend bool operator==(const Intervention&, const Intervention&) = default;
};

/// How continuation noise is indexed when |s~| differs from the factual prefix.
enum class NoiseIndexing {
  factual_step,   // continue with u_{i+1}, u_{i+2}, ... (default)
  prefix_length,  // continue with u_{|output_prefix|+1}, ...
};

enum class RegenerationMode { counterfactual, interventional };

inline std::string to_string(RegenerationMode m) {
  return m == RegenerationMode::counterfactual ? "counterfactual" : "interventional";
}

inline RegenerationMode parse_mode(std::string_view s) {
  if (s == "counterfactual") return RegenerationMode::counterfactual;
  if (s == "interventional") return RegenerationMode::interventional;
  throw DomainError("unknown regeneration mode '" + std::string(s) + "'");
}

struct RegenerationOptions {
  NoiseIndexing indexing = NoiseIndexing::factual_step;
  bool record_fingerprints = false;
};

struct Regeneration {
  TokenSequence prompt;
  /// The intervened prefix followed by the regenerated continuation.
  TokenSequence output;
  std::size_t prefix_length = 0;
  bool truncated = false;
  /// Noise step consumed for each continuation token.
  std::vector<std::size_t> noise_steps;
  std::vector<std::uint64_t> fingerprints;
  std::optional<std::string> warning;

  std::span<const TokenId> continuation() const { return std::span<const TokenId>(output).subspan(prefix_length); }
};

namespace detail {

struct Continuation {
  TokenSequence tokens;
  bool truncated = false;
  std::vector<std::size_t> steps;
  std::vector<std::uint64_t> fingerprints;
};

// Runs steps first_step..last_step from `context`, halting at eos.
inline Continuation continue_from(const DistributionProvider& provider, const SamplerConfig& cfg,
                                  const NoiseProvenance& noise, TokenSequence context, std::size_t first_step,
                                  std::size_t last_step, bool record_fingerprints) {
  Continuation c;
  const TokenId eos = provider.vocabulary().eos();
  if (!context.empty() && context.back() == eos) return c;
  for (std::size_t step = first_step; step <= last_step; ++step) {
    const auto d = prepare_distribution(provider.next_logits(context), cfg);
    if (record_fingerprints) c.fingerprints.push_back(fingerprint(d));
    const TokenId t = sample_step(d, cfg, noise, step);
    context.push_back(t);
    c.tokens.push_back(t);
    c.steps.push_back(step);
    if (t == eos) return c;
  }
  c.truncated = true;
  return c;
}

inline TokenSequence concat(const TokenSequence& a, const TokenSequence& b) {
  TokenSequence out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline void check_intervention(const DistributionProvider& provider, const GenerationSession& s,
                               const Intervention& iv) {
  if (provider.model_id() != s.model_id)
    throw DomainError("session was recorded with model '" + s.model_id + "', provider is '" +
                      provider.model_id() + "'");
  if (iv.step > s.output.size())
    throw DomainError("intervention step " + std::to_string(iv.step) + " beyond factual output length " +
                      std::to_string(s.output.size()));
  const auto& vocab = provider.vocabulary();
  vocab.validate(iv.prompt);
  if (!iv.prompt.empty() && iv.prompt.back() == vocab.eos())
    throw DomainError("intervention: prompt ends with the end-of-sequence token");
  vocab.validate(iv.output_prefix);
}

inline Regeneration regenerate(const DistributionProvider& provider, const GenerationSession& s,
                               const Intervention& iv, const NoiseProvenance& noise,
                               const RegenerationOptions& opts) {
  check_intervention(provider, s, iv);
  const std::size_t first_step =
      (opts.indexing == NoiseIndexing::factual_step ? iv.step : iv.output_prefix.size()) + 1;
  auto cont = continue_from(provider, s.sampler, noise, concat(iv.prompt, iv.output_prefix), first_step,
                            s.max_steps, opts.record_fingerprints);
  Regeneration r;
  r.prompt = iv.prompt;
  r.output = concat(iv.output_prefix, cont.tokens);
  r.prefix_length = iv.output_prefix.size();
  r.truncated = cont.truncated;
  r.noise_steps = std::move(cont.steps);
  r.fingerprints = std::move(cont.fingerprints);
  return r;
}

}  // namespace detail

inline GenerationSession generate(const DistributionProvider& provider, TokenSequence prompt,
                                  const SamplerConfig& sampler, std::uint64_t seed, std::size_t max_steps,
                                  bool record_fingerprints = true) {
  sampler.validate();
  if (max_steps < 1) throw DomainError("generate: max_steps must be >= 1");
  provider.vocabulary().validate(prompt);
  if (!prompt.empty() && prompt.back() == provider.vocabulary().eos())
    throw DomainError("generate: prompt ends with the end-of-sequence token");

  GenerationSession s;
  s.model_id = provider.model_id();
  s.sampler = sampler;
  s.noise = {seed, 0};
  s.max_steps = max_steps;
  s.prompt = std::move(prompt);
  auto cont = detail::continue_from(provider, sampler, s.noise, s.prompt, 1, max_steps, record_fingerprints);
  s.output = std::move(cont.tokens);
  s.truncated = cont.truncated;
  s.noise.step_count = s.output.size();
  s.fingerprints = std::move(cont.fingerprints);
  return s;
}

/// Algorithm: steps <= i take s~, steps j > i recompute f_D on the modified
/// prefix and reuse the factual noise u_j.
inline Regeneration regenerate_counterfactual(const DistributionProvider& provider, const GenerationSession& s,
                                              const Intervention& iv, const RegenerationOptions& opts = {}) {
  return detail::regenerate(provider, s, iv, s.noise, opts);
}

/// Same prefix handling, but fresh noise for every j > i.
inline Regeneration regenerate_interventional(const DistributionProvider& provider, const GenerationSession& s,
                                              const Intervention& iv, std::uint64_t fresh_seed,
                                              const RegenerationOptions& opts = {}) {
  auto r = detail::regenerate(provider, s, iv, NoiseProvenance{fresh_seed, 0}, opts);
  if (fresh_seed == s.noise.seed)
    r.warning = "fresh seed equals the session seed; the result coincides with counterfactual regeneration";
  return r;
}

inline Regeneration regenerate(const DistributionProvider& provider, const GenerationSession& s,
                               const Intervention& iv, RegenerationMode mode, std::uint64_t fresh_seed,
                               const RegenerationOptions& opts = {}) {
  return mode == RegenerationMode::counterfactual ? regenerate_counterfactual(provider, s, iv, opts)
                                                  : regenerate_interventional(provider, s, iv, fresh_seed, opts);
}

struct ReplayReport {
  bool identical = false;
  /// First output position (0-based) where the replay differs from the session.
  std::optional<std::size_t> first_divergence;
  /// First step (1-based) whose distribution fingerprint changed.
  std::optional<std::size_t> first_fingerprint_mismatch;
  TokenSequence replayed;
};

/// Null-intervention counterfactual regeneration compared against the record.
inline ReplayReport verify_replay(const DistributionProvider& provider, const GenerationSession& s) {
  RegenerationOptions opts;
  opts.record_fingerprints = !s.fingerprints.empty();
  auto r = regenerate_counterfactual(provider, s, Intervention::identity(s, 0), opts);
  ReplayReport rep;
  rep.replayed = r.output;
  const std::size_t n = std::min(r.output.size(), s.output.size());
  for (std::size_t i = 0; i < n && !rep.first_divergence; ++i)
    if (r.output[i] != s.output[i]) rep.first_divergence = i;
  if (!rep.first_divergence && r.output.size() != s.output.size()) rep.first_divergence = n;
  for (std::size_t j = 0; j < std::min(r.fingerprints.size(), s.fingerprints.size()); ++j) {
    if (r.fingerprints[j] != s.fingerprints[j]) {
      rep.first_fingerprint_mismatch = j + 1;
      break;
    }
  }
  rep.identical = !rep.first_divergence && !rep.first_fingerprint_mismatch && r.truncated == s.truncated;
  return rep;
}

// ============================================================================
// Session file (versioned JSON, stable field order; see docs/formats.md)
// ============================================================================

inline constexpr int kSessionFormatVersion = 1;

inline nlohmann::ordered_json sampler_to_json(const SamplerConfig& c) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(c.kind);
  j["tau"] = c.tau;
  if (c.k) j["k"] = *c.k;
  if (c.p) j["p"] = *c.p;
  return j;
}

inline SamplerConfig sampler_from_json(const nlohmann::json& j) {
  SamplerConfig c;
  c.kind = parse_sampler_kind(j.at("kind").get<std::string>());
  c.tau = j.value("tau", 1.0);
  if (j.contains("k")) c.k = j.at("k").get<std::size_t>();
  if (j.contains("p")) c.p = j.at("p").get<double>();
  c.validate();
  return c;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos)
    throw DomainError("expected 16 hex digits, got '" + s + "'");
  return std::stoull(s, nullptr, 16);
}

inline nlohmann::ordered_json session_to_json(const GenerationSession& s) {
  nlohmann::ordered_json j;
  j["version"] = kSessionFormatVersion;
  j["model_id"] = s.model_id;
  j["sampler"] = sampler_to_json(s.sampler);
  j["noise"] = {{"seed", s.noise.seed}, {"step_count", s.noise.step_count}};
  j["max_steps"] = s.max_steps;
  j["prompt"] = s.prompt;
  j["output"] = s.output;
  j["truncated"] = s.truncated;
  if (!s.fingerprints.empty()) {
    auto fps = nlohmann::ordered_json::array();
    for (auto f : s.fingerprints) fps.push_back(hex64(f));
    j["fingerprints"] = std::move(fps);
  }
  return j;
}

inline GenerationSession session_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != kSessionFormatVersion)
    throw DomainError("session file: unsupported version " + j.at("version").dump());
  GenerationSession s;
  s.model_id = j.at("model_id").get<std::string>();
  s.sampler = sampler_from_json(j.at("sampler"));
  s.noise.seed = j.at("noise").at("seed").get<std::uint64_t>();
  s.noise.step_count = j.at("noise").at("step_count").get<std::size_t>();
  s.max_steps = j.at("max_steps").get<std::size_t>();
  s.prompt = j.at("prompt").get<TokenSequence>();
  s.output = j.at("output").get<TokenSequence>();
  s.truncated = j.at("truncated").get<bool>();
  if (j.contains("fingerprints"))
    for (const auto& f : j.at("fingerprints")) s.fingerprints.push_back(parse_hex64(f.get<std::string>()));
  if (s.output.size() > s.max_steps) throw DomainError("session file: output longer than max_steps");
  if (s.noise.step_count != s.output.size()) throw DomainError("session file: step_count != output length");
  return s;
}

inline nlohmann::ordered_json intervention_to_json(const Intervention& iv) {
  nlohmann::ordered_json j;
  j["step"] = iv.step;
  j["prompt"] = iv.prompt;
  j["output_prefix"] = iv.output_prefix;
  return j;
}

inline Intervention intervention_from_json(const nlohmann::json& j) {
  return {j.at("step").get<std::size_t>(), j.at("prompt").get<TokenSequence>(),
          j.at("output_prefix").get<TokenSequence>()};
}

}  // namespace cftoken
