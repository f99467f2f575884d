#pragma once

// Evaluation harness: replacement-token selection, the first-half /
// second-half intervention experiment, counterfactual stability measurement
// and the Monte Carlo marginal oracle.

#include <cftoken/edit_distance.hpp>
#include <cftoken/engine.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>
#include <tuple>

namespace cftoken {

namespace detail {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Callers write into
/// pre-sized slots so the result order does not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::string format_double(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace detail

/// Deterministic stream of uniforms in (0,1) keyed by a seed.
class UniformStream {
 public:
  explicit UniformStream(std::uint64_t seed) : seed_(seed) {}
  double next() { return open_unit(noise_bits(seed_, ++counter_, 0, NoiseStream::auxiliary)); }
  std::size_t below(std::size_t n) { return std::min(n - 1, static_cast<std::size_t>(next() * static_cast<double>(n))); }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// Dirichlet(1, ..., 1) draw.
inline TokenDistribution random_dirichlet(UniformStream& rng, std::size_t size) {
  std::vector<double> w(size);
  for (double& x : w) x = -std::log(rng.next());
  return normalize(w);
}

// ============================================================================
// Replacement token
// ============================================================================

/// Zeroes the factual token (and any `excluded` tokens), renormalizes, keeps
/// the top-p 0.9 nucleus and samples from it.
inline TokenId sample_replacement_token(const TokenDistribution& d, TokenId factual, std::uint64_t seed,
                                        std::span<const TokenId> excluded = {}) {
  if (factual >= d.size()) throw DomainError("replacement: factual token out of range");
  std::vector<double> w(d.probs().begin(), d.probs().end());
  w[factual] = 0.0;
  for (TokenId t : excluded)
    if (t < w.size()) w[t] = 0.0;
  if (std::all_of(w.begin(), w.end(), [](double x) { return x <= 0.0; }))
    throw DomainError("replacement: no token other than the factual one has support");
  const auto nucleus = restrict_top_p(normalize(w), 0.9);
  return gumbel_max_sample(nucleus, gumbel_vector(NoiseProvenance{seed, 0}, 1, nucleus.size()));
}

// ============================================================================
// Stability violations
// ============================================================================

struct StabilityOptions {
  std::size_t min_vocab = 2;
  std::size_t max_vocab = 10;
};

struct StabilityReport {
  std::size_t trials = 0;
  std::size_t violations = 0;
  double rate() const { return trials == 0 ? 0.0 : static_cast<double>(violations) / static_cast<double>(trials); }
};

/// The ratio condition under which switching from the factual token t_f to
/// t' is forbidden: d'(t_f)/d(t_f) >= d'(t')/d(t'). Cross-multiplied so that
/// d(t') = 0 (t' impossible factually) never counts.
inline bool switch_forbidden(const TokenDistribution& d, const TokenDistribution& d_cf, TokenId factual,
                             TokenId other) {
  return d_cf[factual] * d[other] >= d_cf[other] * d[factual];
}

/// Draws one stability trial. Returns (factual token, counterfactual token)
/// together with the effective distributions the mechanism sampled from.
struct StabilityTrial {
  TokenDistribution d;
  TokenDistribution d_cf;
  TokenId factual;
  TokenId counterfactual;
};

inline StabilityTrial stability_trial(const SamplerConfig& cfg, UniformStream& rng, std::uint64_t noise_seed,
                                      std::size_t trial, const StabilityOptions& opts) {
  const std::size_t v = opts.min_vocab + rng.below(opts.max_vocab - opts.min_vocab + 1);
  auto d = restrict_support(random_dirichlet(rng, v), cfg);
  auto d_cf = restrict_support(random_dirichlet(rng, v), cfg);
  const NoiseProvenance noise{noise_seed, 0};
  TokenId tf, tc;
  if (cfg.uses_gumbel()) {
    const auto u = gumbel_vector(noise, trial + 1, v);
    tf = gumbel_max_sample(d, u);
    tc = gumbel_max_sample(d_cf, u);
  } else {
    const double u = uniform_scalar(noise, trial + 1);
    tf = its_sample(d, u);
    tc = its_sample(d_cf, u);
  }
  return {std::move(d), std::move(d_cf), tf, tc};
}

/// Random (d, d', u) triples with d, d' ~ Dirichlet(1). A violation is a
/// counterfactual token the ratio condition forbids. The (d, d') pairs depend
/// only on `seed`, so different samplers see the identical trial set.
inline StabilityReport measure_stability_violations(const SamplerConfig& cfg, std::size_t trials,
                                                    std::uint64_t seed, const StabilityOptions& opts = {}) {
  if (trials < 1) throw DomainError("stability: trials must be >= 1");
  if (opts.min_vocab < 1 || opts.max_vocab < opts.min_vocab) throw DomainError("stability: bad vocabulary range");
  UniformStream rng(seed);
  StabilityReport rep;
  rep.trials = trials;
  for (std::size_t i = 0; i < trials; ++i) {
    auto t = stability_trial(cfg, rng, derive_seed(seed, 0x57AB), i, opts);
    if (t.counterfactual != t.factual && switch_forbidden(t.d, t.d_cf, t.factual, t.counterfactual))
      ++rep.violations;
  }
  return rep;
}

// ============================================================================
// Marginal oracle
// ============================================================================

struct MarginalReport {
  std::vector<double> empirical;
  std::vector<double> target;
  double gap = 0.0;
};

/// Pushes n independent noise draws through the sampler and compares the
/// token frequencies with the (restricted) target distribution.
inline MarginalReport marginal_oracle(const TokenDistribution& d, const SamplerConfig& cfg, std::size_t n,
                                      std::uint64_t seed) {
  if (n < 1) throw DomainError("marginal oracle: n must be >= 1");
  const auto target = restrict_support(d, cfg);
  const NoiseProvenance noise{seed, 0};
  std::vector<std::size_t> counts(d.size(), 0);
  for (std::size_t i = 1; i <= n; ++i) ++counts[sample_step(target, cfg, noise, i)];
  MarginalReport rep;
  rep.target.assign(target.probs().begin(), target.probs().end());
  rep.empirical.resize(d.size());
  for (std::size_t t = 0; t < d.size(); ++t) {
    rep.empirical[t] = static_cast<double>(counts[t]) / static_cast<double>(n);
    rep.gap = std::max(rep.gap, std::abs(rep.empirical[t] - rep.target[t]));
  }
  return rep;
}

// ============================================================================
// Similarity experiment
// ============================================================================

enum class Half { first, second };

inline std::string to_string(Half h) { return h == Half::first ? "first" : "second"; }

struct ExperimentRow {
  std::size_t session_id = 0;
  Half half = Half::first;
  RegenerationMode mode = RegenerationMode::counterfactual;
  SamplerConfig sampler;
  std::size_t position = 0;
  double distance = 0.0;
};

struct AggregateRow {
  SamplerConfig sampler;
  RegenerationMode mode = RegenerationMode::counterfactual;
  std::size_t n = 0;
  double mean = 0.0;
  /// Half-width of the normal-approximation 95% interval.
  double ci95 = 0.0;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  std::vector<AggregateRow> aggregates;
  /// Factual sessions with fewer than two interventable tokens.
  std::size_t skipped_short = 0;

  const AggregateRow& aggregate(const SamplerConfig& cfg, RegenerationMode mode) const {
    for (const auto& a : aggregates)
      if (a.sampler == cfg && a.mode == mode) return a;
    throw DomainError("experiment: no aggregate for the requested cell");
  }
};

struct ExperimentOptions {
  std::uint64_t seed = 0;
  std::size_t max_steps = 64;
  unsigned threads = 0;
  NoiseIndexing indexing = NoiseIndexing::factual_step;
  /// Keep the end-of-sequence token out of the replacement candidates.
  bool exclude_eos_replacement = true;
};

inline std::string csv_field(const std::optional<std::size_t>& k) { return k ? std::to_string(*k) : ""; }
inline std::string csv_field(const std::optional<double>& p) { return p ? detail::format_double(*p, "%g") : ""; }

inline void write_rows_csv(const ExperimentResult& r, std::ostream& os) {
  os << "session_id,half,mode,kind,tau,k,p,distance\n";
  for (const auto& row : r.rows)
    os << row.session_id << ',' << to_string(row.half) << ',' << to_string(row.mode) << ','
       << to_string(row.sampler.kind) << ',' << detail::format_double(row.sampler.tau, "%g") << ','
       << csv_field(row.sampler.k) << ',' << csv_field(row.sampler.p) << ','
       << detail::format_double(row.distance) << '\n';
}

inline void write_aggregate_csv(const ExperimentResult& r, std::ostream& os) {
  os << "kind,tau,k,p,mode,n,mean,ci95\n";
  for (const auto& a : r.aggregates)
    os << to_string(a.sampler.kind) << ',' << detail::format_double(a.sampler.tau, "%g") << ','
       << csv_field(a.sampler.k) << ',' << csv_field(a.sampler.p) << ',' << to_string(a.mode) << ',' << a.n
       << ',' << detail::format_double(a.mean) << ',' << detail::format_double(a.ci95) << '\n';
}

inline AggregateRow aggregate_distances(const SamplerConfig& cfg, RegenerationMode mode,
                                        std::span<const double> xs) {
  AggregateRow a{cfg, mode, xs.size(), 0.0, 0.0};
  if (xs.empty()) return a;
  double sum = 0.0;
  for (double x : xs) sum += x;
  a.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - a.mean) * (x - a.mean);
    a.ci95 = 1.96 * std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
  }
  return a;
}

namespace detail {

struct CellOutcome {
  bool skipped = false;
  std::vector<ExperimentRow> rows;
};

inline CellOutcome run_cell(const DistributionProvider& provider, const TokenSequence& prompt,
                            std::size_t prompt_index, const SamplerConfig& cfg, std::size_t cell_index,
                            const ExperimentOptions& opts) {
  CellOutcome out;
  const std::uint64_t session_seed = derive_seed(opts.seed, prompt_index);
  const auto session = generate(provider, prompt, cfg, session_seed, opts.max_steps, false);
  const TokenId eos = provider.vocabulary().eos();
  const std::size_t m = session.output.size() - (!session.output.empty() && session.output.back() == eos ? 1 : 0);
  if (m < 2) {
    out.skipped = true;
    return out;
  }
  RegenerationOptions ropts;
  ropts.indexing = opts.indexing;
  const TokenId excluded[] = {eos};
  for (Half half : {Half::first, Half::second}) {
    const std::size_t h = half == Half::first ? 0 : 1;
    const std::size_t lo = half == Half::first ? 1 : m / 2 + 1;
    const std::size_t hi = half == Half::first ? m / 2 : m;
    UniformStream pick(derive_seed(session_seed, 0x100 + h, cell_index));
    const std::size_t position = lo + pick.below(hi - lo + 1);

    auto context = concat(session.prompt, TokenSequence(session.output.begin(),
                                                        session.output.begin() + static_cast<std::ptrdiff_t>(position - 1)));
    const TokenId factual = session.output[position - 1];
    const std::span<const TokenId> skip =
        opts.exclude_eos_replacement ? std::span<const TokenId>(excluded) : std::span<const TokenId>();
    auto d = apply_temperature(provider.next_logits(context), cfg.tau);
    // A degenerate step offers no alternative token; draw it uniformly instead.
    bool alternative = false;
    for (std::size_t t = 0; t < d.size() && !alternative; ++t)
      alternative = d[t] > 0.0 && t != factual && std::find(skip.begin(), skip.end(), t) == skip.end();
    if (!alternative) d = normalize(std::vector<double>(d.size(), 1.0));
    const TokenId replacement =
        sample_replacement_token(d, factual, derive_seed(session_seed, 0x200 + h, cell_index), skip);
    const auto iv = Intervention::replace_token(session, position, replacement);
    const std::span<const TokenId> factual_suffix = std::span<const TokenId>(session.output).subspan(position);

    const auto cf = regenerate_counterfactual(provider, session, iv, ropts);
    const auto in = regenerate_interventional(provider, session, iv, derive_seed(session_seed, 0x300 + h, cell_index),
                                              ropts);
    out.rows.push_back({prompt_index, half, RegenerationMode::counterfactual, cfg, position,
                        normalized_edit_distance<TokenId>(factual_suffix, cf.continuation())});
    out.rows.push_back({prompt_index, half, RegenerationMode::interventional, cfg, position,
                        normalized_edit_distance<TokenId>(factual_suffix, in.continuation())});
  }
  return out;
}

}  // namespace detail

/// For every prompt and sampler cell: one factual session, two single-token
/// replacements (one per output half), each regenerated counterfactually and
/// interventionally; distance to the factual suffix after the replacement.
inline ExperimentResult run_similarity_experiment(const DistributionProvider& provider,
                                                  std::span<const TokenSequence> prompts,
                                                  std::span<const SamplerConfig> grid,
                                                  const ExperimentOptions& opts = {}) {
  if (prompts.size() < 2) throw DomainError("experiment: need at least two prompts");
  if (grid.empty()) throw DomainError("experiment: empty sampler grid");
  for (const auto& cfg : grid) cfg.validate();

  const std::size_t cells = prompts.size() * grid.size();
  std::vector<detail::CellOutcome> outcomes(cells);
  detail::parallel_for(cells, opts.threads, [&](std::size_t idx) {
    const std::size_t g = idx / prompts.size(), p = idx % prompts.size();
    outcomes[idx] = detail::run_cell(provider, prompts[p], p, grid[g], g, opts);
  });

  ExperimentResult result;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<double> by_mode[2];
    for (std::size_t p = 0; p < prompts.size(); ++p) {
      auto& o = outcomes[g * prompts.size() + p];
      if (o.skipped) {
        ++result.skipped_short;
        continue;
      }
      for (auto& row : o.rows) {
        by_mode[row.mode == RegenerationMode::counterfactual ? 0 : 1].push_back(row.distance);
        result.rows.push_back(std::move(row));
      }
    }
    result.aggregates.push_back(aggregate_distances(grid[g], RegenerationMode::counterfactual, by_mode[0]));
    result.aggregates.push_back(aggregate_distances(grid[g], RegenerationMode::interventional, by_mode[1]));
  }
  return result;
}

}  // namespace cftoken
