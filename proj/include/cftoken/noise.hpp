#pragma once

// Exogenous sampler noise, regenerated on demand from (seed, step, token).
//
// Every value is a pure function of its key, computed with the Philox4x32-10
// counter-based generator. Nothing is stored per step, so a session only has
// to remember its seed to replay or counterfactually regenerate any step.

#include <cftoken/core_types.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace cftoken {

struct NoiseProvenance {
  std::uint64_t seed = 0;
  std::size_t step_count = 0;

  friend bool operator==(const NoiseProvenance&, const NoiseProvenance&) = default;
};

namespace philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline constexpr std::uint32_t kMul0 = 0xD2511F53u;
inline constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

constexpr Counter round(const Counter& c, const Key& k) {
  const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
  const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
  return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
          static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
}

/// Philox4x32 with 10 rounds.
constexpr Counter philox4x32_10(Counter c, Key k) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      k[0] += kWeyl0;
      k[1] += kWeyl1;
    }
    c = round(c, k);
  }
  return c;
}

}  // namespace philox

/// Independent streams that share a (seed, step) key.
enum class NoiseStream : std::uint32_t { gumbel = 0, uniform = 1, auxiliary = 2 };

inline std::uint64_t noise_bits(std::uint64_t seed, std::uint64_t step, std::uint32_t index,
                                NoiseStream stream) {
  const philox::Counter ctr{static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                            index, static_cast<std::uint32_t>(stream)};
  const philox::Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  const auto out = philox::philox4x32_10(ctr, key);
  return (std::uint64_t{out[1]} << 32) | out[0];
}

/// Maps 64 random bits into the open interval (0, 1). Uses the top 52 bits so
/// the result is exact in double precision and never reaches 0 or 1.
inline double open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

inline double gumbel_from_uniform(double x) { return -std::log(-std::log(x)); }

inline double gumbel_noise(std::uint64_t seed, std::size_t step, TokenId token) {
  return gumbel_from_uniform(open_unit(noise_bits(seed, step, token, NoiseStream::gumbel)));
}

inline void check_step(std::size_t step) {
  if (step == 0) throw DomainError("noise steps are numbered from 1");
}

/// Gumbel(0,1) vector u_step over the vocabulary.
inline std::vector<double> gumbel_vector(const NoiseProvenance& prov, std::size_t step,
                                         std::size_t vocab_size) {
  check_step(step);
  if (vocab_size == 0) throw DomainError("gumbel_vector: empty vocabulary");
  std::vector<double> u(vocab_size);
  for (std::size_t t = 0; t < vocab_size; ++t)
    u[t] = gumbel_noise(prov.seed, step, static_cast<TokenId>(t));
  return u;
}

/// Uniform(0,1) scalar for single-noise mechanisms such as inverse-transform sampling.
inline double uniform_scalar(const NoiseProvenance& prov, std::size_t step) {
  check_step(step);
  return open_unit(noise_bits(prov.seed, step, 0, NoiseStream::uniform));
}

/// SplitMix64 finalizer, used to derive child seeds from a parent seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(parent) ^ a) ^ (b * 0xD6E8FEB86659FD93ull));
}

}  // namespace cftoken
