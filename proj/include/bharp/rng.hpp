#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace bharp {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive decorrelated stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for stream (a, b) under a master seed. Chains, replicates and
// analysis stages all derive their generators through this function.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                    std::uint64_t b = 0) noexcept {
  return mix64(mix64(mix64(master) ^ (a + 0x632be59bd9b4e019ULL)) ^
               (b + 0x2545f4914f6cdd1dULL));
}

inline Rng make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32)};
  return Rng(seq);
}

namespace draw {

inline double uniform(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double normal(Rng& rng, double mean, double sd) {
  return mean + sd * std::normal_distribution<double>(0.0, 1.0)(rng);
}

// Gamma with shape/rate.
inline double gamma(Rng& rng, double shape, double rate) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

// Inverse gamma with shape/rate (scale of the reciprocal).
inline double inv_gamma(Rng& rng, double shape, double rate) {
  return 1.0 / gamma(rng, shape, rate);
}

inline double beta(Rng& rng, double a, double b) {
  const double x = gamma(rng, a, 1.0);
  const double y = gamma(rng, b, 1.0);
  return x / (x + y);
}

inline std::vector<double> dirichlet(Rng& rng, std::span<const double> alpha) {
  std::vector<double> out(alpha.size());
  double total = 0.0;
  for (std::size_t t = 0; t < alpha.size(); ++t) {
    out[t] = gamma(rng, alpha[t], 1.0);
    total += out[t];
  }
  for (auto& v : out) v /= total;
  return out;
}

// Index sampled proportionally to exp(log_weights).
int categorical_log(Rng& rng, std::span<const double> log_weights);

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace draw
}  // namespace bharp
