#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace relrec {

// SplitMix64 finalizer; spreads correlated seed material before it reaches
// the engine.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Seed for a named sub-stream of a master seed. Replicates, repeats and
// retries each get their own stream so results do not depend on scheduling.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t salt = 0) {
  std::uint64_t h = mix64(master ^ 0x51afd1ed9d1c5c85ull);
  h = mix64(h ^ mix64(stream));
  if (salt != 0) h = mix64(h ^ mix64(salt ^ 0xd6e8feb86659fd93ull));
  return h;
}

// Deterministic random stream. mt19937_64 output is fully specified by the
// standard, and every sampler below is written out explicitly, so a given
// seed produces identical draws on every platform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  // Uniform on the open interval (0, 1); never returns an endpoint.
  double uniform01() {
    const std::uint64_t r = gen_();
    return (static_cast<double>(r >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
    const auto k = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

  // Exp(1) by inversion; strictly positive because uniform01 avoids 0 and 1.
  double exponential() { return -std::log(uniform01()); }

  // Exact Poisson sampler: sequential inversion, chunked so exp(-mean) stays
  // well away from underflow. Sums of independent Poisson draws are Poisson.
  long long poisson(double mean) {
    if (!(mean >= 0.0)) throw std::invalid_argument("poisson: mean must be >= 0");
    long long total = 0;
    while (mean > 16.0) {
      total += poisson_small(16.0);
      mean -= 16.0;
    }
    return total + poisson_small(mean);
  }

 private:
  long long poisson_small(double mu) {
    if (mu <= 0.0) return 0;
    const double u = uniform01();
    double p = std::exp(-mu);
    double cdf = p;
    long long k = 0;
    while (u > cdf && k < 2000) {
      ++k;
      p *= mu / static_cast<double>(k);
      cdf += p;
    }
    return k;
  }

  std::mt19937_64 gen_;
};

}  // namespace relrec
