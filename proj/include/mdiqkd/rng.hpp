#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mdiqkd {

/// Mixes a seed with stream identifiers so that independent workers
/// (loss points, Monte Carlo chunks) get decorrelated, reproducible streams.
inline std::uint64_t derive_stream_seed(std::uint64_t seed,
                                        std::uint64_t point_index,
                                        std::uint64_t chunk_index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t s = mix(seed);
  s = mix(s ^ (point_index * 0xd1342543de82ef95ULL));
  s = mix(s ^ (chunk_index * 0xaf251af3b0f025b5ULL));
  return s;
}

/// Seeded random stream. Distributions are implemented locally (inversion /
/// Box-Muller) instead of std::*_distribution so that a given seed produces
/// the same draw sequence on every standard library.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return std::ldexp(static_cast<double>(eng_() >> 11), -53); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one value per call; the pair's second
  /// value is cached).
  double gauss() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  double gauss(double mean, double sigma) { return mean + sigma * gauss(); }

  /// Poisson by sequential inversion; adequate for the photon-number means
  /// used here (<= a few). Exact zero for mean == 0.
  int poisson(double mean) {
    if (mean <= 0.0) return 0;
    const double u = uniform();
    double p = std::exp(-mean);
    double cdf = p;
    int k = 0;
    while (u >= cdf && k < 200) {
      ++k;
      p *= mean / k;
      cdf += p;
    }
    return k;
  }

  /// Binomial(n, p) by n Bernoulli draws; n is small (photon counts).
  int binomial(int n, double p) {
    int k = 0;
    for (int i = 0; i < n; ++i)
      if (uniform() < p) ++k;
    return k;
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection-free modulo is fine here: n is tiny compared to 2^64.
    return eng_() % n;
  }

 private:
  std::mt19937_64 eng_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace mdiqkd
