#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace xcap {

// Deterministic random source. Distributions are hand-rolled on top of
// mt19937_64 so that streams are identical across standard libraries. Seeds
// pass through splitmix64 so that similar seeds (forked per sample id) give
// uncorrelated streams.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), engine_(scramble(seed)) {}

  static uint64_t scramble(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  uint64_t seed() const { return seed_; }
  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(engine_() % static_cast<uint64_t>(n));
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Sample an index from a discrete distribution given by non-negative
  // weights summing to ~1. Falls back to the last index on rounding.
  int categorical(const double* p, int n) {
    double u = uniform();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += p[i];
      if (u < acc) return i;
    }
    return n - 1;
  }

  // Derive an independent stream from this rng's seed, e.g. one per sample.
  Rng fork(uint64_t salt) const {
    return Rng(seed_ ^ (salt * 0x9e3779b97f4a7c15ull + 0xd1b54a32d192ed03ull));
  }

 private:
  uint64_t seed_ = 0;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace xcap
