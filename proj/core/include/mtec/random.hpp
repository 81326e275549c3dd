#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mtec {

// Seeded generator with platform-independent draws. The standard
// distributions are implementation-defined, which would break the
// byte-identical output guarantee across standard libraries, so the
// conversions from raw 64-bit words are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller; caches the second variate.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // Derive an independent stream for a sub-task (fold, replicate, worker).
  Rng split(std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mtec
