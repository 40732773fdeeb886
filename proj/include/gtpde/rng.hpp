#pragma once

#include <cstdint>
#include <random>

namespace gtpde {

// Seedable 64-bit generator. Streams derived with split() are independent of
// the order in which they are consumed, so per-tooth work can run on any
// number of threads and still reproduce bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(mix(seed)) {}

  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  double normal() { return normal_(engine_); }
  std::uint64_t bits() { return engine_(); }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  Rng split(std::uint64_t stream) const { return Rng(seed_of(stream)); }

  std::mt19937_64& engine() { return engine_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  std::uint64_t seed_of(std::uint64_t stream) const {
    std::mt19937_64 copy = engine_;
    return mix(copy() ^ mix(stream + 0x5851f42d4c957f2dULL));
  }

  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace gtpde
