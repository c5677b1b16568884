#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace stlur {

/// Stateless mixing of (key, counter) into a 64-bit value. Lets any draw be
/// reproduced in isolation from its key alone.
std::uint64_t counter_hash(std::uint64_t key, std::uint64_t counter);

/// Seeded stream used everywhere randomness is needed. Integer draws avoid
/// std distributions so selections are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : engine_(counter_hash(seed, stream)) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n), unbiased.
  std::size_t index(std::size_t n);
  double normal() { return normal_(engine_); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// k distinct indices drawn uniformly from [0, n), returned sorted.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

}  // namespace stlur
