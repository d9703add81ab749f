#pragma once

#include <cstdint>
#include <random>

namespace nudgesim {

/// SplitMix64 finalizer; used to derive independent seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/**
 * @brief Seedable, splittable random stream.
 *
 * Wraps a 64-bit Mersenne twister. Uniform reals are built from the top 53 bits
 * of each draw so sequences are identical across standard libraries.
 */
class RandomStream
{
public:
  explicit RandomStream(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

  /// Stream for one Monte Carlo run; independent of the order runs execute in.
  static RandomStream derive(std::uint64_t master_seed, std::uint64_t stream_index, std::uint64_t purpose = 0)
  {
    return RandomStream(splitmix64(master_seed ^ splitmix64(stream_index ^ splitmix64(purpose + 0x5851F42D4C957F2DULL))));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  bool operator==(const RandomStream & other) const { return engine_ == other.engine_; }

private:
  std::mt19937_64 engine_;
};

}  // namespace nudgesim
