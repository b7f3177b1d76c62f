#pragma once

#include <cmath>
#include <cstdint>

namespace jumpcalc {

// SplitMix64 step (Steele/Lea/Flood). Counter mode with a fixed odd
// increment and a strong finalizer, so any 64-bit value seeds a usable
// stream and streams can be derived by hashing.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// One independent random stream per (seed, path_index) pair.
///
/// A simulation consumes the stream in strict alternating order:
/// exponential threshold, jump uniform, exponential threshold, ...
/// so the draws a path sees depend only on (seed, path_index), never on
/// step sizes, recording grids or thread scheduling.
class PathRng {
 public:
  PathRng(std::uint64_t seed, std::uint64_t path_index) {
    // hash the pair: mix the seed, fold in the index, mix again
    std::uint64_t s = seed;
    (void)splitmix64_next(s);
    s ^= (path_index + 1) * 0xD1B54A32D192ED03ULL;
    (void)splitmix64_next(s);
    state_ = s;
  }

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  /// Uniform on [0,1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Unit-mean exponential.
  double exponential() { return -std::log1p(-uniform()); }

 private:
  std::uint64_t state_;
};

}  // namespace jumpcalc
