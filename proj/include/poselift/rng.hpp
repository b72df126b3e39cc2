#pragma once

#include <cstdint>
#include <vector>

namespace poselift {

/// Small deterministic generator (splitmix64). Streams for independent
/// consumers are derived by hash-mixing a seed with a path of integers,
/// so sample i of a dataset depends only on (seed, i).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = seed;
    for (std::uint64_t p : path) s = mix(s, p);
    return Rng(s);
  }

 private:
  std::uint64_t state_;
};

// Stream tags for derived generators; values are arbitrary but frozen,
// changing them changes every generated artifact.
namespace rng_stream {
inline constexpr std::uint64_t kParamInit = 0x11;
inline constexpr std::uint64_t kPose = 0x21;
inline constexpr std::uint64_t kCamera = 0x22;
inline constexpr std::uint64_t kRefLengths = 0x23;
inline constexpr std::uint64_t kBatchFull = 0x31;
inline constexpr std::uint64_t kBatchOnly2d = 0x32;
inline constexpr std::uint64_t kBatchUnion = 0x33;
}  // namespace rng_stream

}  // namespace poselift
