#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace sefoss {

// Deterministic random stream with explicit distribution algorithms.
// std::normal_distribution and friends are implementation-defined, which
// would make seeds non-portable across standard libraries; everything here
// is spelled out so a (seed, stream) pair yields the same bytes everywhere.
//
// Engine: splitmix64. Streams for different purposes are derived from the
// master seed with mix(), never by sharing one stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one draw consumes two uniforms, the sine
  // partner is discarded to keep the stream position independent of call
  // parity.
  double normal() {
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Uniform index in [0, n). Multiply-shift mapping; bias is O(n / 2^64).
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Derives an independent stream id from two values (and, via chaining,
  // from any tuple). Used as Rng(Rng::mix(seed, tag)).
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix(mix(a, b), c);
  }

 private:
  std::uint64_t state_;
};

// Fixed stream tags so every consumer derives its randomness from the run
// seed without coupling to call order.
namespace stream {
inline constexpr std::uint64_t kData = 0x64617461;        // dataset generation
inline constexpr std::uint64_t kInit = 0x696E6974;        // parameter init
inline constexpr std::uint64_t kStep = 0x73746570;        // per-step batches
inline constexpr std::uint64_t kUnseenOod = 0x756E7366;   // eval-time OOD
}  // namespace stream

}  // namespace sefoss
