#ifndef BILEVEL_RL_RNG_HPP
#define BILEVEL_RL_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace bilevel_rl {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic random stream keyed by (seed, a, b, c). Streams for distinct
/// keys are independent for our purposes, so episode k of epoch m can draw
/// from its own stream no matter which worker thread runs it. Normal variates
/// come from a hand-rolled Box-Muller rather than std::normal_distribution,
/// whose output is implementation-defined.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                     std::uint64_t c = 0)
      : engine_(splitmix64(splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b) ^ c)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Stream domain tags, so independent consumers of one run seed never collide.
namespace rng_domain {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kDemo = 2;
inline constexpr std::uint64_t kTrain = 3;
inline constexpr std::uint64_t kDesign = 4;
inline constexpr std::uint64_t kEval = 5;
inline constexpr std::uint64_t kSampleDesign = 6;
}  // namespace rng_domain

}  // namespace bilevel_rl

#endif
