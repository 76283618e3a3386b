#pragma once

// Seeded randomness with platform-independent draws.
//
// std::normal_distribution and friends are implementation-defined, so the
// transforms are written out here on top of mt19937_64, whose output sequence
// is fixed by the standard.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace selftrain {

// What the samplers need from a random source. Test stubs implement the same surface.
template <typename R>
concept RandomSource = requires(R& r, double mean, double sd) {
  { r.uniform() } -> std::convertible_to<double>;
  { r.normal(mean, sd) } -> std::convertible_to<double>;
};

// SplitMix64 finalizer; used to derive independent seeds from (seed, stream).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n) without modulo bias. n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do x = engine_();
    while (x >= limit);
    return x % n;
  }

  // Box-Muller; one fresh pair per call so the state stays a plain engine state.
  double normal(double mean, double sd) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void restore(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace selftrain
