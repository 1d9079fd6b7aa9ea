#pragma once
#include <cmath>
#include <cstdint>
#include <random>

#include "sqz/units.hpp"

// Deterministic random streams. A single user seed fans out into independent
// per-purpose streams through splitmix64, and Gaussian draws use an explicit
// Box-Muller transform so a (seed, stream) pair reproduces the same samples on
// any platform, independent of the standard library's distribution internals.

namespace sqz {

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Seed for stream `index` derived from the user seed.
inline uint64_t stream_seed(uint64_t user_seed, uint64_t index) {
  uint64_t s = user_seed;
  uint64_t derived = splitmix64(s);
  for (uint64_t i = 0; i <= index; ++i) derived = splitmix64(s);
  return derived;
}

class GaussianStream {
 public:
  explicit GaussianStream(uint64_t seed) : engine_(seed) {}

  GaussianStream(uint64_t user_seed, uint64_t stream_index)
      : engine_(stream_seed(user_seed, stream_index)) {}

  // uniform on (0, 1], safe as a log() argument
  double uniform() {
    const uint64_t bits = engine_();
    return static_cast<double>((bits >> 11) + 1) * 0x1p-53;
  }

  // standard normal via Box-Muller, one spare cached per pair
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace sqz
