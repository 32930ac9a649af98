#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace risnoma::rng {

/// Deterministic 64-bit mixer (splitmix64 finalizer). Used both for stream
/// advancement and for deriving child seeds, so results are identical across
/// platforms and standard libraries.
constexpr std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Combine a seed with a sequence of tags into a new seed.
/// hash_seed(s, {a, b}) != hash_seed(s, {b, a}) for almost all inputs.
inline std::uint64_t hash_seed(std::uint64_t seed,
                               std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = mix(seed);
  for (std::uint64_t t : tags) h = mix(h ^ (t + 0x9e3779b97f4a7c15ULL));
  return h;
}

/// Counter-based uniform/normal stream. Self-contained so that draws are
/// bit-identical regardless of compiler or libstdc++ version.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : state_(mix(seed ^ 0x853c49e6748fea9bULL)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1): rejects exact zero so interval endpoints never appear.
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

  /// Integer in [0, n). n must be >= 1.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller (pair cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform_open();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace risnoma::rng
