#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ddcsp {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seeded random source. All sampling helpers are implemented on top of the
// raw 64-bit stream so that results do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : gen_(splitmix64(seed ^ 0x5bf0'3635'dcf2'6f1dull)) {}

  uint64_t next() { return gen_(); }

  // Uniform in the open interval (0, 1); never returns 0 or 1.
  double u01() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

  // Uniform integer in [0, n), rejection sampled.
  int uniform_int(int n) {
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t lim = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
      x = next();
    } while (x >= lim);
    return static_cast<int>(x % un);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + spare_ * stddev;
    }
    const double u = u01();
    const double v = u01();
    const double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(2.0 * M_PI * v);
    has_spare_ = true;
    return mean + r * std::cos(2.0 * M_PI * v) * stddev;
  }

  double gumbel() { return -std::log(-std::log(u01())); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<size_t>(uniform_int(static_cast<int>(i)))]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Independent stream derived from (seed, stream id). Used to give each
// trajectory / puzzle / batch element its own reproducible randomness.
inline Rng derive_rng(uint64_t seed, uint64_t stream) {
  return Rng(splitmix64(seed) ^ splitmix64(stream * 0x9e3779b97f4a7c15ull + 1));
}

}  // namespace ddcsp
