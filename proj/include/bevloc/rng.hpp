#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "bevloc/pose2d.hpp"

namespace bevloc {

/**
 * @brief Seeded RNG with platform-stable draws.
 *
 * mt19937_64 output is pinned by the standard; the uniform/normal mappings
 * below avoid std::uniform_real_distribution / std::normal_distribution,
 * whose sequences differ across standard libraries.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  std::uint64_t uniform_index(std::uint64_t n) {
    // rejection sampling keeps the draw unbiased
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return v % n;
  }

  // standard normal via Box-Muller
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  // uniform point in a disk of given radius
  Vec2 disk(double radius) {
    const double r = radius * std::sqrt(uniform());
    const double a = 2.0 * kPi * uniform();
    return Vec2(r * std::cos(a), r * std::sin(a));
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace bevloc
