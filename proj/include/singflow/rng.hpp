#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "singflow/types.hpp"

namespace singflow {

/// Deterministic random source. All sampling is built from raw mt19937_64
/// draws with fixed arithmetic, never from std::uniform_real_distribution or
/// std::normal_distribution, whose outputs vary across standard library
/// implementations. Same seed, same stream, everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform on [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Uniform direction on the unit sphere in dimension d.
  Vec on_sphere(int d) {
    Vec v(d);
    double n2 = 0.0;
    do {
      for (int i = 0; i < d; ++i) v[i] = normal();
      n2 = v.squaredNorm();
    } while (n2 < 1e-300);
    return v / std::sqrt(n2);
  }

  /// Uniform point in the ball of the given radius (volume measure).
  Vec in_ball(int d, double radius) {
    double r = radius * std::pow(uniform(), 1.0 / d);
    return r * on_sphere(d);
  }

  /// Point in the shell r_min <= |x| <= r_max, radius uniform in [r_min, r_max].
  Vec in_shell(int d, double r_min, double r_max) {
    double r = uniform(r_min, r_max);
    return r * on_sphere(d);
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace singflow
