#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "aaim/types.hpp"

namespace aaim {

/// Seeded normal generator: std::mt19937_64 feeding a Box-Muller transform
/// on 53-bit uniforms. Both pieces are fully specified, so streams agree
/// across standard library implementations.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1).
  double uniform() {
    double u;
    do {
      u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    } while (u == 0.0);
    return u;
  }

  /// Standard normal N(0, 1).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double radius = std::sqrt(-2.0 * std::log(uniform()));
    const double angle = 2.0 * kPi * uniform();
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Standard complex normal: real and imaginary parts N(0, 1/2), E|z|^2 = 1.
  cplx complex_normal() {
    const double re = normal();
    const double im = normal();
    return cplx(re, im) * std::sqrt(0.5);
  }

  CVector complex_normal(Eigen::Index n) {
    CVector z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = complex_normal();
    return z;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace aaim
