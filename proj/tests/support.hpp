#pragma once

// Shared fixtures and brute-force oracles for the test binaries.

#include <cmath>
#include <cstdint>

#include "aaim/geometry.hpp"
#include "aaim/random.hpp"
#include "aaim/types.hpp"

namespace aaim::testing {

inline CMatrix random_complex(NormalSource& rng, Eigen::Index rows,
                              Eigen::Index cols) {
  CMatrix a(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) a(i, j) = rng.complex_normal();
  }
  return a;
}

/// A A^* + shift I with a square Gaussian A.
inline CMatrix random_hpd(NormalSource& rng, Eigen::Index n, double shift = 0.5) {
  const CMatrix a = random_complex(rng, n, n);
  CMatrix h = a * a.adjoint();
  h.diagonal().array() += shift;
  return 0.5 * (h + h.adjoint());
}

/// Explicit (R^T kron R) with the column-major vectorization convention.
inline CMatrix kron_transpose(const CMatrix& r) {
  const Eigen::Index m = r.rows();
  CMatrix out(m * m, m * m);
  for (Eigen::Index l = 0; l < m; ++l) {
    for (Eigen::Index m2 = 0; m2 < m; ++m2) {
      for (Eigen::Index lp = 0; lp < m; ++lp) {
        for (Eigen::Index mp = 0; mp < m; ++mp) {
          // entry ((m2, l), (mp, lp)) = R(lp, l) R(m2, mp)
          out(l * m + m2, lp * m + mp) = r(lp, l) * r(m2, mp);
        }
      }
    }
  }
  return out;
}

inline double rel_err(cplx a, cplx b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

inline double rel_err(const CMatrix& a, const CMatrix& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

inline CVector random_point_steering(NormalSource& rng, Eigen::Index m) {
  return random_complex(rng, m, 1).col(0);
}

/// Small planar array and focus grid for fast geometric tests.
inline MicArray small_array(std::size_t arms = 3, std::size_t per_arm = 3) {
  return spiral_array(arms, per_arm, 0.05, 0.5);
}

}  // namespace aaim::testing
