#pragma once

#include <complex>
#include <cstddef>

#include <Eigen/Dense>

namespace aaim {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;

inline double angular(double frequency_hz) { return 2.0 * kPi * frequency_hz; }

// Column-major vectorization of an M x M matrix: entry (m, l) lives at
// l * M + m. Every module goes through these two helpers.
inline std::size_t flat_index(std::size_t m, std::size_t l, std::size_t mics) {
  return l * mics + m;
}

struct IndexPair {
  std::size_t row;
  std::size_t col;
};

inline IndexPair pair_of(std::size_t flat, std::size_t mics) {
  return {flat % mics, flat / mics};
}

inline CVector vec(const CMatrix& a) {
  return Eigen::Map<const CVector>(a.data(), a.size());
}

inline CMatrix unvec(const CVector& v, std::size_t mics) {
  return Eigen::Map<const CMatrix>(v.data(), static_cast<Eigen::Index>(mics),
                                   static_cast<Eigen::Index>(mics));
}

}  // namespace aaim
