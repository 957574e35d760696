#include <cmath>

#include "doctest.h"
#include "support.hpp"

#include "aaim/covariance.hpp"
#include "aaim/errors.hpp"
#include "aaim/spectra.hpp"

using namespace aaim;
using namespace aaim::testing;

namespace {

BlockSamples proper_blocks(std::uint64_t seed, std::size_t j, std::size_t m) {
  NormalSource rng(seed);
  // correlated proper Gaussian: p = A z with z circular standard normal
  const CMatrix a = random_complex(rng, static_cast<Eigen::Index>(m),
                                   static_cast<Eigen::Index>(m));
  BlockSamples b({1000.0}, j, m);
  CVector z(m);
  for (std::size_t k = 0; k < j; ++k) {
    for (std::size_t i = 0; i < m; ++i) z[i] = rng.complex_normal();
    b.set_snapshot(k, 0, a * z);
  }
  return b;
}

// Element-by-element Isserlis oracle.
CMatrix isserlis_oracle(const CMatrix& c, const CMatrix& p) {
  const Eigen::Index m = c.rows();
  CMatrix out(m * m, m * m);
  for (Eigen::Index l = 0; l < m; ++l)
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index lp = 0; lp < m; ++lp)
        for (Eigen::Index ip = 0; ip < m; ++ip)
          out(l * m + i, lp * m + ip) =
              c(i, ip) * std::conj(c(l, lp)) + p(i, lp) * std::conj(p(l, ip));
  return out;
}

}  // namespace

TEST_CASE("Gaussian covariance single microphone") {
  CMatrix c(1, 1), p(1, 1);
  c << 2.0;
  p << 0.0;
  CHECK(gaussian_covariance_estimate(c, p)(0, 0) == cplx(4.0, 0.0));
  p << 1.0;
  CHECK(gaussian_covariance_estimate(c, p)(0, 0) == cplx(5.0, 0.0));
  CMatrix bad(2, 2);
  CHECK_THROWS_AS(gaussian_covariance_estimate(c, bad), InvalidArgument);
}

TEST_CASE("Gaussian covariance matches the elementwise formula") {
  NormalSource rng(3);
  const CMatrix c = random_hpd(rng, 4);
  CMatrix p = random_complex(rng, 4, 4);
  p = 0.5 * (p + p.transpose()).eval();
  const CMatrix s = gaussian_covariance_estimate(c, p);
  CHECK(rel_err(s, isserlis_oracle(c, p)) < 1e-14);
  CHECK((s - s.adjoint()).norm() < 1e-12 * s.norm());
  // proper data: Sigma = C^T kron C
  const CMatrix zero = CMatrix::Zero(4, 4);
  CHECK(rel_err(gaussian_covariance_estimate(c, zero),
                kron_transpose(c)) < 1e-14);
}

TEST_CASE("Gaussian formula agrees with the sample estimator") {
  const std::size_t j = 100000;
  const auto blocks = proper_blocks(17, j, 3);
  const auto g = gaussian_covariance(blocks, 0);
  const auto s = sample_covariance(blocks, 0);
  CHECK(g.block_count == j);
  CHECK(s.block_count == j);

  // standard error of each sample entry from the per-block products
  const CMatrix csm = estimate_csm(blocks, 0);
  const CVector mean = vec(csm);
  CMatrix dev(9, j);
  for (std::size_t k = 0; k < j; ++k) {
    const CVector p = blocks.snapshot(k, 0);
    dev.col(k) = vec(p * p.adjoint()) - mean;
  }
  int outliers = 0;
  for (Eigen::Index a = 0; a < 9; ++a) {
    for (Eigen::Index b = 0; b < 9; ++b) {
      const Eigen::ArrayXcd prod =
          dev.row(a).transpose().array() * dev.row(b).transpose().conjugate().array();
      const cplx mu = prod.mean();
      const double sd = std::sqrt((prod - mu).abs2().mean());
      const double se = sd / std::sqrt(static_cast<double>(j));
      if (std::abs(s.per_block(a, b) - g.per_block(a, b)) > 5.0 * se) ++outliers;
    }
  }
  CHECK(outliers == 0);
}

TEST_CASE("sample covariance") {
  SUBCASE("identical blocks") {
    CVector p(2);
    p << cplx(1, 2), cplx(-0.5, 0.3);
    BlockSamples b({1.0}, 5, 2);
    for (std::size_t j = 0; j < 5; ++j) b.set_snapshot(j, 0, p);
    CHECK(sample_covariance(b, 0).per_block.norm() < 1e-15);
  }
  SUBCASE("two blocks, one microphone") {
    BlockSamples b({1.0}, 2, 1);
    CVector p1(1), p2(1);
    p1 << cplx(1.0, 1.0);
    p2 << cplx(0.0, 3.0);
    b.set_snapshot(0, 0, p1);
    b.set_snapshot(1, 0, p2);
    const double x1 = std::norm(p1[0]), x2 = std::norm(p2[0]);
    const auto s = sample_covariance(b, 0);
    CHECK(s.per_block(0, 0).real() == doctest::Approx((x1 - x2) * (x1 - x2) / 4.0));
  }
  SUBCASE("rank bound") {
    const auto b = proper_blocks(4, 32, 8);
    const auto s = sample_covariance(b, 0);
    REQUIRE(s.rank.has_value());
    CHECK(*s.rank <= 32);
    CHECK(hermitian_rank(s.per_block) == *s.rank);
  }
  SUBCASE("too few blocks") {
    BlockSamples b({1.0}, 1, 2);
    CHECK_THROWS_AS(sample_covariance(b, 0), InsufficientSamples);
  }
  SUBCASE("sigma divides by the block count") {
    const auto b = proper_blocks(8, 10, 2);
    const auto s = sample_covariance(b, 0);
    CHECK(rel_err(s.sigma(), s.per_block / 10.0) < 1e-15);
  }
}

TEST_CASE("regularized PSD projection") {
  SUBCASE("inactive constraint") {
    NormalSource rng(1);
    const CMatrix a = random_hpd(rng, 4, 2.0);
    const auto out = nearest_psd_regularized(a, 0.1);
    CHECK(rel_err(out.matrix, a) < 1e-12);
    CHECK(out.clipped == 0);
  }
  SUBCASE("2x2 with one negative eigenvalue") {
    const double t = 0.4;
    CMatrix u(2, 2);
    u << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
    RVector lam(2);
    lam << 3.0, -1.0;
    const CMatrix s = u * lam.cast<cplx>().asDiagonal() * u.adjoint();
    const auto out = nearest_psd_regularized(s, 0.5);
    CHECK(out.clipped == 1);
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(out.matrix);
    CHECK(eig.eigenvalues()[0] == doctest::Approx(0.5));
    CHECK(eig.eigenvalues()[1] == doctest::Approx(3.0));
    // eigenvector of 3 preserved
    CHECK(std::abs(std::abs(eig.eigenvectors().col(1).dot(u.col(0))) - 1.0) < 1e-12);

    // oracle: minimise ||alpha I + B B^T - S||_F^2 over real 2x2 B by
    // gradient descent
    Eigen::Matrix2d sr = s.real(), bmat = Eigen::Matrix2d::Identity();
    for (int it = 0; it < 200000; ++it) {
      const Eigen::Matrix2d x = 0.5 * Eigen::Matrix2d::Identity() + bmat * bmat.transpose();
      bmat -= 1e-3 * 4.0 * (x - sr) * bmat;
    }
    const Eigen::Matrix2d x = 0.5 * Eigen::Matrix2d::Identity() + bmat * bmat.transpose();
    CHECK((x - out.matrix.real()).norm() < 1e-6);
  }
  SUBCASE("zero input") {
    const auto out = nearest_psd_regularized(CMatrix::Zero(3, 3), 1.0);
    CHECK(rel_err(out.matrix, CMatrix::Identity(3, 3)) < 1e-15);
  }
  SUBCASE("idempotent and dominating alpha") {
    NormalSource rng(6);
    CMatrix a = random_complex(rng, 5, 5);
    a = 0.5 * (a + a.adjoint()).eval();
    const auto once = nearest_psd_regularized(a, 0.2);
    const auto twice = nearest_psd_regularized(once.matrix, 0.2);
    CHECK(rel_err(twice.matrix, once.matrix) < 1e-12);
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(once.matrix);
    CHECK(eig.eigenvalues().minCoeff() >= 0.2 - 1e-12);
  }
  SUBCASE("non-Hermitian input") {
    CMatrix a(2, 2);
    a << 1.0, 2.0, 0.0, 1.0;
    CHECK_THROWS_AS(nearest_psd_regularized(a, 0.1), InvalidArgument);
  }
  SUBCASE("repaired estimate records alpha") {
    const auto b = proper_blocks(9, 4, 3);
    const auto r = repaired(sample_covariance(b, 0), 1e-3);
    REQUIRE(r.repair.has_value());
    CHECK(r.repair->alpha == 1e-3);
    CHECK(r.repair->clipped > 0);
    CHECK(spectral_diagnostics(r.per_block).lambda_min >= 1e-3 * (1 - 1e-9));
  }
}

TEST_CASE("spectral diagnostics") {
  const auto id = spectral_diagnostics(CMatrix::Identity(3, 3));
  CHECK(id.condition_number == doctest::Approx(1.0));
  CMatrix d = CMatrix::Zero(2, 2);
  d(0, 0) = 10.0;
  d(1, 1) = 1.0;
  const auto s = spectral_diagnostics(d);
  CHECK(s.condition_number == doctest::Approx(10.0));
  CHECK(s.lambda_min == doctest::Approx(1.0));
  CHECK(s.lambda_max == doctest::Approx(10.0));
  d(1, 1) = 0.0;
  CHECK(std::isinf(spectral_diagnostics(d).condition_number));
}
