#include <cmath>

#include "doctest.h"
#include "support.hpp"

#include "aaim/errors.hpp"
#include "aaim/spectra.hpp"

using namespace aaim;
using namespace aaim::testing;

namespace {

BlockSamples from_vectors(const std::vector<CVector>& ps) {
  BlockSamples b({1000.0}, ps.size(), static_cast<std::size_t>(ps[0].size()));
  for (std::size_t j = 0; j < ps.size(); ++j) b.set_snapshot(j, 0, ps[j]);
  return b;
}

BlockSamples random_blocks(std::uint64_t seed, std::size_t j, std::size_t m,
                           std::size_t f = 1) {
  NormalSource rng(seed);
  std::vector<double> freqs;
  for (std::size_t k = 0; k < f; ++k) freqs.push_back(100.0 * (k + 1));
  BlockSamples b(freqs, j, m);
  for (auto& v : b.raw()) v = rng.complex_normal();
  return b;
}

}  // namespace

TEST_CASE("CSM and PCSM of a single block") {
  CVector p(2);
  p << 1.0, cplx(0, 1);
  const auto b = from_vectors({p});
  CMatrix csm_expect(2, 2), pcsm_expect(2, 2);
  csm_expect << 1.0, cplx(0, -1), cplx(0, 1), 1.0;
  pcsm_expect << 1.0, cplx(0, 1), cplx(0, 1), -1.0;
  CHECK((estimate_csm(b, 0) - csm_expect).norm() < 1e-15);
  CHECK((estimate_pcsm(b, 0) - pcsm_expect).norm() < 1e-15);

  // p and -p give the same CSM as p alone
  const auto pm = from_vectors({p, CVector(-p)});
  CHECK((estimate_csm(pm, 0) - csm_expect).norm() < 1e-15);
}

TEST_CASE("CSM matches a double-loop oracle") {
  const auto b = random_blocks(11, 8, 3);
  CMatrix csm = CMatrix::Zero(3, 3), pcsm = CMatrix::Zero(3, 3);
  for (std::size_t j = 0; j < 8; ++j) {
    for (std::size_t m = 0; m < 3; ++m) {
      for (std::size_t l = 0; l < 3; ++l) {
        csm(m, l) += b.at(j, m, 0) * std::conj(b.at(j, l, 0)) / 8.0;
        pcsm(m, l) += b.at(j, m, 0) * b.at(j, l, 0) / 8.0;
      }
    }
  }
  CHECK((estimate_csm(b, 0) - csm).norm() < 1e-12);
  CHECK((estimate_pcsm(b, 0) - pcsm).norm() < 1e-12);
}

TEST_CASE("CSM and PCSM invariants") {
  const auto b = random_blocks(5, 20, 6, 3);
  for (std::size_t f = 0; f < 3; ++f) {
    const CMatrix c = estimate_csm(b, f);
    const CMatrix p = estimate_pcsm(b, f);
    CHECK((c - c.adjoint()).norm() == 0.0);
    CHECK((p - p.transpose()).norm() == 0.0);
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(c);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * c.trace().real());
  }

  SUBCASE("real blocks: PCSM equals CSM") {
    BlockSamples r({50.0}, 4, 3);
    NormalSource rng(2);
    for (auto& v : r.raw()) v = rng.normal();
    CHECK((estimate_csm(r, 0) - estimate_pcsm(r, 0)).norm() < 1e-14);
  }

  SUBCASE("concatenation averages") {
    const auto a = random_blocks(1, 5, 3);
    const auto c = random_blocks(2, 5, 3);
    BlockSamples both({100.0}, 10, 3);
    for (std::size_t j = 0; j < 5; ++j) {
      both.set_snapshot(j, 0, a.snapshot(j, 0));
      both.set_snapshot(j + 5, 0, c.snapshot(j, 0));
    }
    const CMatrix mean = 0.5 * (estimate_csm(a, 0) + estimate_csm(c, 0));
    CHECK((estimate_csm(both, 0) - mean).norm() < 1e-14);
  }
}

TEST_CASE("block validation") {
  CHECK_THROWS_AS(BlockSamples({100.0}, 0, 3).validate(), InvalidArgument);
  CHECK_THROWS_AS(BlockSamples({200.0, 100.0}, 1, 3).validate(), InvalidArgument);
  BlockSamples empty({100.0}, 0, 2);
  CHECK_THROWS(estimate_csm(empty, 0));
}

TEST_CASE("Welch ingestion") {
  SUBCASE("block count from the hop size") {
    WelchOptions o;
    o.block_length = 256;
    o.overlap = 0.5;
    CHECK(welch_block_count(1024, o) == 7);
    o.block_length = 2048;
    CHECK_THROWS_AS(welch_block_count(1024, o), InvalidArgument);
    o.block_length = 256;
    o.overlap = 1.0;
    CHECK_THROWS_AS(welch_block_count(1024, o), InvalidArgument);
  }

  SUBCASE("constant signal lands in bin 0") {
    RMatrix s = RMatrix::Constant(2, 1024, 3.0);
    WelchOptions o;
    o.block_length = 128;
    o.window = Window::Rectangular;
    const auto b = welch_blocks(s, 1000.0, o);
    CHECK(b.bins() == 65);
    CHECK(b.blocks() == 15);
    const CMatrix c0 = estimate_csm(b, 0);
    CHECK(c0(0, 0).real() > 1.0);
    for (std::size_t k = 1; k < b.bins(); ++k) {
      CHECK(std::abs(estimate_csm(b, k)(0, 0)) < 1e-20);
    }
  }

  SUBCASE("sinusoid on a bin with a Hann window") {
    const std::size_t n = 256, k0 = 32;
    const double fs = 4096.0, amp = 1.0;
    RMatrix s(1, 8 * n);
    for (Eigen::Index t = 0; t < s.cols(); ++t) {
      s(0, t) = amp * std::cos(2.0 * kPi * k0 * t / static_cast<double>(n) + 0.3);
    }
    WelchOptions o;
    o.block_length = n;
    const auto b = welch_blocks(s, fs, o);
    CHECK(b.frequencies()[k0] == doctest::Approx(k0 * fs / n));
    // power-per-bin scaling: 2 (A sum w / 2)^2 / (N sum w^2) = A^2 / 3 for Hann
    const double power = estimate_csm(b, k0)(0, 0).real();
    CHECK(power == doctest::Approx(amp * amp / 3.0).epsilon(0.01));

    o.scaling = SpectrumScaling::Amplitude;
    const auto a = welch_blocks(s, fs, o);
    CHECK(estimate_csm(a, k0)(0, 0).real() ==
          doctest::Approx(amp * amp / 2.0).epsilon(0.01));
  }
}
