#pragma once

#include <cstdint>
#include <optional>

#include "aaim/spectra.hpp"

namespace aaim {

enum class CovarianceMethod : std::uint8_t {
  GaussianFormula = 0,
  Sample = 1,
};

const char* to_string(CovarianceMethod method);

struct PsdRepair {
  double alpha = 0.0;
  std::size_t clipped = 0;  // eigenvalues raised to alpha
};

/// Covariance of vec(C^obs), M^2 x M^2. `per_block` is the covariance of a
/// single block product vec(p p^*); the averaged CSM has sigma() = per_block/J.
struct CovarianceEstimate {
  CMatrix per_block;
  CovarianceMethod method = CovarianceMethod::GaussianFormula;
  std::size_t block_count = 1;
  std::optional<std::size_t> rank;  // sample estimator only
  std::optional<PsdRepair> repair;

  CMatrix sigma() const {
    return per_block / static_cast<double>(block_count);
  }
};

/// Isserlis: Cov(C_ml, C_m'l') = C_mm' conj(C_ll') + P_ml' conj(P_lm').
CMatrix gaussian_covariance_estimate(const CMatrix& csm, const CMatrix& pcsm);

CovarianceEstimate gaussian_covariance(const BlockSamples& blocks,
                                       std::size_t bin);

/// (1/J) sum_j (vec C_j - vec C)(vec C_j - vec C)^*, C_j = p_j p_j^*.
CovarianceEstimate sample_covariance(const BlockSamples& blocks,
                                     std::size_t bin);

struct PsdProjection {
  CMatrix matrix;
  std::size_t clipped = 0;
};

/// U diag(max(lambda_i, alpha)) U^* for the eigendecomposition of `sigma`.
PsdProjection nearest_psd_regularized(const CMatrix& sigma, double alpha);

/// Applies nearest_psd_regularized to the per-block matrix and records it.
CovarianceEstimate repaired(CovarianceEstimate estimate, double alpha);

struct SpectralSummary {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double condition_number = 0.0;  // +inf when lambda_min <= 0
};

SpectralSummary spectral_diagnostics(const CMatrix& sigma);

/// Numerical rank of a Hermitian PSD matrix.
std::size_t hermitian_rank(const CMatrix& sigma);

/// Throws InvalidArgument if `a` deviates from Hermitian by more than
/// `rel_tol` relative to its largest entry.
void require_hermitian(const CMatrix& a, double rel_tol, const char* what);

}  // namespace aaim
