#include "aaim/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

#include "aaim/errors.hpp"

namespace aaim {

const char* to_string(CovarianceMethod method) {
  switch (method) {
    case CovarianceMethod::GaussianFormula:
      return "gaussian-formula";
    case CovarianceMethod::Sample:
      return "sample";
  }
  return "unknown";
}

void require_hermitian(const CMatrix& a, double rel_tol, const char* what) {
  if (a.rows() != a.cols()) {
    throw InvalidArgument(std::string(what) + " is not square");
  }
  const double scale = a.cwiseAbs().maxCoeff();
  const double dev = (a - a.adjoint()).cwiseAbs().maxCoeff();
  if (dev > rel_tol * std::max(scale, std::numeric_limits<double>::min())) {
    throw InvalidArgument(std::string(what) + " is not Hermitian (deviation " +
                          std::to_string(dev) + ")");
  }
}

CMatrix gaussian_covariance_estimate(const CMatrix& csm, const CMatrix& pcsm) {
  if (csm.rows() != csm.cols() || pcsm.rows() != csm.rows() ||
      pcsm.cols() != csm.cols()) {
    throw InvalidArgument("CSM and PCSM dimensions do not match");
  }
  const Eigen::Index m = csm.rows();
  const Eigen::Index n = m * m;
  CMatrix sigma(n, n);
  for (Eigen::Index lp = 0; lp < m; ++lp) {
    for (Eigen::Index mp = 0; mp < m; ++mp) {
      const Eigen::Index col = lp * m + mp;
      for (Eigen::Index l = 0; l < m; ++l) {
        const cplx c_ll = std::conj(csm(l, lp));
        const cplx p_lm = std::conj(pcsm(l, mp));
        for (Eigen::Index mm = 0; mm < m; ++mm) {
          sigma(l * m + mm, col) = csm(mm, mp) * c_ll + pcsm(mm, lp) * p_lm;
        }
      }
    }
  }
  return 0.5 * (sigma + sigma.adjoint());
}

CovarianceEstimate gaussian_covariance(const BlockSamples& blocks,
                                       std::size_t bin) {
  CovarianceEstimate out;
  out.per_block = gaussian_covariance_estimate(estimate_csm(blocks, bin),
                                               estimate_pcsm(blocks, bin));
  out.method = CovarianceMethod::GaussianFormula;
  out.block_count = blocks.blocks();
  return out;
}

CovarianceEstimate sample_covariance(const BlockSamples& blocks,
                                     std::size_t bin) {
  if (blocks.blocks() < 2) {
    throw InsufficientSamples("sample covariance needs at least two blocks");
  }
  const std::size_t mics = blocks.mics();
  const auto n = static_cast<Eigen::Index>(mics * mics);
  const auto jcount = static_cast<Eigen::Index>(blocks.blocks());
  CMatrix samples(n, jcount);
  for (Eigen::Index j = 0; j < jcount; ++j) {
    const CVector p = blocks.snapshot(static_cast<std::size_t>(j), bin);
    const CMatrix outer = p * p.adjoint();
    samples.col(j) = vec(outer);
  }
  const CVector mean = samples.rowwise().mean();
  samples.colwise() -= mean;
  CovarianceEstimate out;
  out.per_block = samples * samples.adjoint() / static_cast<double>(jcount);
  out.per_block = 0.5 * (out.per_block + out.per_block.adjoint()).eval();
  out.method = CovarianceMethod::Sample;
  out.block_count = blocks.blocks();
  // rank(S S^*) = rank(S), and S has only J columns
  Eigen::ColPivHouseholderQR<CMatrix> qr(samples);
  out.rank = static_cast<std::size_t>(qr.rank());
  return out;
}

PsdProjection nearest_psd_regularized(const CMatrix& sigma, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw InvalidArgument("PSD floor alpha must be positive");
  }
  require_hermitian(sigma, 1e-10, "covariance matrix");
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(sigma);
  if (eig.info() != Eigen::Success) {
    throw NonConvergence("eigendecomposition of covariance failed");
  }
  RVector lambda = eig.eigenvalues();
  PsdProjection out;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < alpha) {
      lambda[i] = alpha;
      ++out.clipped;
    }
  }
  const CMatrix& u = eig.eigenvectors();
  out.matrix = u * lambda.cast<cplx>().asDiagonal() * u.adjoint();
  out.matrix = 0.5 * (out.matrix + out.matrix.adjoint()).eval();
  return out;
}

CovarianceEstimate repaired(CovarianceEstimate estimate, double alpha) {
  auto projection = nearest_psd_regularized(estimate.per_block, alpha);
  estimate.per_block = std::move(projection.matrix);
  estimate.repair = PsdRepair{alpha, projection.clipped};
  return estimate;
}

SpectralSummary spectral_diagnostics(const CMatrix& sigma) {
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(sigma, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) {
    throw NonConvergence("eigenvalue computation failed");
  }
  SpectralSummary s;
  s.lambda_min = eig.eigenvalues().minCoeff();
  s.lambda_max = eig.eigenvalues().maxCoeff();
  s.condition_number = s.lambda_min > 0.0
                           ? s.lambda_max / s.lambda_min
                           : std::numeric_limits<double>::infinity();
  return s;
}

std::size_t hermitian_rank(const CMatrix& sigma) {
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(sigma, Eigen::EigenvaluesOnly);
  const RVector& lambda = eig.eigenvalues();
  const double top = lambda.cwiseAbs().maxCoeff();
  const double tol = static_cast<double>(sigma.rows()) *
                     std::numeric_limits<double>::epsilon() * top;
  return static_cast<std::size_t>((lambda.array() > tol).count());
}

}  // namespace aaim
