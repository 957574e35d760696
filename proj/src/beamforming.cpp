#include "aaim/beamforming.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "aaim/errors.hpp"
#include "aaim/parallel.hpp"

namespace aaim {

Band third_octave_band(double center_hz) {
  if (!(center_hz > 0.0) || !std::isfinite(center_hz)) {
    throw InvalidArgument("band centre frequency must be positive");
  }
  const double edge = std::pow(2.0, 1.0 / 6.0);
  return Band{center_hz, center_hz / edge, center_hz * edge, 0};
}

RVector SourceMap::power_db() const {
  const double peak = max_power();
  RVector db(powers.size());
  for (Eigen::Index i = 0; i < powers.size(); ++i) {
    db[i] = (powers[i] > 0.0 && peak > 0.0)
                ? 10.0 * std::log10(powers[i] / peak)
                : -std::numeric_limits<double>::infinity();
  }
  return db;
}

std::size_t SourceMap::argmax() const {
  if (powers.size() == 0) throw InvalidArgument("empty source map");
  Eigen::Index idx = 0;
  powers.maxCoeff(&idx);
  return static_cast<std::size_t>(idx);
}

double SourceMap::max_power() const {
  return powers.size() == 0 ? 0.0 : powers.maxCoeff();
}

namespace {

CVector reduced_rank_one(const CVector& g, const SelectionMask& mask) {
  const CMatrix gg = g * g.adjoint();
  return mask.reduce(vec(gg));
}

void require_mask_matches(const WeightingScheme& w, const SelectionMask& mask) {
  if (w.dimension() != mask.size()) {
    throw InconsistentInputs("weighting of dimension " +
                             std::to_string(w.dimension()) +
                             " does not match mask retaining " +
                             std::to_string(mask.size()) + " pairs");
  }
}

}  // namespace

WeightedSteering weighted_steering(const WeightingScheme& w,
                                   const SelectionMask& mask,
                                   const CMatrix& steering,
                                   std::size_t workers) {
  require_mask_matches(w, mask);
  if (static_cast<std::size_t>(steering.rows()) != mask.mics()) {
    throw InconsistentInputs("steering vectors have " +
                             std::to_string(steering.rows()) +
                             " entries but the mask is for " +
                             std::to_string(mask.mics()) + " microphones");
  }
  const auto n = steering.cols();
  const auto dim = static_cast<Eigen::Index>(mask.size());
  WeightedSteering out;
  out.gbar.resize(dim, n);
  out.w_inv_gbar.resize(dim, n);
  out.norms.resize(n);
  out.weighting = w.label();
  out.mask = mask;
  parallel_tiles(static_cast<std::size_t>(n), 64, workers,
               [&](std::size_t begin, std::size_t end) {
                 const auto b = static_cast<Eigen::Index>(begin);
                 const auto cnt = static_cast<Eigen::Index>(end - begin);
                 for (Eigen::Index i = b; i < b + cnt; ++i) {
                   out.gbar.col(i) = reduced_rank_one(steering.col(i), mask);
                 }
                 out.w_inv_gbar.middleCols(b, cnt) =
                     w.apply_inverse(CMatrix(out.gbar.middleCols(b, cnt)));
                 for (Eigen::Index i = b; i < b + cnt; ++i) {
                   const double norm =
                       out.w_inv_gbar.col(i).dot(out.gbar.col(i)).real();
                   if (!(norm > 0.0) || !std::isfinite(norm)) {
                     throw DegenerateSteering(
                         "steering vector at focus point " + std::to_string(i) +
                         " vanishes on the retained sensor pairs");
                   }
                   out.norms[i] = norm;
                 }
               });
  return out;
}

cplx beamform_point(const CMatrix& csm, const WeightingScheme& w,
                    const SelectionMask& mask, const CVector& g) {
  if (csm.rows() != csm.cols() ||
      static_cast<std::size_t>(csm.rows()) != mask.mics() ||
      g.size() != csm.rows()) {
    throw InconsistentInputs("CSM, steering vector and mask sizes differ");
  }
  require_mask_matches(w, mask);
  const CVector gbar = reduced_rank_one(g, mask);
  const CVector x = w.apply_inverse(gbar);
  const double den = x.dot(gbar).real();
  if (!(den > 0.0) || !std::isfinite(den)) {
    throw DegenerateSteering("steering vector vanishes on retained pairs");
  }
  return x.dot(mask.reduce(vec(csm))) / den;
}

SourceMap beamform_map(const CMatrix& csm, const WeightedSteering& steering,
                       const FocusGrid& grid, double frequency_hz,
                       std::size_t block_count) {
  if (grid.size() != steering.points()) {
    throw InconsistentInputs("grid has " + std::to_string(grid.size()) +
                             " points but steering has " +
                             std::to_string(steering.points()));
  }
  if (static_cast<std::size_t>(csm.rows()) != steering.mics() ||
      csm.rows() != csm.cols()) {
    throw InconsistentInputs("CSM size does not match the steering set");
  }
  const CVector cbar = steering.mask.reduce(vec(csm));
  SourceMap map;
  map.grid = grid;
  map.frequency_hz = frequency_hz;
  map.values = (steering.w_inv_gbar.adjoint() * cbar)
                   .cwiseQuotient(steering.norms.cast<cplx>());
  map.powers = map.values.real().cwiseMax(0.0);
  map.weighting = steering.weighting;
  map.mask = steering.mask.describe();
  map.block_count = block_count;
  return map;
}

SourceMap beamform_map(const CMatrix& csm, const WeightingScheme& w,
                       const SelectionMask& mask, const FocusGrid& grid,
                       const MicArray& array, double frequency_hz,
                       const FlowField& flow, std::size_t block_count,
                       std::size_t workers) {
  const CMatrix steering =
      propagation_matrix(array, grid, angular(frequency_hz), flow);
  return beamform_map(csm, weighted_steering(w, mask, steering, workers), grid,
                      frequency_hz, block_count);
}

// ---------------------------------------------------------------- variance

CovarianceOperator CovarianceOperator::dense(const CMatrix& sigma,
                                             const SelectionMask& mask) {
  if (sigma.rows() != sigma.cols()) {
    throw InconsistentInputs("covariance matrix is not square");
  }
  CovarianceOperator op;
  op.mask_ = mask;
  const auto n = static_cast<std::size_t>(sigma.rows());
  if (n == mask.full_size()) {
    op.sigma_ = mask.reduce_square(sigma);
  } else if (n == mask.size()) {
    op.sigma_ = sigma;
  } else {
    throw InconsistentInputs("covariance of size " + std::to_string(n) +
                             " matches neither the full (" +
                             std::to_string(mask.full_size()) +
                             ") nor the reduced (" +
                             std::to_string(mask.size()) + ") data space");
  }
  return op;
}

CovarianceOperator CovarianceOperator::gaussian(const CMatrix& csm,
                                                const CMatrix& pcsm,
                                                std::size_t block_count,
                                                const SelectionMask& mask) {
  if (csm.rows() != csm.cols() || pcsm.rows() != csm.rows() ||
      pcsm.cols() != csm.cols() ||
      static_cast<std::size_t>(csm.rows()) != mask.mics()) {
    throw InconsistentInputs("CSM, PCSM and mask sizes differ");
  }
  if (block_count == 0) throw InvalidArgument("block count must be positive");
  CovarianceOperator op;
  op.mask_ = mask;
  op.csm_ = csm;
  op.pcsm_ = pcsm;
  op.scale_ = 1.0 / static_cast<double>(block_count);
  return op;
}

double CovarianceOperator::quadratic(const CVector& x) const {
  if (static_cast<std::size_t>(x.size()) != mask_.size()) {
    throw InconsistentInputs("vector does not match the covariance dimension");
  }
  if (sigma_.size() > 0) return x.dot(sigma_ * x).real();
  // zero-fill removed pairs; the full quadratic form then equals the reduced one
  const auto m = static_cast<Eigen::Index>(mask_.mics());
  CMatrix xm = CMatrix::Zero(m, m);
  const auto& keep = mask_.retained();
  for (std::size_t i = 0; i < keep.size(); ++i) {
    xm.data()[keep[i]] = x[static_cast<Eigen::Index>(i)];
  }
  // (C^T kron C) vec X = vec(C X C); the pseudo term maps X to P (conj(P) X)^T
  const CMatrix cx = csm_ * xm * csm_;
  const CMatrix px = pcsm_ * (pcsm_.conjugate() * xm).transpose();
  const cplx q = (xm.conjugate().cwiseProduct(cx + px)).sum();
  return q.real() * scale_;
}

double beamformer_variance(const WeightingScheme& w, const CMatrix& sigma,
                           const SelectionMask& mask, const CVector& g) {
  require_mask_matches(w, mask);
  const auto op = CovarianceOperator::dense(sigma, mask);
  const CVector gbar = reduced_rank_one(g, mask);
  const CVector x = w.apply_inverse(gbar);
  const double den = x.dot(gbar).real();
  if (!(den > 0.0)) {
    throw DegenerateSteering("steering vector vanishes on retained pairs");
  }
  return std::max(0.0, op.quadratic(x)) / (den * den);
}

double beamformer_variance(const WeightingScheme& w,
                           const CovarianceEstimate& sigma,
                           const SelectionMask& mask, const CVector& g) {
  return beamformer_variance(w, sigma.sigma(), mask, g);
}

RVector beamformer_variances(const WeightedSteering& steering,
                             const CovarianceOperator& sigma,
                             std::size_t workers) {
  if (sigma.dimension() != static_cast<std::size_t>(steering.gbar.rows())) {
    throw InconsistentInputs("covariance and steering masks differ");
  }
  RVector v(static_cast<Eigen::Index>(steering.points()));
  parallel_for(steering.points(), workers,
               [&](std::size_t begin, std::size_t end) {
                 for (std::size_t n = begin; n < end; ++n) {
                   const auto i = static_cast<Eigen::Index>(n);
                   const double den = steering.norms[i];
                   v[i] = std::max(
                              0.0, sigma.quadratic(steering.w_inv_gbar.col(i))) /
                          (den * den);
                 }
               });
  return v;
}

double rms_noise_level(const WeightedSteering& steering,
                       const CovarianceOperator& sigma, std::size_t workers) {
  return std::sqrt(beamformer_variances(steering, sigma, workers).sum());
}

// ---------------------------------------------------------------- bands

SourceMap band_average(const std::vector<SourceMap>& maps, double center_hz) {
  Band band = third_octave_band(center_hz);
  const double slack = 1e-9 * center_hz;
  std::vector<const SourceMap*> inside;
  for (const auto& m : maps) {
    if (m.frequency_hz >= band.lower_hz - slack &&
        m.frequency_hz <= band.upper_hz + slack) {
      inside.push_back(&m);
    }
  }
  if (inside.empty()) {
    std::vector<double> freqs;
    for (const auto& m : maps) freqs.push_back(m.frequency_hz);
    std::sort(freqs.begin(), freqs.end(), [&](double a, double b) {
      return std::abs(a - center_hz) < std::abs(b - center_hz);
    });
    std::ostringstream msg;
    msg << "no frequency bins in band [" << band.lower_hz << ", "
        << band.upper_hz << "] Hz; nearest bins:";
    for (std::size_t i = 0; i < std::min<std::size_t>(3, freqs.size()); ++i) {
      msg << " " << freqs[i];
    }
    throw NoBinsInBand(msg.str());
  }
  const SourceMap& first = *inside.front();
  SourceMap out;
  out.grid = first.grid;
  out.values = CVector::Zero(first.values.size());
  for (const auto* m : inside) {
    if (!(m->grid == first.grid) || m->weighting != first.weighting ||
        m->mask != first.mask) {
      throw InconsistentInputs("maps in a band must share grid, weighting and mask");
    }
    out.values += m->values;
  }
  out.values /= static_cast<double>(inside.size());
  out.powers = out.values.real().cwiseMax(0.0);
  band.bins = inside.size();
  out.band = band;
  out.frequency_hz = center_hz;
  out.weighting = first.weighting;
  out.mask = first.mask;
  out.block_count = first.block_count;
  return out;
}

}  // namespace aaim
