#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aaim/geometry.hpp"
#include "aaim/weighting.hpp"

namespace aaim {

/// Third-octave band [2^(-1/6) f0, 2^(1/6) f0].
struct Band {
  double center_hz = 0.0;
  double lower_hz = 0.0;
  double upper_hz = 0.0;
  std::size_t bins = 0;  // number of bins averaged, 0 if not yet known
};

Band third_octave_band(double center_hz);

struct SourceMap {
  FocusGrid grid;
  double frequency_hz = 0.0;  // band centre for band-averaged maps
  std::optional<Band> band;
  CVector values;  // raw beamformer outputs
  RVector powers;  // max(0, Re values)
  std::string weighting;
  std::string mask;
  std::size_t block_count = 0;

  /// 10 log10(power / max power); -inf where the power is zero.
  RVector power_db() const;
  std::size_t argmax() const;
  double max_power() const;
};

/// Mask-reduced vec G(y_n) for every focus point together with W^-1 applied
/// to each, so the factorization of W is reused by the beamformer, variance
/// and point spread function evaluations.
struct WeightedSteering {
  CMatrix gbar;        // reduced vec(g g^*) per column
  CMatrix w_inv_gbar;  // W^-1 gbar
  RVector norms;       // <gbar, gbar>_W > 0
  std::string weighting;
  SelectionMask mask;

  std::size_t mics() const { return mask.mics(); }
  std::size_t points() const { return static_cast<std::size_t>(gbar.cols()); }
};

/// `steering` holds one propagation vector per column.
WeightedSteering weighted_steering(const WeightingScheme& w,
                                   const SelectionMask& mask,
                                   const CMatrix& steering,
                                   std::size_t workers = 0);

/// I_W = <vec C, vec G>_W / <vec G, vec G>_W on the retained pairs.
cplx beamform_point(const CMatrix& csm, const WeightingScheme& w,
                    const SelectionMask& mask, const CVector& g);

SourceMap beamform_map(const CMatrix& csm, const WeightedSteering& steering,
                       const FocusGrid& grid, double frequency_hz,
                       std::size_t block_count = 0);

SourceMap beamform_map(const CMatrix& csm, const WeightingScheme& w,
                       const SelectionMask& mask, const FocusGrid& grid,
                       const MicArray& array, double frequency_hz,
                       const FlowField& flow, std::size_t block_count = 0,
                       std::size_t workers = 0);

/// Quadratic forms x^* Sigma x over the (reduced) data space, where Sigma is
/// the covariance of the averaged CSM. The Gaussian form never builds the
/// M^2 x M^2 matrix.
class CovarianceOperator {
 public:
  /// `sigma` may be full (M^2) or already reduced by `mask`.
  static CovarianceOperator dense(const CMatrix& sigma,
                                  const SelectionMask& mask);
  /// Sigma = per-block Gaussian covariance from (csm, pcsm) divided by J.
  static CovarianceOperator gaussian(const CMatrix& csm, const CMatrix& pcsm,
                                     std::size_t block_count,
                                     const SelectionMask& mask);

  /// Re(x^* Sigma x) for a reduced vector x.
  double quadratic(const CVector& x) const;
  std::size_t dimension() const { return mask_.size(); }

 private:
  CovarianceOperator() = default;
  SelectionMask mask_;
  CMatrix sigma_;  // reduced dense form, empty for the Gaussian form
  CMatrix csm_, pcsm_;
  double scale_ = 1.0;
};

/// V_W = (x^* Sigma x) / <gbar, x>^2 with x = W^-1 gbar.
double beamformer_variance(const WeightingScheme& w, const CMatrix& sigma,
                           const SelectionMask& mask, const CVector& g);
double beamformer_variance(const WeightingScheme& w,
                           const CovarianceEstimate& sigma,
                           const SelectionMask& mask, const CVector& g);

/// Per-point variances for a prepared steering set.
RVector beamformer_variances(const WeightedSteering& steering,
                             const CovarianceOperator& sigma,
                             std::size_t workers = 0);

/// sqrt(sum_n V_W(y_n)).
double rms_noise_level(const WeightedSteering& steering,
                       const CovarianceOperator& sigma,
                       std::size_t workers = 0);

/// Mean of the complex values of all maps whose frequency lies in the
/// third-octave band around `center_hz`; powers are clamped afterwards.
SourceMap band_average(const std::vector<SourceMap>& maps, double center_hz);

}  // namespace aaim
