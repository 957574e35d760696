#pragma once

// DAMAS deconvolution: H q = b with H built from weighted point spread
// functions, solved as (optionally Tikhonov-regularized) NNLS.

#include <optional>
#include <string>

#include "aaim/beamforming.hpp"

namespace aaim {

/// psi_W(y, y') = <vec G(y'), vec G(y)>_W / <vec G(y), vec G(y)>_W: the
/// beamformer output at `focus` for a unit monopole at `source`.
cplx psf_value(const WeightingScheme& w, const SelectionMask& mask,
               const CVector& g_focus, const CVector& g_source);

struct DamasSystem {
  RMatrix h;  // h(n, l): response at point n to a unit source at point l
  RVector b;  // Re I_W(y_n)
  FocusGrid grid;
  double frequency_hz = 0.0;
  std::string weighting;
  std::string mask;
};

/// The steering set must be computed with the same weighting, mask and grid
/// as the map; for band maps it is taken at the band centre frequency.
DamasSystem assemble_system(const WeightedSteering& steering,
                            const SourceMap& map, std::size_t workers = 0);

struct NnlsOptions {
  std::size_t max_iterations = 0;      // outer active-set steps; 0 -> 3N + 100
  std::size_t warm_start_iterations = 300;
  double kkt_relative_tolerance = 1e-8;
};

struct NnlsResult {
  RVector q;
  double residual_norm = 0.0;  // ||H q - b||
  double objective = 0.0;      // ||H q - b||^2 + alpha ||q||^2
  double kkt_residual = 0.0;
  double kkt_tolerance = 0.0;
  bool certified = false;      // kkt_residual <= kkt_tolerance
  std::size_t iterations = 0;
};

/// min ||H q - b||^2 + alpha ||q||^2 over q >= 0 in Gram form. The Gram
/// matrix is formed once and reused across alpha values.
class GramNnls {
 public:
  GramNnls(RMatrix h, RVector b);

  std::size_t size() const { return static_cast<std::size_t>(h_.cols()); }
  /// Largest eigenvalue of H^T H.
  double spectral_norm_squared() const { return lipschitz_; }
  double b_norm() const { return b_.norm(); }
  double residual_norm(const RVector& q) const;

  NnlsResult solve(double alpha, const RVector* warm_start = nullptr,
                   const NnlsOptions& options = {}) const;

 private:
  RMatrix h_;
  RVector b_;
  RMatrix gram_;  // H^T H
  RVector rhs_;   // H^T b
  double b_norm2_ = 0.0;
  double lipschitz_ = 0.0;
};

NnlsResult nnls_solve(const RMatrix& h, const RVector& b, double alpha,
                      const NnlsOptions& options = {});

enum class DiscrepancyFlag {
  None,
  OverRegularized,  // the bound holds even for the largest alpha
  Unattainable,     // the bound fails even for the smallest alpha
};

const char* to_string(DiscrepancyFlag flag);

struct DiscrepancyResult {
  double alpha = 0.0;
  double residual = 0.0;
  double target = 0.0;  // tau * delta
  DiscrepancyFlag flag = DiscrepancyFlag::None;
  NnlsResult solution;
  std::size_t evaluations = 0;
};

/// Largest alpha in [1e-8, 1e8] * ||H||_2^2 with ||H q_alpha - b|| <= tau
/// delta, by bisection in log alpha to relative width 1e-3.
DiscrepancyResult discrepancy_alpha(const GramNnls& system, double delta,
                                    double tau = 1.5,
                                    const NnlsOptions& options = {});
DiscrepancyResult discrepancy_alpha(const RMatrix& h, const RVector& b,
                                    double delta, double tau = 1.5,
                                    const NnlsOptions& options = {});

}  // namespace aaim
