#pragma once

#include <vector>

#include "aaim/beamforming.hpp"
#include "aaim/covariance.hpp"
#include "aaim/spectra.hpp"

namespace aaim {

// ---- source map quality

struct ResolutionResult {
  double literal = 0.0;    // over the whole -1 dB super-level set
  double connected = 0.0;  // restricted to the component holding the peak
};

/// Largest distance from the (first) maximum to a point within 1 dB of it.
/// Needs a lattice grid.
ResolutionResult resolution_measure(const SourceMap& map);

struct SnrResult {
  double value_db = 0.0;
  bool no_sidelobe = false;  // value is the map's dynamic range instead
};

/// Level (in dB below the peak) at which the super-level set first splits
/// into more than one 8-connected component.
SnrResult snr_measure(const SourceMap& map);

/// 10 log10(max power / mean power).
double spr_measure(const SourceMap& map);

struct MetricReport {
  ResolutionResult resolution;
  SnrResult snr;
  double spr = 0.0;
};

MetricReport map_metrics(const SourceMap& map);

// ---- statistical assumptions on block data

/// sqrt(sum_m |mean_j p_jm|^2 / sum_m (mean_j |p_jm|)^2).
double zero_mean_deviation(const BlockSamples& blocks, std::size_t bin);

/// Anderson-Darling statistic for composite normality with the small-sample
/// adjustment A^2 (1 + 0.75/n + 2.25/n^2). +inf for degenerate samples.
double anderson_darling_statistic(std::vector<double> sample);

/// Critical value of the adjusted statistic; significance in
/// {0.10, 0.05, 0.025, 0.01}.
double anderson_darling_critical(double significance);

bool anderson_darling_accepts(const std::vector<double>& sample,
                              double significance = 0.05);

/// Fraction of microphones whose real and imaginary block samples both pass.
double anderson_darling_rate(const BlockSamples& blocks, std::size_t bin,
                             double significance = 0.05);

/// ||PCSM||_F / ||CSM||_F.
double properness_ratio(const CMatrix& csm, const CMatrix& pcsm);

/// min_{a > 0} ||Sigma - a I||_F / ||Sigma||_F.
double white_noise_deviation(const CMatrix& sigma);

/// white_noise_deviation of the Gaussian covariance built from (csm, pcsm),
/// evaluated without forming the M^2 x M^2 matrix.
double gaussian_white_noise_deviation(const CMatrix& csm, const CMatrix& pcsm);

struct StatsReport {
  double frequency_hz = 0.0;
  double eps_mean = 0.0;
  double ad_acceptance_rate = 0.0;
  double proper_ratio = 0.0;
  double white_noise_dev = 0.0;
};

std::vector<StatsReport> stats_report(
    const BlockSamples& blocks,
    CovarianceMethod method = CovarianceMethod::GaussianFormula,
    double significance = 0.05, std::size_t workers = 0);

}  // namespace aaim
