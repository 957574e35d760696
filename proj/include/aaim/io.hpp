#pragma once

// AAIM binary containers (little-endian) and CSV tables.
//
//   blocks:     "AAIM" u32 version, u32 M, u32 J, u32 F, F x f64 Hz,
//               J*M*F x (f64 re, f64 im), block-major, then mic, then bin
//   matrices:   "AAIM" u32 version, u32 M, u32 F, F x f64 Hz,
//               F*M*M complex, row-major per bin
//   covariance: as matrices with M^2 in place of M and one method tag byte
//               after F; payload is the per-block covariance

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aaim/beamforming.hpp"
#include "aaim/covariance.hpp"
#include "aaim/diagnostics.hpp"
#include "aaim/spectra.hpp"

namespace aaim {

inline constexpr std::uint32_t kFormatVersion = 1;

struct MatrixSeries {
  std::vector<double> frequencies;
  std::vector<CMatrix> matrices;
};

struct CovarianceSeries {
  std::vector<double> frequencies;
  CovarianceMethod method = CovarianceMethod::GaussianFormula;
  std::vector<CMatrix> per_block;
};

std::string encode_blocks(const BlockSamples& blocks);
BlockSamples decode_blocks(const std::string& bytes);
std::string encode_matrices(const MatrixSeries& series);
MatrixSeries decode_matrices(const std::string& bytes);
std::string encode_covariance(const CovarianceSeries& series);
CovarianceSeries decode_covariance(const std::string& bytes);

void write_blocks(const std::filesystem::path& path, const BlockSamples& b);
BlockSamples read_blocks(const std::filesystem::path& path);
void write_matrices(const std::filesystem::path& path, const MatrixSeries& s);
MatrixSeries read_matrices(const std::filesystem::path& path);
void write_covariance(const std::filesystem::path& path,
                      const CovarianceSeries& s);
CovarianceSeries read_covariance(const std::filesystem::path& path);

/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// Columns x,y,z,re_value,im_value,power,power_db[,q] with '#' header lines.
void write_source_map_csv(const std::filesystem::path& path,
                          const SourceMap& map,
                          const RVector* damas_q = nullptr);
/// Reads a map written by write_source_map_csv. A lattice is attached when
/// the points form a complete row-major planar grid.
SourceMap read_source_map_csv(const std::filesystem::path& path);

/// Attaches a lattice to point lists laid out as build_focus_grid does.
std::optional<Lattice> infer_lattice(const std::vector<Vec3>& points);

struct MetricRow {
  double frequency_hz = 0.0;
  std::string metric;
  double value = 0.0;
  std::string flags;
};

/// Columns frequency,metric,value,flags.
void write_metric_csv(const std::filesystem::path& path,
                      const std::vector<MetricRow>& rows);
std::vector<MetricRow> metric_rows(double frequency_hz,
                                   const MetricReport& report);
std::vector<MetricRow> metric_rows(const std::vector<StatsReport>& reports);

}  // namespace aaim
