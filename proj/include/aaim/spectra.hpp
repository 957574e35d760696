#pragma once

#include <span>
#include <vector>

#include "aaim/types.hpp"

namespace aaim {

/// Frequency-domain block samples p_j(x_m, f). Storage is block-major, then
/// microphone, then frequency, which is also the on-disk order.
class BlockSamples {
 public:
  BlockSamples() = default;
  BlockSamples(std::vector<double> frequencies_hz, std::size_t blocks,
               std::size_t mics);

  std::size_t blocks() const { return blocks_; }
  std::size_t mics() const { return mics_; }
  std::size_t bins() const { return frequencies_.size(); }
  const std::vector<double>& frequencies() const { return frequencies_; }
  double omega(std::size_t bin) const { return angular(frequencies_[bin]); }

  cplx& at(std::size_t block, std::size_t mic, std::size_t bin) {
    return data_[(block * mics_ + mic) * bins() + bin];
  }
  cplx at(std::size_t block, std::size_t mic, std::size_t bin) const {
    return data_[(block * mics_ + mic) * bins() + bin];
  }

  /// Pressure vector of one block at one frequency bin.
  CVector snapshot(std::size_t block, std::size_t bin) const;
  void set_snapshot(std::size_t block, std::size_t bin, const CVector& p);
  /// All blocks of one bin as an M x J matrix.
  CMatrix bin_matrix(std::size_t bin) const;

  std::vector<cplx>& raw() { return data_; }
  const std::vector<cplx>& raw() const { return data_; }

  /// Throws InvalidArgument on empty dimensions or non-increasing frequencies.
  void validate() const;

  bool operator==(const BlockSamples& other) const = default;

 private:
  std::vector<double> frequencies_;
  std::size_t blocks_ = 0;
  std::size_t mics_ = 0;
  std::vector<cplx> data_;
};

/// Block-averaged CSM and pseudo-CSM per frequency bin.
struct SpectralData {
  std::vector<double> frequencies;
  std::vector<CMatrix> csm;
  std::vector<CMatrix> pcsm;
  std::size_t block_count = 0;
};

CMatrix estimate_csm(const BlockSamples& blocks, std::size_t bin);
CMatrix estimate_pcsm(const BlockSamples& blocks, std::size_t bin);
std::vector<CMatrix> estimate_csm(const BlockSamples& blocks);
std::vector<CMatrix> estimate_pcsm(const BlockSamples& blocks);
SpectralData estimate_spectra(const BlockSamples& blocks);

enum class Window { Rectangular, Hann };

enum class SpectrumScaling {
  PowerPerBin,  // auto-power averages estimate one-sided PSD times bin width
  Amplitude,    // a sinusoid of amplitude A on a bin gives auto-power A^2 / 2
};

struct WelchOptions {
  std::size_t block_length = 1024;
  double overlap = 0.5;
  Window window = Window::Hann;
  SpectrumScaling scaling = SpectrumScaling::PowerPerBin;
};

std::vector<double> window_coefficients(Window window, std::size_t length);

/// Number of blocks for a signal of `samples` samples.
std::size_t welch_block_count(std::size_t samples, const WelchOptions& options);

/// Splits each microphone's real time series (rows of `signals`) into
/// windowed, overlapping blocks and transforms them. Frequencies are the
/// one-sided FFT bins k * fs / block_length.
BlockSamples welch_blocks(const RMatrix& signals, double sample_rate,
                          const WelchOptions& options = {});

}  // namespace aaim
