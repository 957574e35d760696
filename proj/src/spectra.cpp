#include "aaim/spectra.hpp"

#include <cmath>
#include <string>

#include <fftw3.h>

#include "aaim/errors.hpp"

namespace aaim {

BlockSamples::BlockSamples(std::vector<double> frequencies_hz,
                           std::size_t blocks, std::size_t mics)
    : frequencies_(std::move(frequencies_hz)),
      blocks_(blocks),
      mics_(mics),
      data_(blocks * mics * frequencies_.size()) {}

CVector BlockSamples::snapshot(std::size_t block, std::size_t bin) const {
  CVector p(static_cast<Eigen::Index>(mics_));
  for (std::size_t m = 0; m < mics_; ++m) {
    p[static_cast<Eigen::Index>(m)] = at(block, m, bin);
  }
  return p;
}

void BlockSamples::set_snapshot(std::size_t block, std::size_t bin,
                                const CVector& p) {
  for (std::size_t m = 0; m < mics_; ++m) {
    at(block, m, bin) = p[static_cast<Eigen::Index>(m)];
  }
}

CMatrix BlockSamples::bin_matrix(std::size_t bin) const {
  CMatrix out(static_cast<Eigen::Index>(mics_),
              static_cast<Eigen::Index>(blocks_));
  for (std::size_t j = 0; j < blocks_; ++j) {
    for (std::size_t m = 0; m < mics_; ++m) {
      out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j)) =
          at(j, m, bin);
    }
  }
  return out;
}

void BlockSamples::validate() const {
  if (blocks_ == 0) throw InvalidArgument("block set is empty");
  if (mics_ == 0) throw InvalidArgument("block samples have no microphones");
  if (frequencies_.empty()) throw InvalidArgument("no frequency bins");
  for (std::size_t f = 1; f < frequencies_.size(); ++f) {
    if (!(frequencies_[f] > frequencies_[f - 1])) {
      throw InvalidArgument("frequencies must be strictly increasing");
    }
  }
  if (data_.size() != blocks_ * mics_ * frequencies_.size()) {
    throw InvalidArgument("block sample payload has the wrong size");
  }
}

namespace {

void require_blocks(const BlockSamples& blocks, std::size_t bin) {
  if (blocks.blocks() == 0) throw InvalidArgument("block set is empty");
  if (bin >= blocks.bins()) {
    throw InvalidArgument("frequency bin " + std::to_string(bin) +
                          " out of range");
  }
}

}  // namespace

CMatrix estimate_csm(const BlockSamples& blocks, std::size_t bin) {
  require_blocks(blocks, bin);
  const CMatrix p = blocks.bin_matrix(bin);
  CMatrix c = p * p.adjoint() / static_cast<double>(blocks.blocks());
  // exact Hermitian symmetry; the product is only symmetric up to round-off
  return 0.5 * (c + c.adjoint());
}

CMatrix estimate_pcsm(const BlockSamples& blocks, std::size_t bin) {
  require_blocks(blocks, bin);
  const CMatrix p = blocks.bin_matrix(bin);
  CMatrix c = p * p.transpose() / static_cast<double>(blocks.blocks());
  return 0.5 * (c + c.transpose());
}

std::vector<CMatrix> estimate_csm(const BlockSamples& blocks) {
  std::vector<CMatrix> out;
  out.reserve(blocks.bins());
  for (std::size_t f = 0; f < blocks.bins(); ++f) {
    out.push_back(estimate_csm(blocks, f));
  }
  return out;
}

std::vector<CMatrix> estimate_pcsm(const BlockSamples& blocks) {
  std::vector<CMatrix> out;
  out.reserve(blocks.bins());
  for (std::size_t f = 0; f < blocks.bins(); ++f) {
    out.push_back(estimate_pcsm(blocks, f));
  }
  return out;
}

SpectralData estimate_spectra(const BlockSamples& blocks) {
  return SpectralData{blocks.frequencies(), estimate_csm(blocks),
                      estimate_pcsm(blocks), blocks.blocks()};
}

std::vector<double> window_coefficients(Window window, std::size_t length) {
  std::vector<double> w(length, 1.0);
  if (window == Window::Hann) {
    // periodic Hann, the usual choice for spectral estimation
    for (std::size_t n = 0; n < length; ++n) {
      w[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(n) /
                                  static_cast<double>(length));
    }
  }
  return w;
}

std::size_t welch_block_count(std::size_t samples,
                              const WelchOptions& options) {
  if (options.block_length == 0) {
    throw InvalidArgument("block length must be positive");
  }
  if (!(options.overlap >= 0.0 && options.overlap < 1.0)) {
    throw InvalidArgument("overlap must lie in [0, 1)");
  }
  if (options.block_length > samples) {
    throw InvalidArgument("block length " +
                          std::to_string(options.block_length) +
                          " exceeds signal length " + std::to_string(samples));
  }
  const auto hop = static_cast<std::size_t>(std::llround(
      static_cast<double>(options.block_length) * (1.0 - options.overlap)));
  if (hop == 0) throw InvalidArgument("overlap leaves a zero hop size");
  return (samples - options.block_length) / hop + 1;
}

namespace {

struct FftwPlan {
  fftw_plan plan = nullptr;
  double* in = nullptr;
  fftw_complex* out = nullptr;

  explicit FftwPlan(std::size_t n) {
    in = fftw_alloc_real(n);
    out = fftw_alloc_complex(n / 2 + 1);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  ~FftwPlan() {
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftwPlan(const FftwPlan&) = delete;
  FftwPlan& operator=(const FftwPlan&) = delete;
};

}  // namespace

BlockSamples welch_blocks(const RMatrix& signals, double sample_rate,
                          const WelchOptions& options) {
  if (!(sample_rate > 0.0)) throw InvalidArgument("sample rate must be > 0");
  const auto mics = static_cast<std::size_t>(signals.rows());
  const auto samples = static_cast<std::size_t>(signals.cols());
  if (mics == 0) throw InvalidArgument("no microphone signals");
  const std::size_t count = welch_block_count(samples, options);
  const std::size_t n = options.block_length;
  const auto hop = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * (1.0 - options.overlap)));

  const std::vector<double> w = window_coefficients(options.window, n);
  double sum_w = 0.0, sum_w2 = 0.0;
  for (double v : w) {
    sum_w += v;
    sum_w2 += v * v;
  }

  const std::size_t bins = n / 2 + 1;
  std::vector<double> freqs(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    freqs[k] = static_cast<double>(k) * sample_rate / static_cast<double>(n);
  }

  // |X_k|^2 scale for the one-sided spectrum; DC and Nyquist are not doubled
  std::vector<double> scale(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
    const double fold = edge ? 1.0 : 2.0;
    const double power =
        options.scaling == SpectrumScaling::PowerPerBin
            ? fold / (static_cast<double>(n) * sum_w2)
            : fold / (sum_w * sum_w);
    scale[k] = std::sqrt(power);
  }

  BlockSamples out(std::move(freqs), count, mics);
  FftwPlan fft(n);
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t start = j * hop;
    for (std::size_t m = 0; m < mics; ++m) {
      for (std::size_t i = 0; i < n; ++i) {
        fft.in[i] = w[i] * signals(static_cast<Eigen::Index>(m),
                                   static_cast<Eigen::Index>(start + i));
      }
      fftw_execute(fft.plan);
      for (std::size_t k = 0; k < bins; ++k) {
        out.at(j, m, k) = scale[k] * cplx(fft.out[k][0], fft.out[k][1]);
      }
    }
  }
  return out;
}

}  // namespace aaim
