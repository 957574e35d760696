#pragma once

// Single-monopole synthetic benchmark:
//   p_j = eta_j * p0 * g(y_s) + rho * eps_j
// with eta_j and the entries of eps_j independent standard complex normal.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"

#include "aaim/geometry.hpp"
#include "aaim/spectra.hpp"

namespace aaim {

struct SynthScenario {
  Vec3 source_position = Vec3(0.0, 0.0, 0.75);
  double source_amplitude = 1.0;  // p0 [Pa]
  double noise_amplitude = 0.1;   // rho [Pa]
  std::size_t block_count = 1000;
  std::vector<double> frequencies;  // Hz, strictly increasing
  std::uint64_t seed = 1;
  MicArray array;
  FlowField flow;

  void validate() const;

  /// Keys: source_position [x,y,z], p0 | (p0 and noise_db), rho, blocks,
  /// frequencies [Hz...], seed, array (path, relative to base_dir),
  /// speed_of_sound, mach [mx,my,mz].
  static SynthScenario from_json(const nlohmann::json& config,
                                 const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;
};

/// Deterministic expectations of the generator at every bin.
struct GroundTruth {
  std::vector<double> frequencies;
  std::vector<CMatrix> signal_csm;  // p0^2 g g^*, rank one
  double noise_power = 0.0;         // rho^2, the white diagonal term

  /// E[C^obs] = p0^2 G + rho^2 I.
  CMatrix expected_csm(std::size_t bin) const;
  /// Per-block covariance of vec(p p^*) for proper Gaussian samples,
  /// E[C]^T kron E[C]. Divide by J for the averaged CSM.
  CMatrix expected_block_covariance(std::size_t bin) const;
};

struct SynthResult {
  BlockSamples blocks;
  GroundTruth truth;
};

SynthResult synthesize_blocks(const SynthScenario& scenario);

/// 20 log10(p0 / rho).
double noise_level_db(double p0, double rho);

/// Third-octave centre frequencies 1000 * 2^(k/3) between lo and hi.
std::vector<double> third_octave_centres(double lo_hz, double hi_hz);

}  // namespace aaim
