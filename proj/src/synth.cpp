#include "aaim/synth.hpp"

#include <cmath>

#include "aaim/errors.hpp"
#include "aaim/random.hpp"

namespace aaim {

void SynthScenario::validate() const {
  if (!(source_amplitude >= 0.0) || !std::isfinite(source_amplitude)) {
    throw InvalidArgument("source amplitude p0 must be >= 0");
  }
  if (!(noise_amplitude >= 0.0) || !std::isfinite(noise_amplitude)) {
    throw InvalidArgument("noise amplitude rho must be >= 0");
  }
  if (block_count == 0) throw InvalidArgument("block count must be >= 1");
  if (frequencies.empty()) throw InvalidArgument("scenario has no frequencies");
  for (std::size_t f = 0; f < frequencies.size(); ++f) {
    if (!(frequencies[f] >= 0.0) ||
        (f > 0 && !(frequencies[f] > frequencies[f - 1]))) {
      throw InvalidArgument("frequencies must be non-negative and increasing");
    }
  }
  if (array.size() < 2) throw InvalidArgument("scenario has no array");
  flow.validate();
  for (std::size_t m = 0; m < array.size(); ++m) {
    if (array[m] == source_position) {
      throw DegenerateGeometry("source lies on microphone " +
                               std::to_string(m));
    }
  }
}

namespace {

Vec3 vec3_from(const nlohmann::json& j, const char* key) {
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) {
    throw InvalidArgument(std::string(key) + " must be a 3-element array");
  }
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

}  // namespace

SynthScenario SynthScenario::from_json(const nlohmann::json& config,
                                       const std::filesystem::path& base_dir) {
  SynthScenario s;
  try {
    if (config.contains("source_position")) {
      s.source_position = vec3_from(config, "source_position");
    }
    s.source_amplitude = config.value("p0", 1.0);
    if (config.contains("noise_db")) {
      s.noise_amplitude =
          s.source_amplitude *
          std::pow(10.0, -config.at("noise_db").get<double>() / 20.0);
    } else {
      s.noise_amplitude = config.value("rho", 0.1);
    }
    s.block_count = config.value("blocks", std::size_t{1000});
    s.seed = config.value("seed", std::uint64_t{1});
    if (config.contains("frequencies")) {
      s.frequencies = config.at("frequencies").get<std::vector<double>>();
    } else {
      s.frequencies = third_octave_centres(500.0, 10000.0);
    }
    s.flow.speed_of_sound = config.value("speed_of_sound", 343.0);
    if (config.contains("mach")) s.flow.mach = vec3_from(config, "mach");
    if (config.contains("array")) {
      std::filesystem::path p = config.at("array").get<std::string>();
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      s.array = MicArray::load(p);
    } else {
      s.array = spiral_array(8, 8, 0.1, 0.75);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("scenario config: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json SynthScenario::to_json() const {
  nlohmann::json j;
  j["source_position"] = {source_position.x(), source_position.y(),
                          source_position.z()};
  j["p0"] = source_amplitude;
  j["rho"] = noise_amplitude;
  j["blocks"] = block_count;
  j["frequencies"] = frequencies;
  j["seed"] = seed;
  j["speed_of_sound"] = flow.speed_of_sound;
  j["mach"] = {flow.mach.x(), flow.mach.y(), flow.mach.z()};
  j["mics"] = array.size();
  return j;
}

CMatrix GroundTruth::expected_csm(std::size_t bin) const {
  const auto& s = signal_csm.at(bin);
  return s + noise_power * CMatrix::Identity(s.rows(), s.cols());
}

CMatrix GroundTruth::expected_block_covariance(std::size_t bin) const {
  const CMatrix c = expected_csm(bin);
  const Eigen::Index m = c.rows();
  CMatrix sigma(m * m, m * m);
  // (C^T kron C)[(m,l),(m',l')] = C(l',l) C(m,m')
  for (Eigen::Index l = 0; l < m; ++l) {
    for (Eigen::Index lp = 0; lp < m; ++lp) {
      sigma.block(l * m, lp * m, m, m) = c(lp, l) * c;
    }
  }
  return sigma;
}

SynthResult synthesize_blocks(const SynthScenario& scenario) {
  scenario.validate();
  const std::size_t mics = scenario.array.size();
  const std::size_t bins = scenario.frequencies.size();
  SynthResult result{
      BlockSamples(scenario.frequencies, scenario.block_count, mics),
      GroundTruth{scenario.frequencies, {}, 0.0}};
  result.truth.noise_power =
      scenario.noise_amplitude * scenario.noise_amplitude;
  result.truth.signal_csm.reserve(bins);

  for (std::size_t f = 0; f < bins; ++f) {
    const CVector g =
        propagation_vector(scenario.array, scenario.source_position,
                           angular(scenario.frequencies[f]), scenario.flow);
    const CVector source = scenario.source_amplitude * g;
    result.truth.signal_csm.push_back(source * source.adjoint());

    NormalSource rng(scenario.seed ^ static_cast<std::uint64_t>(f));
    for (std::size_t j = 0; j < scenario.block_count; ++j) {
      const cplx eta = rng.complex_normal();
      const CVector eps = rng.complex_normal(static_cast<Eigen::Index>(mics));
      result.blocks.set_snapshot(j, f,
                                 eta * source + scenario.noise_amplitude * eps);
    }
  }
  return result;
}

double noise_level_db(double p0, double rho) {
  if (!(p0 > 0.0) || !(rho > 0.0)) {
    throw InvalidArgument("noise level needs positive p0 and rho");
  }
  return 20.0 * std::log10(p0 / rho);
}

std::vector<double> third_octave_centres(double lo_hz, double hi_hz) {
  std::vector<double> out;
  for (int k = -30; k <= 30; ++k) {
    const double f = 1000.0 * std::pow(2.0, k / 3.0);
    // small slack so the nominal decade points (e.g. 10 kHz) are kept
    if (f >= lo_hz * 0.99 && f <= hi_hz * 1.01) out.push_back(f);
  }
  return out;
}

}  // namespace aaim
