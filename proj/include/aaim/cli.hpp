#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "aaim/covariance.hpp"
#include "aaim/damas.hpp"
#include "aaim/synth.hpp"

namespace aaim {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumerical = 3,
};

/// Processing settings shared by beamform, damas and pipeline. Paths inside
/// the config are relative to the config file's directory.
struct RunConfig {
  nlohmann::json raw;
  std::filesystem::path base_dir;

  std::optional<SynthScenario> scenario;
  std::optional<std::filesystem::path> blocks_path;
  std::optional<MicArray> array;  // required unless a scenario provides one
  FlowField flow;

  FocusGrid grid;
  std::vector<WeightingChoice> weightings;
  nlohmann::json mask_spec = "none";
  std::vector<double> bands;  // third-octave centres; empty: every bin

  CovarianceMethod covariance = CovarianceMethod::GaussianFormula;
  std::optional<double> repair_alpha;

  bool damas = false;
  double tau = 1.5;
  std::vector<WeightingChoice> damas_weightings;  // default: all weightings

  bool stats = true;
  std::filesystem::path output = "out";

  static RunConfig from_json(const nlohmann::json& j,
                             const std::filesystem::path& base_dir = {});
};

/// {"origin": [x,y,z], "spacing": d | [dx,dy], "size": n | [nx,ny]} or
/// {"points": [[x,y,z], ...]}. Defaults to 41 x 41 points, 0.025 m, centred
/// at z = 0.75 m.
FocusGrid grid_from_json(const nlohmann::json& j);

/// "none", "diagonal" or {"remove": [[m, l], ...]}.
SelectionMask mask_from_json(const nlohmann::json& j, std::size_t mics);

int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace aaim
