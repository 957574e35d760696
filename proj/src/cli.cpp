#include "aaim/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"

#include "aaim/diagnostics.hpp"
#include "aaim/errors.hpp"
#include "aaim/io.hpp"
#include "aaim/parallel.hpp"

namespace aaim {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------- config

namespace {

Vec3 vec3_of(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw InvalidArgument("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

std::pair<double, double> pair_of_json(const json& j) {
  if (j.is_number()) return {j.get<double>(), j.get<double>()};
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 2) throw InvalidArgument("expected a number or a pair");
  return {v[0], v[1]};
}

json load_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

fs::path relative_to(const fs::path& base, const fs::path& p) {
  return p.is_relative() && !base.empty() ? base / p : p;
}

std::vector<WeightingChoice> weightings_of(const json& j) {
  std::vector<WeightingChoice> out;
  for (const auto& w : j) out.push_back(WeightingChoice::from_json(w));
  return out;
}

}  // namespace

FocusGrid grid_from_json(const json& j) {
  try {
    if (j.contains("points")) {
      std::vector<Vec3> pts;
      for (const auto& p : j.at("points")) pts.push_back(vec3_of(p));
      return make_point_grid(std::move(pts));
    }
    const Vec3 origin = j.contains("origin") ? vec3_of(j.at("origin"))
                                             : Vec3(-0.5, -0.5, 0.75);
    const auto [dx, dy] =
        j.contains("spacing") ? pair_of_json(j.at("spacing"))
                              : std::pair<double, double>{0.025, 0.025};
    const auto [nx, ny] = j.contains("size")
                              ? pair_of_json(j.at("size"))
                              : std::pair<double, double>{41.0, 41.0};
    if (nx < 1 || ny < 1 || nx != std::floor(nx) || ny != std::floor(ny)) {
      throw InvalidArgument("grid size must be positive integers");
    }
    return build_focus_grid(origin, dx, dy, static_cast<std::size_t>(nx),
                            static_cast<std::size_t>(ny));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("grid config: ") + e.what());
  }
}

SelectionMask mask_from_json(const json& j, std::size_t mics) {
  if (j.is_null()) return SelectionMask::full(mics);
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "none") return SelectionMask::full(mics);
    if (s == "diagonal") return SelectionMask::diagonal_removal(mics);
    throw InvalidArgument("unknown mask '" + s + "'");
  }
  try {
    std::vector<IndexPair> pairs;
    for (const auto& p : j.at("remove")) {
      const auto v = p.get<std::vector<std::size_t>>();
      if (v.size() != 2) throw InvalidArgument("mask pairs need two indices");
      pairs.push_back({v[0], v[1]});
    }
    return SelectionMask::removing(mics, std::move(pairs));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("mask config: ") + e.what());
  }
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  RunConfig c;
  c.raw = j;
  c.base_dir = base_dir;
  try {
    if (j.contains("scenario") && j.contains("blocks")) {
      throw InvalidArgument("config names both a scenario and a blocks file");
    }
    if (j.contains("scenario")) {
      const auto& s = j.at("scenario");
      if (s.is_string()) {
        const fs::path p = relative_to(base_dir, s.get<std::string>());
        c.scenario = SynthScenario::from_json(load_json(p), p.parent_path());
      } else {
        c.scenario = SynthScenario::from_json(s, base_dir);
      }
      if (j.contains("seed")) c.scenario->seed = j.at("seed").get<std::uint64_t>();
      c.array = c.scenario->array;
      c.flow = c.scenario->flow;
    }
    if (j.contains("blocks")) {
      c.blocks_path = relative_to(base_dir, j.at("blocks").get<std::string>());
    }
    if (j.contains("array")) {
      c.array = MicArray::load(relative_to(base_dir, j.at("array").get<std::string>()));
    }
    if (j.contains("speed_of_sound")) {
      c.flow.speed_of_sound = j.at("speed_of_sound").get<double>();
    }
    if (j.contains("mach")) c.flow.mach = vec3_of(j.at("mach"));
    c.flow.validate();
    c.grid = grid_from_json(j.value("grid", json::object()));
    c.weightings = weightings_of(
        j.value("weightings", json::array({"conventional", "ivd", "ivf"})));
    if (c.weightings.empty()) throw InvalidArgument("no weightings requested");
    c.mask_spec = j.value("mask", json("none"));
    if (j.contains("bands")) c.bands = j.at("bands").get<std::vector<double>>();
    if (j.contains("covariance")) {
      const auto& cov = j.at("covariance");
      const auto method = cov.value("method", std::string("gaussian"));
      if (method == "gaussian") {
        c.covariance = CovarianceMethod::GaussianFormula;
      } else if (method == "sample") {
        c.covariance = CovarianceMethod::Sample;
      } else {
        throw InvalidArgument("unknown covariance method '" + method + "'");
      }
      if (cov.contains("repair_alpha") && !cov.at("repair_alpha").is_null()) {
        c.repair_alpha = cov.at("repair_alpha").get<double>();
        if (!(*c.repair_alpha > 0.0)) {
          throw InvalidArgument("repair_alpha must be positive");
        }
      }
    }
    if (j.contains("damas")) {
      const auto& d = j.at("damas");
      c.damas = d.value("enabled", true);
      c.tau = d.value("tau", 1.5);
      if (d.contains("weightings")) {
        c.damas_weightings = weightings_of(d.at("weightings"));
      }
    }
    if (c.damas_weightings.empty()) c.damas_weightings = c.weightings;
    c.stats = j.value("stats", true);
    c.output = relative_to(base_dir, j.value("output", std::string("out")));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("run config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------- stages

namespace {

std::string number_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

class Run {
 public:
  Run(fs::path workdir, std::size_t workers)
      : workdir_(std::move(workdir)), workers_(workers) {
    manifest_["tool"] = "aaim";
    manifest_["version"] = AAIM_VERSION;
    manifest_["workers"] = workers_;
    manifest_["warnings"] = json::array();
    manifest_["timings_s"] = json::object();
  }

  fs::path path(const std::string& p) const { return relative_to(workdir_, p); }
  std::size_t workers() const { return workers_; }
  json& manifest() { return manifest_; }

  void warn(const std::string& msg) {
    std::cerr << "warning: " << msg << "\n";
    manifest_["warnings"].push_back(msg);
  }

  template <typename Fn>
  auto timed(const std::string& stage, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&] {
      const std::chrono::duration<double> dt =
          std::chrono::steady_clock::now() - t0;
      auto& slot = manifest_["timings_s"][stage];
      slot = (slot.is_number() ? slot.get<double>() : 0.0) + dt.count();
    };
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      finish();
    } else {
      auto r = fn();
      finish();
      return r;
    }
  }

  void write_manifest(const fs::path& file) {
    write_file_atomic(file, manifest_.dump(2) + "\n");
  }

 private:
  fs::path workdir_;
  std::size_t workers_;
  json manifest_;
};

/// Per-bin access to the data covariance in the configured form.
class CovarianceSource {
 public:
  CovarianceSource(const SpectralData& spectra, CovarianceMethod method,
                   const BlockSamples* blocks, const CovarianceSeries* file,
                   std::optional<double> repair, Run& run)
      : spectra_(spectra),
        method_(file ? file->method : method),
        blocks_(blocks),
        file_(file),
        repair_(repair),
        run_(run) {
    const auto mics = static_cast<std::size_t>(spectra.csm.at(0).rows());
    if (file_) {
      if (static_cast<std::size_t>(file_->per_block.at(0).rows()) != mics * mics) {
        throw InconsistentInputs(
            "covariance file is " + std::to_string(file_->per_block[0].rows()) +
            " x " + std::to_string(file_->per_block[0].rows()) + " but the CSM has " +
            std::to_string(mics) + " microphones (expected " +
            std::to_string(mics * mics) + ")");
      }
      if (file_->frequencies != spectra.frequencies) {
        throw InconsistentInputs("covariance file frequencies differ from the CSM");
      }
    } else if (method_ == CovarianceMethod::Sample && blocks_ == nullptr) {
      throw InvalidArgument("the sample covariance needs block data");
    }
  }

  std::size_t block_count() const { return spectra_.block_count; }

  const CMatrix& pcsm(std::size_t bin) const {
    if (spectra_.pcsm.empty()) {
      if (zero_pcsm_.size() == 0) {
        zero_pcsm_ = CMatrix::Zero(spectra_.csm[0].rows(), spectra_.csm[0].cols());
      }
      return zero_pcsm_;
    }
    return spectra_.pcsm.at(bin);
  }

  /// Per-block covariance, dense; repaired when requested.
  CMatrix per_block(std::size_t bin) {
    CovarianceEstimate est;
    if (file_) {
      est.per_block = file_->per_block.at(bin);
      est.method = file_->method;
    } else if (method_ == CovarianceMethod::Sample) {
      est = sample_covariance(*blocks_, bin);
      if (est.rank && *est.rank < static_cast<std::size_t>(est.per_block.rows())) {
        run_.warn("sample covariance at " +
                  number_label(spectra_.frequencies[bin]) + " Hz has rank " +
                  std::to_string(*est.rank) + " < " +
                  std::to_string(est.per_block.rows()));
      }
    } else {
      est.per_block = gaussian_covariance_estimate(spectra_.csm.at(bin), pcsm(bin));
    }
    if (repair_) {
      est = repaired(std::move(est), *repair_);
      if (est.repair && est.repair->clipped > 0) {
        run_.warn("covariance at " + number_label(spectra_.frequencies[bin]) +
                  " Hz: " + std::to_string(est.repair->clipped) +
                  " eigenvalues raised to " + number_label(*repair_));
      }
    }
    return est.per_block;
  }

  /// Diagonal of the per-block covariance without forming the matrix when
  /// the Gaussian formula applies.
  RVector per_block_diagonal(std::size_t bin) {
    if (file_ || method_ == CovarianceMethod::Sample || repair_) {
      return per_block(bin).diagonal().real();
    }
    const CMatrix& c = spectra_.csm.at(bin);
    const CMatrix& p = pcsm(bin);
    const Eigen::Index m = c.rows();
    RVector d(m * m);
    for (Eigen::Index l = 0; l < m; ++l) {
      for (Eigen::Index k = 0; k < m; ++k) {
        d[l * m + k] = (c(k, k) * std::conj(c(l, l))).real() + std::norm(p(k, l));
      }
    }
    return d;
  }

  /// Covariance of the averaged CSM restricted to `mask`.
  CovarianceOperator averaged(std::size_t bin, const SelectionMask& mask) {
    const std::size_t j = spectra_.block_count;
    if (j == 0) {
      throw InvalidArgument("block count unknown; pass --blocks-count");
    }
    if (!file_ && method_ == CovarianceMethod::GaussianFormula && !repair_) {
      return CovarianceOperator::gaussian(spectra_.csm.at(bin), pcsm(bin), j, mask);
    }
    return CovarianceOperator::dense(per_block(bin) / static_cast<double>(j),
                                     mask);
  }

 private:
  const SpectralData& spectra_;
  CovarianceMethod method_;
  const BlockSamples* blocks_;
  const CovarianceSeries* file_;
  std::optional<double> repair_;
  Run& run_;
  mutable CMatrix zero_pcsm_;
};

WeightingScheme make_weighting(const WeightingChoice& choice, std::size_t bin,
                               const CMatrix& csm, const SelectionMask& mask,
                               CovarianceSource& cov) {
  try {
    switch (choice.kind) {
      case WeightingKind::InverseVarianceDiagonal:
        return WeightingScheme::diagonal(cov.per_block_diagonal(bin))
            .set_label("ivd")
            .reduce(mask);
      case WeightingKind::InverseCovarianceFull: {
        const CMatrix sigma = cov.per_block(bin);
        return build_weighting(choice, csm, &sigma, mask);
      }
      default:
        return build_weighting(choice, csm, nullptr, mask);
    }
  } catch (const NotPositiveDefinite& e) {
    throw NotPositiveDefinite(choice.name() + " weighting: " + e.what() +
                              "; set covariance.repair_alpha to regularize");
  }
}

struct Job {
  std::string label;
  double centre_hz;
  std::vector<std::size_t> bins;
  std::size_t centre_bin;
  bool band;
};

std::vector<Job> plan_jobs(const std::vector<double>& freqs,
                           const std::vector<double>& bands) {
  std::vector<Job> jobs;
  if (bands.empty()) {
    for (std::size_t f = 0; f < freqs.size(); ++f) {
      jobs.push_back({"f" + number_label(freqs[f]), freqs[f], {f}, f, false});
    }
    return jobs;
  }
  for (double centre : bands) {
    const Band band = third_octave_band(centre);
    Job job{"b" + number_label(centre), centre, {}, 0, true};
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < freqs.size(); ++f) {
      if (freqs[f] >= band.lower_hz - 1e-9 * centre &&
          freqs[f] <= band.upper_hz + 1e-9 * centre) {
        job.bins.push_back(f);
        if (std::abs(freqs[f] - centre) < best) {
          best = std::abs(freqs[f] - centre);
          job.centre_bin = f;
        }
      }
    }
    if (job.bins.empty()) {
      std::ostringstream msg;
      msg << "no frequency bins in the band around " << centre << " Hz ["
          << band.lower_hz << ", " << band.upper_hz << "]";
      throw NoBinsInBand(msg.str());
    }
    jobs.push_back(std::move(job));
  }
  return jobs;
}

bool contains_choice(const std::vector<WeightingChoice>& list,
                     const WeightingChoice& c) {
  for (const auto& w : list) {
    if (w.to_json() == c.to_json()) return true;
  }
  return false;
}

struct ImagingOptions {
  bool maps = true;
  bool damas = false;
  bool metrics = true;
};

/// Beamforming (and optionally DAMAS) for every job and weighting.
void run_imaging(Run& run, const RunConfig& cfg, const SpectralData& spectra,
                 CovarianceSource& cov, const MicArray& array,
                 const fs::path& out_dir, const ImagingOptions& opts) {
  const auto mics = static_cast<std::size_t>(spectra.csm.at(0).rows());
  if (array.size() != mics) {
    throw InconsistentInputs("array has " + std::to_string(array.size()) +
                             " microphones but the data has " +
                             std::to_string(mics));
  }
  const SelectionMask mask = mask_from_json(cfg.mask_spec, mics);
  std::vector<WeightingChoice> choices = cfg.weightings;
  if (opts.damas) {
    for (const auto& c : cfg.damas_weightings) {
      if (!contains_choice(choices, c)) choices.push_back(c);
    }
  }
  const auto jobs = plan_jobs(spectra.frequencies, cfg.bands);
  json results = json::array();
  std::map<std::string, std::vector<MetricRow>> metrics;

  for (const auto& job : jobs) {
    std::vector<std::vector<SourceMap>> maps(choices.size());
    std::vector<std::optional<WeightedSteering>> centre(choices.size());
    for (std::size_t bin : job.bins) {
      const double f = spectra.frequencies[bin];
      const CMatrix steering = run.timed("steering", [&] {
        return propagation_matrix(array, cfg.grid, angular(f), cfg.flow);
      });
      for (std::size_t k = 0; k < choices.size(); ++k) {
        const auto& csm = spectra.csm[bin];
        auto ws = run.timed("weighting", [&] {
          const auto w = make_weighting(choices[k], bin, csm, mask, cov);
          return weighted_steering(w, mask, steering, run.workers());
        });
        maps[k].push_back(run.timed("beamform", [&] {
          return beamform_map(csm, ws, cfg.grid, f, spectra.block_count);
        }));
        if (opts.damas && bin == job.centre_bin &&
            contains_choice(cfg.damas_weightings, choices[k])) {
          centre[k] = std::move(ws);
        }
      }
    }
    for (std::size_t k = 0; k < choices.size(); ++k) {
      const std::string name = choices[k].name();
      SourceMap map = job.band ? band_average(maps[k], job.centre_hz)
                               : std::move(maps[k].front());
      if (opts.maps && contains_choice(cfg.weightings, choices[k])) {
        write_source_map_csv(out_dir / "maps" / (name + "_" + job.label + ".csv"),
                             map);
        if (opts.metrics && map.grid.lattice) {
          try {
            auto rows = metric_rows(job.centre_hz, map_metrics(map));
            auto& dst = metrics[name];
            dst.insert(dst.end(), rows.begin(), rows.end());
          } catch (const UndefinedMetric& e) {
            run.warn(name + " " + job.label + ": " + e.what());
          }
        }
      }
      if (!centre[k]) continue;
      const auto& ws = *centre[k];
      json entry{{"weighting", name},
                 {"job", job.label},
                 {"centre_hz", job.centre_hz},
                 {"system_frequency_hz", spectra.frequencies[job.centre_bin]},
                 {"bins", job.bins.size()}};
      const double delta = run.timed("noise_level", [&] {
        return rms_noise_level(ws, cov.averaged(job.centre_bin, mask),
                               run.workers());
      });
      const DamasSystem sys = run.timed("damas_assembly", [&] {
        return assemble_system(ws, map, run.workers());
      });
      const auto disc = run.timed("damas_solve", [&] {
        return discrepancy_alpha(GramNnls(sys.h, sys.b), delta, cfg.tau);
      });
      entry["delta_rms"] = delta;
      entry["alpha"] = disc.alpha;
      entry["residual"] = disc.residual;
      entry["target"] = disc.target;
      entry["flag"] = to_string(disc.flag);
      entry["nnls_certified"] = disc.solution.certified;
      entry["kkt_residual"] = disc.solution.kkt_residual;
      if (disc.flag != DiscrepancyFlag::None) {
        run.warn(name + " " + job.label + ": discrepancy principle " +
                 to_string(disc.flag));
      }
      if (!disc.solution.certified) {
        run.warn(name + " " + job.label + ": NNLS optimality not certified");
      }
      results.push_back(entry);
      write_source_map_csv(out_dir / "damas" / (name + "_" + job.label + ".csv"),
                           map, &disc.solution.q);
    }
  }
  for (const auto& [name, rows] : metrics) {
    write_metric_csv(out_dir / "metrics" / (name + ".csv"), rows);
  }
  if (opts.damas) run.manifest()["damas"] = results;
}

SpectralData spectra_from_files(const fs::path& csm_path,
                                const std::optional<fs::path>& pcsm_path,
                                std::size_t block_count, Run& run) {
  auto csm = read_matrices(csm_path);
  SpectralData s;
  s.frequencies = csm.frequencies;
  s.csm = std::move(csm.matrices);
  s.block_count = block_count;
  if (pcsm_path) {
    auto p = read_matrices(*pcsm_path);
    if (p.frequencies != s.frequencies ||
        p.matrices.at(0).rows() != s.csm.at(0).rows()) {
      throw InconsistentInputs("PCSM file does not match the CSM file");
    }
    s.pcsm = std::move(p.matrices);
  } else {
    run.warn("no pseudo-CSM given; the Gaussian covariance assumes proper data");
  }
  return s;
}

void write_spectra(const fs::path& csm_path, const fs::path& pcsm_path,
                   const SpectralData& s) {
  write_matrices(csm_path, {s.frequencies, s.csm});
  write_matrices(pcsm_path, {s.frequencies, s.pcsm});
}

RMatrix read_signals(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    for (char& ch : line) {
      if (ch == ',' || ch == ';' || ch == '\t') ch = ' ';
    }
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        row.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) +
                          ": malformed number '" + tok + "'");
      }
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows[0].size()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected " + std::to_string(rows[0].size()) + " columns");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(path.string() + ": no samples");
  RMatrix signals(static_cast<Eigen::Index>(rows[0].size()),
                  static_cast<Eigen::Index>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t m = 0; m < rows[t].size(); ++m) {
      signals(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(t)) = rows[t][m];
    }
  }
  return signals;
}

CovarianceMethod method_from_string(const std::string& s) {
  if (s == "gaussian") return CovarianceMethod::GaussianFormula;
  if (s == "sample") return CovarianceMethod::Sample;
  throw InvalidArgument("unknown covariance method '" + s + "'");
}

std::vector<MetricRow> stats_rows(const BlockSamples& blocks,
                                  CovarianceMethod method, double significance,
                                  std::size_t workers) {
  return metric_rows(stats_report(blocks, method, significance, workers));
}

// ---------------------------------------------------------------- commands

struct DataFlags {
  std::string blocks, csm, pcsm, sigma;
  std::size_t blocks_count = 0;
};

struct LoadedData {
  std::optional<BlockSamples> blocks;
  SpectralData spectra;
  std::optional<CovarianceSeries> sigma;
};

LoadedData load_data(Run& run, const DataFlags& flags, const RunConfig& cfg) {
  LoadedData d;
  if (!flags.blocks.empty() && !flags.csm.empty()) {
    throw InvalidArgument("give either --blocks or --csm, not both");
  }
  if (!flags.blocks.empty() || (flags.csm.empty() && cfg.blocks_path)) {
    const fs::path p = flags.blocks.empty() ? *cfg.blocks_path : run.path(flags.blocks);
    d.blocks = run.timed("read", [&] { return read_blocks(p); });
  } else if (flags.csm.empty() && cfg.scenario) {
    d.blocks = run.timed("synth", [&] { return synthesize_blocks(*cfg.scenario).blocks; });
  }
  if (d.blocks) {
    d.spectra = run.timed("spectra", [&] { return estimate_spectra(*d.blocks); });
  } else if (!flags.csm.empty()) {
    d.spectra = spectra_from_files(
        run.path(flags.csm),
        flags.pcsm.empty() ? std::nullopt
                           : std::optional<fs::path>(run.path(flags.pcsm)),
        flags.blocks_count, run);
  } else {
    throw InvalidArgument("no input data: pass --blocks or --csm, or name a "
                          "scenario or blocks file in the config");
  }
  if (flags.blocks_count > 0) d.spectra.block_count = flags.blocks_count;
  if (!flags.sigma.empty()) {
    d.sigma = read_covariance(run.path(flags.sigma));
  }
  return d;
}

int imaging_command(Run& run, const std::string& config_path,
                    const DataFlags& flags, const std::string& out_dir,
                    bool damas) {
  const fs::path cfg_file = run.path(config_path);
  const RunConfig cfg = RunConfig::from_json(load_json(cfg_file), cfg_file.parent_path());
  run.manifest()["config"] = cfg.raw;
  LoadedData data = load_data(run, flags, cfg);
  if (!cfg.array) throw InvalidArgument("config needs an 'array' file");
  CovarianceSource cov(data.spectra, cfg.covariance,
                       data.blocks ? &*data.blocks : nullptr,
                       data.sigma ? &*data.sigma : nullptr, cfg.repair_alpha, run);
  const fs::path out = out_dir.empty() ? cfg.output : run.path(out_dir);
  ImagingOptions opts;
  opts.damas = damas;
  opts.maps = true;
  run_imaging(run, cfg, data.spectra, cov, *cfg.array, out, opts);
  run.write_manifest(out / "manifest.json");
  return kExitOk;
}

int pipeline_command(Run& run, const std::string& config_path) {
  const fs::path cfg_file = run.path(config_path);
  const RunConfig cfg = RunConfig::from_json(load_json(cfg_file), cfg_file.parent_path());
  if (!cfg.scenario && !cfg.blocks_path) {
    throw InvalidArgument("pipeline config needs a 'scenario' or 'blocks' source");
  }
  if (!cfg.array) throw InvalidArgument("config needs an 'array' file");
  run.manifest()["config"] = cfg.raw;
  if (cfg.scenario) {
    run.manifest()["scenario"] = cfg.scenario->to_json();
    run.manifest()["seed"] = cfg.scenario->seed;
  }
  const fs::path out = cfg.output;
  fs::create_directories(out);
  LoadedData data = load_data(run, {}, cfg);
  if (cfg.scenario) write_blocks(out / "blocks.aaim", *data.blocks);
  write_spectra(out / "csm.aaim", out / "pcsm.aaim", data.spectra);
  if (cfg.stats) {
    const auto rows = run.timed("stats", [&] {
      return stats_rows(*data.blocks, cfg.covariance, 0.05, run.workers());
    });
    write_metric_csv(out / "stats.csv", rows);
  }
  CovarianceSource cov(data.spectra, cfg.covariance, &*data.blocks, nullptr,
                       cfg.repair_alpha, run);
  ImagingOptions opts;
  opts.damas = cfg.damas;
  run_imaging(run, cfg, data.spectra, cov, *cfg.array, out, opts);
  run.write_manifest(out / "manifest.json");
  return kExitOk;
}

fs::path manifest_beside(const fs::path& output) {
  fs::path m = output;
  m += ".manifest.json";
  return m;
}

int dispatch(CLI::App& app, int argc_or_zero, char** argv,
             const std::vector<std::string>* args) {
  std::string workdir = ".";
  std::size_t workers = 0;
  app.add_option("--workdir", workdir, "Base directory for relative paths");
  app.add_option("--workers", workers,
                 "Worker threads (default: AAIM_WORKERS or hardware count)");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(AAIM_VERSION));

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic block samples");
  std::string synth_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--config", synth_config, "Scenario JSON")->required();
  synth->add_option("--out", synth_out, "Output blocks file")->required();
  synth->add_option("--seed", synth_seed, "Override the scenario seed");

  // csm
  auto* csm = app.add_subcommand("csm", "Estimate CSM and pseudo-CSM");
  std::string csm_blocks, csm_signals, csm_out, pcsm_out, csm_blocks_out;
  double sample_rate = 0.0;
  WelchOptions welch;
  std::string window = "hann", scaling = "power";
  auto* in_blocks = csm->add_option("--blocks", csm_blocks, "Input blocks file");
  auto* in_signals =
      csm->add_option("--signals", csm_signals,
                      "Time series text file, one column per microphone");
  in_blocks->excludes(in_signals);
  csm->add_option("--sample-rate", sample_rate, "Sampling rate [Hz]");
  csm->add_option("--block-length", welch.block_length, "Welch block length");
  csm->add_option("--overlap", welch.overlap, "Welch overlap fraction");
  csm->add_option("--window", window, "hann or rectangular");
  csm->add_option("--scaling", scaling, "power or amplitude");
  csm->add_option("--blocks-out", csm_blocks_out, "Also write Welch blocks");
  csm->add_option("--out-csm", csm_out, "Output CSM file")->required();
  csm->add_option("--out-pcsm", pcsm_out, "Output pseudo-CSM file")->required();

  // cov
  auto* cov = app.add_subcommand("cov", "Estimate the CSM covariance");
  std::string cov_blocks, cov_out, cov_method = "gaussian";
  std::optional<double> cov_repair;
  bool cov_diag = false;
  cov->add_option("--blocks", cov_blocks, "Input blocks file")->required();
  cov->add_option("--method", cov_method, "gaussian or sample");
  cov->add_option("--repair", cov_repair, "Eigenvalue floor for PSD repair");
  cov->add_flag("--diagnostics", cov_diag, "Report eigenvalue extremes");
  cov->add_option("--out", cov_out, "Output covariance file")->required();

  // beamform / damas
  DataFlags data_flags;
  std::string img_config, img_out;
  const auto add_data = [&](CLI::App* sub) {
    sub->add_option("--config", img_config, "Run config JSON")->required();
    sub->add_option("--blocks", data_flags.blocks, "Input blocks file");
    sub->add_option("--csm", data_flags.csm, "Input CSM file");
    sub->add_option("--pcsm", data_flags.pcsm, "Input pseudo-CSM file");
    sub->add_option("--sigma", data_flags.sigma, "Input covariance file");
    sub->add_option("--blocks-count", data_flags.blocks_count,
                    "Number of averaged blocks J");
    sub->add_option("--out-dir", img_out, "Output directory");
  };
  auto* beamform = app.add_subcommand("beamform", "Compute source maps");
  add_data(beamform);
  auto* damas = app.add_subcommand("damas", "Beamform and deconvolve");
  add_data(damas);

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Map quality metrics");
  std::vector<std::string> metric_maps;
  std::string metrics_out;
  metrics->add_option("--map", metric_maps, "Source map CSV")->required();
  metrics->add_option("--out", metrics_out, "Output CSV")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "Statistical assumption checks");
  std::string stats_blocks, stats_out, stats_method = "gaussian";
  double significance = 0.05;
  stats->add_option("--blocks", stats_blocks, "Input blocks file")->required();
  stats->add_option("--method", stats_method, "gaussian or sample");
  stats->add_option("--significance", significance, "Anderson-Darling level");
  stats->add_option("--out", stats_out, "Output CSV")->required();

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage");
  std::string pipeline_config;
  pipeline->add_option("--config", pipeline_config, "Run config JSON")->required();

  try {
    if (args) {
      std::vector<std::string> rev(args->rbegin(), args->rend());
      app.parse(rev);
    } else {
      app.parse(argc_or_zero, argv);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Run run(workdir, workers == 0 ? default_workers() : workers);
  try {
    if (*synth) {
      const fs::path cfg_file = run.path(synth_config);
      auto scenario = SynthScenario::from_json(load_json(cfg_file), cfg_file.parent_path());
      if (synth_seed) scenario.seed = *synth_seed;
      const auto result = run.timed("synth", [&] { return synthesize_blocks(scenario); });
      const fs::path out = run.path(synth_out);
      write_blocks(out, result.blocks);
      run.manifest()["config"] = scenario.to_json();
      run.manifest()["seed"] = scenario.seed;
      run.write_manifest(manifest_beside(out));
    } else if (*csm) {
      BlockSamples blocks;
      if (!csm_blocks.empty()) {
        blocks = read_blocks(run.path(csm_blocks));
      } else if (!csm_signals.empty()) {
        if (!(sample_rate > 0.0)) {
          throw InvalidArgument("--signals needs a positive --sample-rate");
        }
        if (window == "hann") {
          welch.window = Window::Hann;
        } else if (window == "rectangular") {
          welch.window = Window::Rectangular;
        } else {
          throw InvalidArgument("unknown window '" + window + "'");
        }
        if (scaling == "power") {
          welch.scaling = SpectrumScaling::PowerPerBin;
        } else if (scaling == "amplitude") {
          welch.scaling = SpectrumScaling::Amplitude;
        } else {
          throw InvalidArgument("unknown scaling '" + scaling + "'");
        }
        const RMatrix signals = read_signals(run.path(csm_signals));
        blocks = run.timed("welch", [&] { return welch_blocks(signals, sample_rate, welch); });
        if (!csm_blocks_out.empty()) write_blocks(run.path(csm_blocks_out), blocks);
      } else {
        throw InvalidArgument("csm needs --blocks or --signals");
      }
      const auto s = run.timed("spectra", [&] { return estimate_spectra(blocks); });
      write_spectra(run.path(csm_out), run.path(pcsm_out), s);
      run.manifest()["block_count"] = s.block_count;
      run.write_manifest(manifest_beside(run.path(csm_out)));
    } else if (*cov) {
      const auto method = method_from_string(cov_method);
      const auto blocks = read_blocks(run.path(cov_blocks));
      CovarianceSeries series;
      series.method = method;
      series.frequencies = blocks.frequencies();
      json diag = json::array();
      for (std::size_t f = 0; f < blocks.bins(); ++f) {
        auto est = run.timed("covariance", [&] {
          return method == CovarianceMethod::Sample ? sample_covariance(blocks, f)
                                                    : gaussian_covariance(blocks, f);
        });
        if (cov_repair) est = repaired(std::move(est), *cov_repair);
        if (cov_diag) {
          const auto sd = spectral_diagnostics(est.per_block);
          diag.push_back({{"frequency_hz", series.frequencies[f]},
                          {"lambda_min", sd.lambda_min},
                          {"lambda_max", sd.lambda_max},
                          {"condition_number", sd.condition_number}});
          if (sd.lambda_min <= 0.0) {
            run.warn("covariance at " + number_label(series.frequencies[f]) +
                     " Hz is not positive definite (lambda_min " +
                     number_label(sd.lambda_min) + ")");
          }
        }
        series.per_block.push_back(std::move(est.per_block));
      }
      const fs::path out = run.path(cov_out);
      write_covariance(out, series);
      run.manifest()["block_count"] = blocks.blocks();
      run.manifest()["method"] = to_string(method);
      if (cov_diag) {
        run.manifest()["spectral_diagnostics"] = diag;
        std::cout << diag.dump(2) << "\n";
      }
      run.write_manifest(manifest_beside(out));
    } else if (*beamform) {
      return imaging_command(run, img_config, data_flags, img_out, false);
    } else if (*damas) {
      return imaging_command(run, img_config, data_flags, img_out, true);
    } else if (*metrics) {
      std::vector<MetricRow> rows;
      for (const auto& m : metric_maps) {
        const SourceMap map = read_source_map_csv(run.path(m));
        auto r = metric_rows(map.frequency_hz, map_metrics(map));
        rows.insert(rows.end(), r.begin(), r.end());
      }
      write_metric_csv(run.path(metrics_out), rows);
    } else if (*stats) {
      const auto blocks = read_blocks(run.path(stats_blocks));
      const auto rows = run.timed("stats", [&] {
        return stats_rows(blocks, method_from_string(stats_method), significance,
                          run.workers());
      });
      write_metric_csv(run.path(stats_out), rows);
    } else if (*pipeline) {
      return pipeline_command(run, pipeline_config);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::Numerical ? kExitNumerical : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Weighted beamforming and DAMAS for microphone array data", "aaim"};
  return dispatch(app, argc, argv, nullptr);
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Weighted beamforming and DAMAS for microphone array data", "aaim"};
  return dispatch(app, 0, nullptr, &args);
}

}  // namespace aaim
