#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "aaim/beamforming.hpp"
#include "aaim/cli.hpp"
#include "aaim/damas.hpp"
#include "aaim/diagnostics.hpp"
#include "aaim/errors.hpp"
#include "aaim/io.hpp"
#include "aaim/synth.hpp"

namespace py = pybind11;
using namespace aaim;

namespace {

using CArray = py::array_t<cplx, py::array::c_style | py::array::forcecast>;

MicArray array_of(const RMatrix& xyz) {
  if (xyz.cols() != 3) throw InvalidArgument("positions must have shape (n, 3)");
  std::vector<Vec3> p;
  for (Eigen::Index i = 0; i < xyz.rows(); ++i) p.emplace_back(xyz.row(i).transpose());
  return MicArray(std::move(p));
}

RMatrix positions_of(const std::vector<Vec3>& pts) {
  RMatrix out(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  }
  return out;
}

FlowField flow_of(double c, const Vec3& mach) {
  FlowField f;
  f.speed_of_sound = c;
  f.mach = mach;
  f.validate();
  return f;
}

BlockSamples blocks_of(const CArray& data, const std::vector<double>& freqs) {
  if (data.ndim() != 3) throw InvalidArgument("blocks must have shape (J, M, F)");
  const auto j = static_cast<std::size_t>(data.shape(0));
  const auto m = static_cast<std::size_t>(data.shape(1));
  const auto f = static_cast<std::size_t>(data.shape(2));
  if (f != freqs.size()) throw InconsistentInputs("frequency count mismatch");
  BlockSamples b(freqs, j, m);
  std::copy(data.data(), data.data() + data.size(), b.raw().begin());
  b.validate();
  return b;
}

CArray array_of_blocks(const BlockSamples& b) {
  CArray out({b.blocks(), b.mics(), b.bins()});
  std::copy(b.raw().begin(), b.raw().end(), out.mutable_data());
  return out;
}

SelectionMask mask_of(const std::string& spec, std::size_t mics) {
  return mask_from_json(nlohmann::json(spec), mics);
}

WeightingScheme weighting_of(const std::string& choice_json, const CMatrix& csm,
                             const std::optional<CMatrix>& sigma,
                             const SelectionMask& mask) {
  const auto choice = WeightingChoice::from_json(nlohmann::json::parse(choice_json));
  return build_weighting(choice, csm, sigma ? &*sigma : nullptr, mask);
}

FocusGrid points_grid(const RMatrix& points) {
  std::vector<Vec3> p;
  for (Eigen::Index i = 0; i < points.rows(); ++i) p.emplace_back(points.row(i).transpose());
  return make_point_grid(std::move(p));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Weighted beamforming and DAMAS for microphone array data";
  m.attr("__version__") = AAIM_VERSION;

  static py::exception<Error> base(m, "AaimError", PyExc_RuntimeError);
  static py::exception<Error> data_error(m, "DataError", base.ptr());
  static py::exception<Error> numerical_error(m, "NumericalError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Numerical) {
        py::set_error(numerical_error, e.what());
      } else {
        py::set_error(data_error, e.what());
      }
    }
  });

  m.def("spiral_array",
        [](std::size_t arms, std::size_t per_arm, double inner, double outer,
           double twist) { return positions_of(spiral_array(arms, per_arm, inner, outer, twist).positions()); },
        py::arg("arms") = 8, py::arg("per_arm") = 8, py::arg("inner") = 0.1,
        py::arg("outer") = 0.75, py::arg("twist") = 1.5);
  m.def("focus_grid",
        [](const Vec3& origin, double dx, double dy, std::size_t nx, std::size_t ny) {
          return positions_of(build_focus_grid(origin, dx, dy, nx, ny).points);
        },
        py::arg("origin"), py::arg("dx"), py::arg("dy"), py::arg("nx"), py::arg("ny"));
  m.def("green_function",
        [](const Vec3& x, const Vec3& y, double omega, double c, const Vec3& mach) {
          return green_function(x, y, omega, flow_of(c, mach));
        },
        py::arg("x"), py::arg("y"), py::arg("omega"), py::arg("c") = 343.0,
        py::arg("mach") = Vec3(Vec3::Zero()));
  m.def("propagation_matrix",
        [](const RMatrix& mics, const RMatrix& points, double frequency_hz,
           double c, const Vec3& mach) {
          return propagation_matrix(array_of(mics), points_grid(points),
                                    angular(frequency_hz), flow_of(c, mach));
        },
        py::arg("mics"), py::arg("points"), py::arg("frequency_hz"),
        py::arg("c") = 343.0, py::arg("mach") = Vec3(Vec3::Zero()));

  m.def("synthesize",
        [](const std::string& scenario_json, const std::string& base_dir) {
          const auto s = SynthScenario::from_json(nlohmann::json::parse(scenario_json), base_dir);
          const auto r = synthesize_blocks(s);
          return py::make_tuple(array_of_blocks(r.blocks), r.blocks.frequencies(),
                                positions_of(s.array.positions()));
        },
        py::arg("scenario_json"), py::arg("base_dir") = "");
  m.def("estimate_csm",
        [](const CArray& blocks, const std::vector<double>& freqs) {
          return estimate_csm(blocks_of(blocks, freqs));
        });
  m.def("estimate_pcsm",
        [](const CArray& blocks, const std::vector<double>& freqs) {
          return estimate_pcsm(blocks_of(blocks, freqs));
        });
  m.def("gaussian_covariance", &gaussian_covariance_estimate, py::arg("csm"),
        py::arg("pcsm"));
  m.def("nearest_psd", [](const CMatrix& s, double alpha) {
    return nearest_psd_regularized(s, alpha).matrix;
  });

  m.def("beamform",
        [](const CMatrix& csm, const CMatrix& steering, const std::string& weighting,
           const std::optional<CMatrix>& sigma, const std::string& mask) {
          const auto mk = mask_of(mask, static_cast<std::size_t>(csm.rows()));
          const auto w = weighting_of(weighting, csm, sigma, mk);
          const auto ws = weighted_steering(w, mk, steering, 1);
          std::vector<Vec3> pts(static_cast<std::size_t>(steering.cols()), Vec3::Zero());
          return beamform_map(csm, ws, make_point_grid(pts), 0.0).values;
        },
        py::arg("csm"), py::arg("steering"), py::arg("weighting") = "\"conventional\"",
        py::arg("sigma") = std::nullopt, py::arg("mask") = "none");
  m.def("damas_system",
        [](const CMatrix& csm, const CMatrix& steering, const std::string& weighting,
           const std::optional<CMatrix>& sigma, const std::string& mask) {
          const auto mk = mask_of(mask, static_cast<std::size_t>(csm.rows()));
          const auto w = weighting_of(weighting, csm, sigma, mk);
          const auto ws = weighted_steering(w, mk, steering, 1);
          std::vector<Vec3> pts(static_cast<std::size_t>(steering.cols()), Vec3::Zero());
          const auto map = beamform_map(csm, ws, make_point_grid(pts), 0.0);
          const auto sys = assemble_system(ws, map, 1);
          return py::make_tuple(sys.h, sys.b);
        },
        py::arg("csm"), py::arg("steering"), py::arg("weighting") = "\"conventional\"",
        py::arg("sigma") = std::nullopt, py::arg("mask") = "none");
  m.def("rms_noise_level",
        [](const CMatrix& csm, const CMatrix& pcsm, std::size_t blocks,
           const CMatrix& steering, const std::string& weighting,
           const std::optional<CMatrix>& sigma, const std::string& mask) {
          const auto mk = mask_of(mask, static_cast<std::size_t>(csm.rows()));
          const auto w = weighting_of(weighting, csm, sigma, mk);
          const auto ws = weighted_steering(w, mk, steering, 1);
          return rms_noise_level(ws, CovarianceOperator::gaussian(csm, pcsm, blocks, mk), 1);
        },
        py::arg("csm"), py::arg("pcsm"), py::arg("blocks"), py::arg("steering"),
        py::arg("weighting") = "\"conventional\"", py::arg("sigma") = std::nullopt,
        py::arg("mask") = "none");

  m.def("nnls",
        [](const RMatrix& h, const RVector& b, double alpha) {
          const auto r = nnls_solve(h, b, alpha);
          py::dict d;
          d["q"] = r.q;
          d["residual"] = r.residual_norm;
          d["objective"] = r.objective;
          d["kkt_residual"] = r.kkt_residual;
          d["certified"] = r.certified;
          return d;
        },
        py::arg("h"), py::arg("b"), py::arg("alpha") = 0.0);
  m.def("discrepancy_alpha",
        [](const RMatrix& h, const RVector& b, double delta, double tau) {
          const auto r = discrepancy_alpha(h, b, delta, tau);
          py::dict d;
          d["alpha"] = r.alpha;
          d["residual"] = r.residual;
          d["target"] = r.target;
          d["flag"] = std::string(to_string(r.flag));
          d["q"] = r.solution.q;
          return d;
        },
        py::arg("h"), py::arg("b"), py::arg("delta"), py::arg("tau") = 1.5);

  m.def("map_metrics",
        [](const RMatrix& powers, double dx, double dy) {
          const auto ny = static_cast<std::size_t>(powers.rows());
          const auto nx = static_cast<std::size_t>(powers.cols());
          SourceMap map;
          map.grid = build_focus_grid(Vec3::Zero(), dx, dy, nx, ny);
          map.values.resize(powers.size());
          for (std::size_t iy = 0; iy < ny; ++iy) {
            for (std::size_t ix = 0; ix < nx; ++ix) {
              map.values[static_cast<Eigen::Index>(iy * nx + ix)] =
                  powers(static_cast<Eigen::Index>(iy), static_cast<Eigen::Index>(ix));
            }
          }
          map.powers = map.values.real().cwiseMax(0.0);
          const auto r = map_metrics(map);
          py::dict d;
          d["resolution"] = r.resolution.literal;
          d["resolution_connected"] = r.resolution.connected;
          d["snr"] = r.snr.value_db;
          d["no_sidelobe"] = r.snr.no_sidelobe;
          d["spr"] = r.spr;
          return d;
        },
        py::arg("powers"), py::arg("dx"), py::arg("dy"));
  m.def("stats",
        [](const CArray& blocks, const std::vector<double>& freqs) {
          py::list out;
          for (const auto& r : stats_report(blocks_of(blocks, freqs))) {
            py::dict d;
            d["frequency_hz"] = r.frequency_hz;
            d["eps_mean"] = r.eps_mean;
            d["ad_acceptance_rate"] = r.ad_acceptance_rate;
            d["proper_ratio"] = r.proper_ratio;
            d["white_noise_dev"] = r.white_noise_dev;
            out.append(d);
          }
          return out;
        });

  m.def("read_blocks", [](const std::string& path) {
    const auto b = read_blocks(path);
    return py::make_tuple(array_of_blocks(b), b.frequencies());
  });
  m.def("write_blocks",
        [](const std::string& path, const CArray& blocks, const std::vector<double>& freqs) {
          write_blocks(path, blocks_of(blocks, freqs));
        });
  m.def("run_cli", [](const std::vector<std::string>& args) {
    py::gil_scoped_release release;
    return run_cli(args);
  });
}
