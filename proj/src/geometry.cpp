#include "aaim/geometry.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "aaim/errors.hpp"

namespace aaim {

MicArray::MicArray(std::vector<Vec3> positions)
    : positions_(std::move(positions)) {
  if (positions_.size() < 2) {
    throw InvalidArgument("microphone array needs at least two positions");
  }
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    if (!positions_[i].allFinite()) {
      throw InvalidArgument("non-finite microphone position " +
                            std::to_string(i));
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (positions_[i] == positions_[j]) {
        throw DegenerateGeometry("microphones " + std::to_string(j) + " and " +
                                 std::to_string(i) + " coincide");
      }
    }
  }
}

MicArray MicArray::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open array file " + path.string());
  std::vector<Vec3> positions;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream fields(line);
    double x, y, z;
    if (!(fields >> x)) continue;  // blank or comment-only line
    if (!(fields >> y >> z)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected three coordinates");
    }
    std::string extra;
    if (fields >> extra) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": trailing field '" + extra + "'");
    }
    positions.emplace_back(x, y, z);
  }
  return MicArray(std::move(positions));
}

void MicArray::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write array file " + path.string());
  out << "# x y z [m]\n" << std::setprecision(17);
  for (const auto& p : positions_) {
    out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  }
}

MicArray spiral_array(std::size_t arms, std::size_t mics_per_arm,
                      double inner_radius, double outer_radius, double twist) {
  if (arms == 0 || mics_per_arm == 0 || inner_radius <= 0.0 ||
      outer_radius <= inner_radius) {
    throw InvalidArgument("invalid spiral array parameters");
  }
  std::vector<Vec3> positions;
  positions.reserve(arms * mics_per_arm);
  const double growth = std::log(outer_radius / inner_radius);
  for (std::size_t a = 0; a < arms; ++a) {
    const double arm_angle = 2.0 * kPi * static_cast<double>(a) /
                             static_cast<double>(arms);
    for (std::size_t k = 0; k < mics_per_arm; ++k) {
      const double t = mics_per_arm == 1
                           ? 0.0
                           : static_cast<double>(k) /
                                 static_cast<double>(mics_per_arm - 1);
      const double r = inner_radius * std::exp(growth * t);
      const double phi = arm_angle + twist * growth * t;
      positions.emplace_back(r * std::cos(phi), r * std::sin(phi), 0.0);
    }
  }
  return MicArray(std::move(positions));
}

void FlowField::validate() const {
  if (!(speed_of_sound > 0.0) || !std::isfinite(speed_of_sound)) {
    throw InvalidArgument("speed of sound must be positive");
  }
  if (!mach.allFinite() || mach.squaredNorm() >= 1.0) {
    throw InvalidArgument("flow must be subsonic (|mach| < 1)");
  }
}

bool FocusGrid::operator==(const FocusGrid& other) const {
  if (points.size() != other.points.size()) return false;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i] != other.points[i]) return false;
  }
  return lattice.has_value() == other.lattice.has_value();
}

FocusGrid build_focus_grid(const Vec3& origin, double dx, double dy,
                           std::size_t nx, std::size_t ny) {
  if (nx == 0 || ny == 0) {
    throw InvalidArgument("focus grid counts must be at least one");
  }
  if (!(dx > 0.0) || !(dy > 0.0)) {
    throw InvalidArgument("focus grid spacing must be positive");
  }
  FocusGrid grid;
  grid.points.reserve(nx * ny);
  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      grid.points.push_back(origin + Vec3(static_cast<double>(ix) * dx,
                                          static_cast<double>(iy) * dy, 0.0));
    }
  }
  grid.lattice = Lattice{origin, dx, dy, nx, ny};
  return grid;
}

FocusGrid make_point_grid(std::vector<Vec3> points) {
  if (points.empty()) throw InvalidArgument("focus grid needs a point");
  return FocusGrid{std::move(points), std::nullopt};
}

double mach_distance(const Vec3& x, const Vec3& y, const Vec3& mach) {
  const Vec3 d = x - y;
  const double dist2 = d.squaredNorm();
  if (dist2 == 0.0) {
    throw DegenerateGeometry("coincident source and receiver points");
  }
  const double dm = d.dot(mach);
  const double beta2 = 1.0 - mach.squaredNorm();
  return std::sqrt(dm * dm + beta2 * dist2);
}

cplx green_function(const Vec3& x, const Vec3& y, double omega,
                    const FlowField& flow) {
  const double rm = mach_distance(x, y, flow.mach);
  const double k = flow.wavenumber(omega);
  const double phase = k / flow.beta2() * (-(x - y).dot(flow.mach) + rm);
  return std::polar(1.0 / (4.0 * kPi * rm), -phase);
}

CVector propagation_vector(const MicArray& array, const Vec3& y, double omega,
                           const FlowField& flow) {
  CVector g(static_cast<Eigen::Index>(array.size()));
  for (std::size_t m = 0; m < array.size(); ++m) {
    g[static_cast<Eigen::Index>(m)] = green_function(array[m], y, omega, flow);
  }
  return g;
}

CMatrix propagation_matrix(const MicArray& array, const FocusGrid& grid,
                           double omega, const FlowField& flow) {
  CMatrix out(static_cast<Eigen::Index>(array.size()),
              static_cast<Eigen::Index>(grid.size()));
  for (std::size_t n = 0; n < grid.size(); ++n) {
    try {
      out.col(static_cast<Eigen::Index>(n)) =
          propagation_vector(array, grid.points[n], omega, flow);
    } catch (const DegenerateGeometry& e) {
      throw DegenerateGeometry("focus point " + std::to_string(n) + ": " +
                               e.what());
    }
  }
  return out;
}

}  // namespace aaim
