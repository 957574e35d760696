#pragma once

// Array and focus-grid geometry plus the convected free-field Green's
// function. Time factor convention is exp(+i omega t) throughout.

#include <filesystem>
#include <optional>
#include <vector>

#include "aaim/types.hpp"

namespace aaim {

class MicArray {
 public:
  MicArray() = default;
  /// Requires at least two distinct positions (meters).
  explicit MicArray(std::vector<Vec3> positions);

  std::size_t size() const { return positions_.size(); }
  const Vec3& operator[](std::size_t i) const { return positions_[i]; }
  const std::vector<Vec3>& positions() const { return positions_; }

  /// One microphone per line, "x y z" in meters; '#' starts a comment.
  static MicArray load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<Vec3> positions_;
};

/// Multi-arm logarithmic spiral in the z = 0 plane. Used for the shipped
/// example geometries; real arrays are read from file.
MicArray spiral_array(std::size_t arms, std::size_t mics_per_arm,
                      double inner_radius, double outer_radius,
                      double twist = 1.5);

struct FlowField {
  double speed_of_sound = 343.0;
  Vec3 mach = Vec3::Zero();

  /// Throws InvalidArgument unless c > 0 and |mach| < 1.
  void validate() const;
  double beta2() const { return 1.0 - mach.squaredNorm(); }
  double wavenumber(double omega) const { return omega / speed_of_sound; }
};

/// Planar equidistant lattice: point (ix, iy) = origin + (ix dx, iy dy, 0),
/// flat index iy * nx + ix.
struct Lattice {
  Vec3 origin = Vec3::Zero();
  double dx = 0.0;
  double dy = 0.0;
  std::size_t nx = 0;
  std::size_t ny = 0;
};

struct FocusGrid {
  std::vector<Vec3> points;
  std::optional<Lattice> lattice;

  std::size_t size() const { return points.size(); }
  bool operator==(const FocusGrid& other) const;
};

FocusGrid build_focus_grid(const Vec3& origin, double dx, double dy,
                           std::size_t nx, std::size_t ny);

/// Grid from a list of points without adjacency information.
FocusGrid make_point_grid(std::vector<Vec3> points);

double mach_distance(const Vec3& x, const Vec3& y, const Vec3& mach);

cplx green_function(const Vec3& x, const Vec3& y, double omega,
                    const FlowField& flow);

/// Component m is green_function(x_m, y, omega, flow).
CVector propagation_vector(const MicArray& array, const Vec3& y, double omega,
                           const FlowField& flow);

/// Steering vectors for every grid point, one column per point.
CMatrix propagation_matrix(const MicArray& array, const FocusGrid& grid,
                           double omega, const FlowField& flow);

}  // namespace aaim
