#pragma once

// Brute-force map metric oracles: one breadth-first flood fill per level.

#include <cmath>
#include <deque>
#include <set>
#include <vector>

#include "aaim/beamforming.hpp"
#include "aaim/random.hpp"

namespace aaim::testing {

inline std::size_t count_components(const std::vector<bool>& in_set, std::size_t nx,
                                    std::size_t ny) {
  std::vector<bool> seen(in_set.size(), false);
  std::size_t count = 0;
  for (std::size_t start = 0; start < in_set.size(); ++start) {
    if (!in_set[start] || seen[start]) continue;
    ++count;
    std::deque<std::size_t> queue{start};
    seen[start] = true;
    while (!queue.empty()) {
      const std::size_t c = queue.front();
      queue.pop_front();
      const long cx = static_cast<long>(c % nx), cy = static_cast<long>(c / nx);
      for (long y = cy - 1; y <= cy + 1; ++y) {
        for (long x = cx - 1; x <= cx + 1; ++x) {
          if (x < 0 || y < 0 || x >= static_cast<long>(nx) || y >= static_cast<long>(ny))
            continue;
          const std::size_t nb = static_cast<std::size_t>(y) * nx + static_cast<std::size_t>(x);
          if (in_set[nb] && !seen[nb]) {
            seen[nb] = true;
            queue.push_back(nb);
          }
        }
      }
    }
  }
  return count;
}

struct SnrOracle {
  double value_db;
  bool no_sidelobe;
};

/// Sweeps every distinct positive cell value from the top, counting
/// components of {p >= level} from scratch each time.
inline SnrOracle snr_oracle(const RVector& p, std::size_t nx, std::size_t ny) {
  const double peak = p.maxCoeff();
  std::set<double, std::greater<>> levels;
  for (Eigen::Index i = 0; i < p.size(); ++i) if (p[i] > 0.0) levels.insert(p[i]);
  for (double level : levels) {
    std::vector<bool> in_set(static_cast<std::size_t>(p.size()));
    for (Eigen::Index i = 0; i < p.size(); ++i) in_set[static_cast<std::size_t>(i)] = p[i] >= level;
    if (count_components(in_set, nx, ny) > 1) {
      return {std::abs(10.0 * std::log10(level / peak)), false};
    }
  }
  return {std::abs(10.0 * std::log10(*levels.rbegin() / peak)), true};
}

/// Literal -1 dB resolution by exhaustive distance scan.
inline double resolution_oracle(const SourceMap& map) {
  Eigen::Index arg = 0;
  const double peak = map.powers.maxCoeff(&arg);
  double best = 0.0;
  for (Eigen::Index i = 0; i < map.powers.size(); ++i) {
    if (10.0 * std::log10(map.powers[i] / peak) >= -1.0) {
      best = std::max(best, (map.grid.points[static_cast<std::size_t>(i)] -
                             map.grid.points[static_cast<std::size_t>(arg)]).norm());
    }
  }
  return best;
}

/// Sum of a few Gaussian bumps of random height and width plus a floor.
inline SourceMap random_lattice_map(NormalSource& rng, std::size_t nx, std::size_t ny) {
  SourceMap m;
  m.grid = build_focus_grid(Vec3::Zero(), 0.025, 0.025, nx, ny);
  const auto n = static_cast<Eigen::Index>(nx * ny);
  m.powers = RVector::Zero(n);
  const int bumps = 1 + static_cast<int>(std::abs(rng.normal()) * 2.0);
  for (int b = 0; b < bumps; ++b) {
    const double cx = std::abs(rng.normal()) * nx / 2.0, cy = std::abs(rng.normal()) * ny / 2.0;
    const double h = 0.2 + std::abs(rng.normal());
    const double w = 1.0 + std::abs(rng.normal()) * 2.0;
    for (std::size_t iy = 0; iy < ny; ++iy) {
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const double r2 = (ix - cx) * (ix - cx) + (iy - cy) * (iy - cy);
        m.powers[static_cast<Eigen::Index>(iy * nx + ix)] += h * std::exp(-r2 / (2 * w * w));
      }
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) m.powers[i] += 0.01 * std::abs(rng.normal());
  m.values = m.powers.cast<cplx>();
  return m;
}

}  // namespace aaim::testing
