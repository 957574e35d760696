#include "aaim/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "aaim/errors.hpp"
#include "aaim/parallel.hpp"

namespace aaim {

namespace {

const Lattice& require_lattice(const SourceMap& map) {
  if (!map.grid.lattice) {
    throw UnsupportedGrid("metric needs a lattice focus grid");
  }
  const auto& lat = *map.grid.lattice;
  if (lat.nx * lat.ny != static_cast<std::size_t>(map.powers.size())) {
    throw InconsistentInputs("lattice size does not match the map");
  }
  return lat;
}

void require_positive_peak(const SourceMap& map, const char* metric) {
  if (map.powers.size() == 0 || !(map.max_power() > 0.0)) {
    throw UndefinedMetric(std::string(metric) +
                          " is undefined for a map without positive power");
  }
}

template <typename Fn>
void for_each_neighbour(const Lattice& lat, std::size_t cell, Fn&& fn) {
  const auto ix = static_cast<long>(cell % lat.nx);
  const auto iy = static_cast<long>(cell / lat.nx);
  for (long dy = -1; dy <= 1; ++dy) {
    for (long dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const long x = ix + dx;
      const long y = iy + dy;
      if (x < 0 || y < 0 || x >= static_cast<long>(lat.nx) ||
          y >= static_cast<long>(lat.ny)) {
        continue;
      }
      fn(static_cast<std::size_t>(y) * lat.nx + static_cast<std::size_t>(x));
    }
  }
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[std::max(a, b)] = std::min(a, b);
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

ResolutionResult resolution_measure(const SourceMap& map) {
  const Lattice& lat = require_lattice(map);
  require_positive_peak(map, "resolution");
  const std::size_t peak = map.argmax();
  const double threshold = map.max_power() * std::pow(10.0, -0.1);
  const auto n = static_cast<std::size_t>(map.powers.size());
  const Vec3& centre = map.grid.points[peak];
  std::vector<bool> in_set(n);
  ResolutionResult out;
  for (std::size_t i = 0; i < n; ++i) {
    in_set[i] = map.powers[static_cast<Eigen::Index>(i)] >= threshold;
    if (in_set[i]) {
      out.literal = std::max(out.literal, (map.grid.points[i] - centre).norm());
    }
  }
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> stack{peak};
  seen[peak] = true;
  while (!stack.empty()) {
    const std::size_t c = stack.back();
    stack.pop_back();
    out.connected = std::max(out.connected, (map.grid.points[c] - centre).norm());
    for_each_neighbour(lat, c, [&](std::size_t nb) {
      if (in_set[nb] && !seen[nb]) {
        seen[nb] = true;
        stack.push_back(nb);
      }
    });
  }
  return out;
}

SnrResult snr_measure(const SourceMap& map) {
  const Lattice& lat = require_lattice(map);
  require_positive_peak(map, "SNR");
  const RVector db = map.power_db();
  const auto n = static_cast<std::size_t>(db.size());
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isfinite(db[static_cast<Eigen::Index>(i)])) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return map.powers[static_cast<Eigen::Index>(a)] >
           map.powers[static_cast<Eigen::Index>(b)];
  });
  DisjointSets sets(n);
  std::vector<bool> active(n, false);
  std::size_t components = 0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double level = map.powers[static_cast<Eigen::Index>(order[k])];
    // add every cell of this level before counting
    while (k < order.size() &&
           map.powers[static_cast<Eigen::Index>(order[k])] == level) {
      const std::size_t c = order[k++];
      active[c] = true;
      ++components;
      for_each_neighbour(lat, c, [&](std::size_t nb) {
        if (active[nb] && sets.unite(c, nb)) --components;
      });
    }
    if (components > 1) {
      return {std::abs(db[static_cast<Eigen::Index>(order[k - 1])]), false};
    }
  }
  return {std::abs(db[static_cast<Eigen::Index>(order.back())]), true};
}

double spr_measure(const SourceMap& map) {
  require_positive_peak(map, "SPR");
  const double mean = map.powers.mean();
  if (!(mean > 0.0)) throw UndefinedMetric("SPR needs a positive mean power");
  return 10.0 * std::log10(map.max_power() / mean);
}

MetricReport map_metrics(const SourceMap& map) {
  return {resolution_measure(map), snr_measure(map), spr_measure(map)};
}

// ---------------------------------------------------------------- stats

double zero_mean_deviation(const BlockSamples& blocks, std::size_t bin) {
  if (blocks.blocks() == 0) throw InsufficientSamples("no blocks");
  const CMatrix p = blocks.bin_matrix(bin);
  const CVector mean = p.rowwise().mean();
  const RVector mean_abs = p.cwiseAbs().rowwise().mean();
  const double den = mean_abs.squaredNorm();
  if (!(den > 0.0)) {
    throw UndefinedMetric("zero-mean deviation of all-zero blocks is 0/0");
  }
  return std::sqrt(mean.squaredNorm() / den);
}

double anderson_darling_statistic(std::vector<double> x) {
  const std::size_t n = x.size();
  if (n < 8) {
    throw InsufficientSamples("Anderson-Darling test needs at least 8 samples, got " +
                              std::to_string(n));
  }
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0) || !std::isfinite(sd)) {
    return std::numeric_limits<double>::infinity();
  }
  std::sort(x.begin(), x.end());
  const auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = cdf((x[i] - mean) / sd);
    const double hi = cdf((x[n - 1 - i] - mean) / sd);
    if (lo <= 0.0 || hi >= 1.0) return std::numeric_limits<double>::infinity();
    s += static_cast<double>(2 * i + 1) * (std::log(lo) + std::log1p(-hi));
  }
  const double nn = static_cast<double>(n);
  const double a2 = -nn - s / nn;
  return a2 * (1.0 + 0.75 / nn + 2.25 / (nn * nn));
}

double anderson_darling_critical(double significance) {
  struct Row {
    double level, value;
  };
  static constexpr Row table[] = {
      {0.10, 0.631}, {0.05, 0.752}, {0.025, 0.873}, {0.01, 1.035}};
  for (const auto& r : table) {
    if (std::abs(r.level - significance) < 1e-12) return r.value;
  }
  throw InvalidArgument("unsupported Anderson-Darling significance level " +
                        std::to_string(significance));
}

bool anderson_darling_accepts(const std::vector<double>& sample,
                              double significance) {
  return anderson_darling_statistic(sample) <=
         anderson_darling_critical(significance);
}

double anderson_darling_rate(const BlockSamples& blocks, std::size_t bin,
                             double significance) {
  const double critical = anderson_darling_critical(significance);
  const CMatrix p = blocks.bin_matrix(bin);
  std::size_t accepted = 0;
  std::vector<double> re(static_cast<std::size_t>(p.cols()));
  std::vector<double> im(re.size());
  for (Eigen::Index m = 0; m < p.rows(); ++m) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      re[static_cast<std::size_t>(j)] = p(m, j).real();
      im[static_cast<std::size_t>(j)] = p(m, j).imag();
    }
    if (anderson_darling_statistic(re) <= critical &&
        anderson_darling_statistic(im) <= critical) {
      ++accepted;
    }
  }
  return static_cast<double>(accepted) / static_cast<double>(p.rows());
}

double properness_ratio(const CMatrix& csm, const CMatrix& pcsm) {
  if (csm.rows() != pcsm.rows() || csm.cols() != pcsm.cols()) {
    throw InconsistentInputs("CSM and PCSM sizes differ");
  }
  const double den = csm.norm();
  if (!(den > 0.0)) throw UndefinedMetric("properness ratio of a zero CSM");
  return pcsm.norm() / den;
}

namespace {

double white_from_moments(double frob2, double trace_re, double n) {
  if (!(frob2 > 0.0)) {
    throw UndefinedMetric("white-noise deviation of a zero matrix");
  }
  const double a = trace_re / n;
  if (a <= 0.0) return 1.0;
  const double dev2 = std::max(0.0, frob2 - 2.0 * a * trace_re + a * a * n);
  return std::min(1.0, std::sqrt(dev2 / frob2));
}

}  // namespace

double white_noise_deviation(const CMatrix& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0) {
    throw InvalidArgument("white-noise deviation needs a square matrix");
  }
  return white_from_moments(sigma.squaredNorm(), sigma.trace().real(),
                            static_cast<double>(sigma.rows()));
}

double gaussian_white_noise_deviation(const CMatrix& csm, const CMatrix& pcsm) {
  if (csm.rows() != csm.cols() || pcsm.rows() != csm.rows() ||
      pcsm.cols() != csm.cols()) {
    throw InconsistentInputs("CSM and PCSM sizes differ");
  }
  const Eigen::Index m = csm.rows();
  // entry ((m,l),(m',l')) = C(m,m') conj C(l,l') + P(m,l') conj P(l,m')
  double frob2 = 0.0;
  for (Eigen::Index l = 0; l < m; ++l) {
    for (Eigen::Index lp = 0; lp < m; ++lp) {
      const cplx cl = std::conj(csm(l, lp));
      for (Eigen::Index mp = 0; mp < m; ++mp) {
        const cplx pl = std::conj(pcsm(l, mp));
        for (Eigen::Index k = 0; k < m; ++k) {
          frob2 += std::norm(csm(k, mp) * cl + pcsm(k, lp) * pl);
        }
      }
    }
  }
  double trace = 0.0;
  for (Eigen::Index l = 0; l < m; ++l) {
    for (Eigen::Index k = 0; k < m; ++k) {
      trace += (csm(k, k) * std::conj(csm(l, l))).real() + std::norm(pcsm(k, l));
    }
  }
  return white_from_moments(frob2, trace, static_cast<double>(m * m));
}

std::vector<StatsReport> stats_report(const BlockSamples& blocks,
                                      CovarianceMethod method,
                                      double significance,
                                      std::size_t workers) {
  blocks.validate();
  anderson_darling_critical(significance);
  std::vector<StatsReport> out(blocks.bins());
  parallel_for(blocks.bins(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t f = begin; f < end; ++f) {
      const CMatrix csm = estimate_csm(blocks, f);
      const CMatrix pcsm = estimate_pcsm(blocks, f);
      StatsReport& r = out[f];
      r.frequency_hz = blocks.frequencies()[f];
      r.eps_mean = zero_mean_deviation(blocks, f);
      r.ad_acceptance_rate = anderson_darling_rate(blocks, f, significance);
      r.proper_ratio = properness_ratio(csm, pcsm);
      r.white_noise_dev =
          method == CovarianceMethod::GaussianFormula
              ? gaussian_white_noise_deviation(csm, pcsm)
              : white_noise_deviation(sample_covariance(blocks, f).per_block);
    }
  });
  return out;
}

}  // namespace aaim
