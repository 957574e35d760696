#include "aaim/damas.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Cholesky>

#include "aaim/errors.hpp"
#include "aaim/parallel.hpp"

namespace aaim {

cplx psf_value(const WeightingScheme& w, const SelectionMask& mask,
               const CVector& g_focus, const CVector& g_source) {
  if (g_source.size() != g_focus.size()) {
    throw InconsistentInputs("steering vectors of different length");
  }
  const CMatrix source = g_source * g_source.adjoint();
  return beamform_point(source, w, mask, g_focus);
}

DamasSystem assemble_system(const WeightedSteering& steering,
                            const SourceMap& map, std::size_t workers) {
  if (map.weighting != steering.weighting) {
    throw InconsistentInputs("map weighting '" + map.weighting +
                             "' differs from system weighting '" +
                             steering.weighting + "'");
  }
  if (map.mask != steering.mask.describe()) {
    throw InconsistentInputs("map mask '" + map.mask +
                             "' differs from system mask '" +
                             steering.mask.describe() + "'");
  }
  const auto n = static_cast<Eigen::Index>(steering.points());
  if (map.values.size() != n || map.grid.size() != steering.points()) {
    throw InconsistentInputs("map has " + std::to_string(map.values.size()) +
                             " points but the steering set has " +
                             std::to_string(n));
  }
  DamasSystem sys;
  sys.grid = map.grid;
  sys.frequency_hz = map.frequency_hz;
  sys.weighting = map.weighting;
  sys.mask = map.mask;
  sys.b = map.values.real();
  sys.h.resize(n, n);
  // h(i, l) = Re <gbar_l, gbar_i>_W / norm_i = Re(x_i^* gbar_l) / norm_i,
  // evaluated as two real products
  const RMatrix gr = steering.gbar.real();
  const RMatrix gi = steering.gbar.imag();
  parallel_tiles(static_cast<std::size_t>(n), 64, workers,
                 [&](std::size_t begin, std::size_t end) {
                   const auto b = static_cast<Eigen::Index>(begin);
                   const auto cnt = static_cast<Eigen::Index>(end - begin);
                   const auto x = steering.w_inv_gbar.middleCols(b, cnt);
                   sys.h.middleRows(b, cnt).noalias() =
                       x.real().transpose() * gr;
                   sys.h.middleRows(b, cnt).noalias() +=
                       x.imag().transpose() * gi;
                   for (Eigen::Index i = b; i < b + cnt; ++i) {
                     sys.h.row(i) /= steering.norms[i];
                     sys.h(i, i) = 1.0;
                   }
                 });
  if (!sys.h.allFinite() || !sys.b.allFinite()) {
    throw InvalidArgument("DAMAS system has non-finite entries");
  }
  return sys;
}

// ---------------------------------------------------------------- nnls

GramNnls::GramNnls(RMatrix h, RVector b) : h_(std::move(h)), b_(std::move(b)) {
  if (h_.rows() != b_.size() || h_.cols() == 0) {
    throw InconsistentInputs("NNLS system dimensions do not match");
  }
  if (!h_.allFinite() || !b_.allFinite()) {
    throw InvalidArgument("NNLS inputs must be finite");
  }
  gram_.noalias() = h_.transpose() * h_;
  rhs_.noalias() = h_.transpose() * b_;
  b_norm2_ = b_.squaredNorm();
  // power iteration on the Gram matrix
  RVector v = RVector::Ones(gram_.cols()).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    RVector w = gram_ * v;
    const double next = w.norm();
    if (next == 0.0) break;
    v = w / next;
    if (std::abs(next - lambda) <= 1e-10 * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  lipschitz_ = lambda;
}

double GramNnls::residual_norm(const RVector& q) const {
  return (h_ * q - b_).norm();
}

namespace {

struct KktState {
  double residual;
  Eigen::Index worst;
};

// gradient = Q q - c; free variables need |grad| small, bound ones grad >= 0
KktState kkt(const RVector& q, const RVector& grad) {
  KktState s{0.0, -1};
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    const double v = q[i] > 0.0 ? std::abs(grad[i]) : std::max(0.0, -grad[i]);
    if (v > s.residual) {
      s.residual = v;
      s.worst = i;
    }
  }
  return s;
}

}  // namespace

NnlsResult GramNnls::solve(double alpha, const RVector* warm_start,
                           const NnlsOptions& options) const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw InvalidArgument("regularization parameter must be >= 0");
  }
  const Eigen::Index n = gram_.cols();
  const auto q_of = [&](const RVector& q) -> RVector {
    return gram_ * q + alpha * q - rhs_;
  };
  const double tol =
      options.kkt_relative_tolerance * std::max(rhs_.cwiseAbs().maxCoeff(),
                                                1e-300);

  RVector q = RVector::Zero(n);
  if (warm_start != nullptr && warm_start->size() == n) {
    q = warm_start->cwiseMax(0.0);
  }

  // accelerated projected gradient to locate the support
  const double step = 1.0 / (lipschitz_ + alpha);
  if (lipschitz_ + alpha > 0.0) {
    RVector y = q;
    RVector prev = q;
    double t = 1.0;
    for (std::size_t it = 0; it < options.warm_start_iterations; ++it) {
      RVector next = (y - step * q_of(y)).cwiseMax(0.0);
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = next + ((t - 1.0) / t_next) * (next - prev);
      prev = std::move(next);
      t = t_next;
    }
    q = prev;
  }

  // active-set polishing (Lawson-Hanson on the Gram system)
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) passive[i] = q[i] > 0.0;
  std::vector<bool> skip(static_cast<std::size_t>(n), false);

  const std::size_t cap = options.max_iterations > 0
                              ? options.max_iterations
                              : 3 * static_cast<std::size_t>(n) + 100;
  std::size_t iterations = 0;
  bool need_solve = true;  // the warm support has not been solved on yet

  // Solves the unconstrained problem on the passive set, then steps back
  // toward feasibility until every passive variable is positive.
  const auto polish = [&]() -> bool {
    for (;;) {
      std::vector<Eigen::Index> idx;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (passive[i]) idx.push_back(i);
      }
      if (idx.empty()) {
        q.setZero();
        return true;
      }
      const auto p = static_cast<Eigen::Index>(idx.size());
      RMatrix qpp(p, p);
      RVector cp(p);
      for (Eigen::Index a = 0; a < p; ++a) {
        cp[a] = rhs_[idx[a]];
        for (Eigen::Index b = 0; b < p; ++b) qpp(a, b) = gram_(idx[a], idx[b]);
        qpp(a, a) += alpha;
      }
      Eigen::LDLT<RMatrix> ldlt(qpp);
      const RVector s = ldlt.solve(cp);
      if (ldlt.info() != Eigen::Success || !s.allFinite()) return false;
      if (s.minCoeff() > 0.0) {
        q.setZero();
        for (Eigen::Index a = 0; a < p; ++a) q[idx[a]] = s[a];
        return true;
      }
      double theta = 1.0;
      Eigen::Index blocking = -1;
      for (Eigen::Index a = 0; a < p; ++a) {
        if (s[a] <= 0.0) {
          const double qa = q[idx[a]];
          const double ratio = qa / (qa - s[a]);
          if (ratio < theta) {
            theta = ratio;
            blocking = a;
          }
        }
      }
      for (Eigen::Index a = 0; a < p; ++a) {
        const Eigen::Index i = idx[a];
        q[i] += theta * (s[a] - q[i]);
        if (a == blocking || q[i] <= 0.0) {
          q[i] = 0.0;
          passive[i] = false;
        }
      }
      if (++iterations > cap) return true;
    }
  };

  KktState state{};
  for (;;) {
    if (need_solve) {
      if (!polish()) {
        throw NonConvergence("NNLS subproblem is singular");
      }
      need_solve = false;
    }
    const RVector grad = q_of(q);
    state = kkt(q, grad);
    if (state.residual <= tol) break;
    if (iterations > cap) {
      std::ostringstream msg;
      msg << "NNLS did not converge in " << cap
          << " iterations (KKT residual " << state.residual << ", tolerance "
          << tol << ")";
      throw NonConvergence(msg.str());
    }
    ++iterations;
    // most violating bound variable not on the skip list
    Eigen::Index enter = -1;
    double best = tol;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!passive[i] && !skip[i] && -grad[i] > best) {
        best = -grad[i];
        enter = i;
      }
    }
    if (enter < 0) {
      if (std::any_of(skip.begin(), skip.end(), [](bool b) { return b; })) {
        break;  // only variables that cannot enter remain; report uncertified
      }
      // free-variable stationarity is off: re-solve once on the support
      const RVector q_before = q;
      if (!polish()) throw NonConvergence("NNLS subproblem is singular");
      if ((q - q_before).norm() == 0.0) break;
      continue;
    }
    passive[enter] = true;
    const RVector q_before = q;
    if (!polish()) throw NonConvergence("NNLS subproblem is singular");
    if (!passive[enter] && (q - q_before).norm() == 0.0) {
      skip[enter] = true;  // entered and immediately dropped: avoid cycling
    } else {
      std::fill(skip.begin(), skip.end(), false);
    }
  }

  NnlsResult r;
  r.q = q;
  r.residual_norm = residual_norm(q);
  r.objective = r.residual_norm * r.residual_norm + alpha * q.squaredNorm();
  r.kkt_residual = state.residual;
  r.kkt_tolerance = tol;
  r.certified = state.residual <= tol;
  r.iterations = iterations;
  return r;
}

NnlsResult nnls_solve(const RMatrix& h, const RVector& b, double alpha,
                      const NnlsOptions& options) {
  return GramNnls(h, b).solve(alpha, nullptr, options);
}

// ---------------------------------------------------------------- alpha

const char* to_string(DiscrepancyFlag flag) {
  switch (flag) {
    case DiscrepancyFlag::None:
      return "none";
    case DiscrepancyFlag::OverRegularized:
      return "over-regularized";
    case DiscrepancyFlag::Unattainable:
      return "unattainable";
  }
  return "unknown";
}

DiscrepancyResult discrepancy_alpha(const GramNnls& system, double delta,
                                    double tau, const NnlsOptions& options) {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw InvalidArgument("noise level delta must be positive");
  }
  if (!(tau >= 1.0) || !std::isfinite(tau)) {
    throw InvalidArgument("discrepancy factor tau must be >= 1");
  }
  const double scale = system.spectral_norm_squared() > 0.0
                           ? system.spectral_norm_squared()
                           : 1.0;
  double lo = 1e-8 * scale;
  double hi = 1e8 * scale;
  DiscrepancyResult out;
  out.target = tau * delta;

  const auto finish = [&](double alpha, NnlsResult sol, DiscrepancyFlag flag) {
    out.alpha = alpha;
    out.residual = sol.residual_norm;
    out.solution = std::move(sol);
    out.flag = flag;
    return out;
  };

  if (out.target >= system.b_norm()) {
    ++out.evaluations;
    return finish(hi, system.solve(hi, nullptr, options),
                  DiscrepancyFlag::OverRegularized);
  }
  NnlsResult at_lo = system.solve(lo, nullptr, options);
  ++out.evaluations;
  if (at_lo.residual_norm > out.target) {
    return finish(lo, std::move(at_lo), DiscrepancyFlag::Unattainable);
  }
  NnlsResult at_hi = system.solve(hi, &at_lo.q, options);
  ++out.evaluations;
  if (at_hi.residual_norm <= out.target) {
    return finish(hi, std::move(at_hi), DiscrepancyFlag::OverRegularized);
  }
  while (hi / lo > 1.0 + 1e-3) {
    const double mid = std::sqrt(lo * hi);
    NnlsResult at_mid = system.solve(mid, &at_lo.q, options);
    ++out.evaluations;
    if (at_mid.residual_norm <= out.target) {
      lo = mid;
      at_lo = std::move(at_mid);
    } else {
      hi = mid;
    }
  }
  return finish(lo, std::move(at_lo), DiscrepancyFlag::None);
}

DiscrepancyResult discrepancy_alpha(const RMatrix& h, const RVector& b,
                                    double delta, double tau,
                                    const NnlsOptions& options) {
  return discrepancy_alpha(GramNnls(h, b), delta, tau, options);
}

}  // namespace aaim
