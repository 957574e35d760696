#include "aaim/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "aaim/errors.hpp"

namespace aaim {

// ---------------------------------------------------------------- masks

SelectionMask SelectionMask::full(std::size_t mics) {
  return removing(mics, {});
}

SelectionMask SelectionMask::diagonal_removal(std::size_t mics) {
  std::vector<IndexPair> removed;
  for (std::size_t m = 0; m < mics; ++m) removed.push_back({m, m});
  auto mask = removing(mics, std::move(removed));
  mask.label_ = "diagonal";
  return mask;
}

SelectionMask SelectionMask::removing(std::size_t mics,
                                      std::vector<IndexPair> removed) {
  if (mics == 0) throw InvalidArgument("mask needs at least one microphone");
  std::vector<bool> drop(mics * mics, false);
  for (const auto& p : removed) {
    if (p.row >= mics || p.col >= mics) {
      throw InconsistentInputs("removed pair (" + std::to_string(p.row) + "," +
                               std::to_string(p.col) +
                               ") outside a " + std::to_string(mics) +
                               "-microphone array");
    }
    drop[flat_index(p.row, p.col, mics)] = true;
  }
  SelectionMask mask;
  mask.mics_ = mics;
  for (std::size_t j = 0; j < drop.size(); ++j) {
    if (!drop[j]) mask.retained_.push_back(j);
  }
  if (mask.retained_.empty()) {
    throw InvalidArgument("mask removes every sensor pair");
  }
  // canonical order of removed pairs, duplicates dropped
  for (std::size_t j = 0; j < drop.size(); ++j) {
    if (drop[j]) mask.removed_.push_back(pair_of(j, mics));
  }
  mask.label_ = mask.removed_.empty()
                    ? "none"
                    : "custom:" + std::to_string(mask.removed_.size());
  return mask;
}

CVector SelectionMask::reduce(const CVector& full) const {
  if (static_cast<std::size_t>(full.size()) != full_size()) {
    throw InconsistentInputs("vector of length " + std::to_string(full.size()) +
                             " does not match mask over " +
                             std::to_string(full_size()) + " pairs");
  }
  if (is_full()) return full;
  CVector out(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) {
    out[static_cast<Eigen::Index>(i)] =
        full[static_cast<Eigen::Index>(retained_[i])];
  }
  return out;
}

CMatrix SelectionMask::reduce_rows(const CMatrix& full) const {
  if (static_cast<std::size_t>(full.rows()) != full_size()) {
    throw InconsistentInputs("row count does not match mask");
  }
  if (is_full()) return full;
  CMatrix out(static_cast<Eigen::Index>(size()), full.cols());
  for (std::size_t i = 0; i < size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        full.row(static_cast<Eigen::Index>(retained_[i]));
  }
  return out;
}

CMatrix SelectionMask::reduce_square(const CMatrix& full) const {
  if (static_cast<std::size_t>(full.rows()) != full_size() ||
      full.rows() != full.cols()) {
    throw InconsistentInputs("matrix of size " + std::to_string(full.rows()) +
                             " does not match mask over " +
                             std::to_string(full_size()) + " pairs");
  }
  if (is_full()) return full;
  const auto n = static_cast<Eigen::Index>(size());
  CMatrix out(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto fc = static_cast<Eigen::Index>(retained_[c]);
    for (Eigen::Index r = 0; r < n; ++r) {
      out(r, c) = full(static_cast<Eigen::Index>(retained_[r]), fc);
    }
  }
  return out;
}

std::string SelectionMask::describe() const { return label_; }

// ---------------------------------------------------------------- woodbury

CVector woodbury_apply(const RVector& d, const CMatrix& l, const CVector& v) {
  if (d.size() != v.size() || (l.rows() > 0 && l.cols() != d.size())) {
    throw InvalidArgument("woodbury_apply: dimension mismatch");
  }
  if ((d.array() <= 0.0).any()) {
    throw InvalidArgument("woodbury_apply: diagonal must be positive");
  }
  const CVector dinv_v = v.cwiseQuotient(d.cast<cplx>());
  if (l.rows() == 0) return dinv_v;
  const CMatrix l_dinv = l * d.cwiseInverse().cast<cplx>().asDiagonal();
  CMatrix inner = l_dinv * l.adjoint();
  inner.diagonal().array() += 1.0;
  Eigen::LLT<CMatrix> llt(inner);
  // I + L D^-1 L^* is positive definite whenever D > 0
  if (llt.info() != Eigen::Success) {
    throw NonConvergence("woodbury_apply: inner system not positive definite");
  }
  return dinv_v - l_dinv.adjoint() * llt.solve(l * dinv_v);
}

// ---------------------------------------------------------------- schemes

struct WeightingScheme::Factor {
  Eigen::LLT<CMatrix> llt;       // dense W, Kronecker R or Woodbury core
  CMatrix l_dinv;                // DiagPlusLowRank only
};

namespace {

[[noreturn]] void throw_not_pd(const CMatrix& a, const std::string& what) {
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(a, Eigen::EigenvaluesOnly);
  std::ostringstream msg;
  msg << what << " is not positive definite (smallest eigenvalue "
      << eig.eigenvalues().minCoeff() << ")";
  throw NotPositiveDefinite(msg.str());
}

Eigen::LLT<CMatrix> factorize(const CMatrix& a, const std::string& what) {
  if (!a.allFinite()) throw InvalidArgument(what + " has non-finite entries");
  Eigen::LLT<CMatrix> llt(a);
  if (llt.info() != Eigen::Success) throw_not_pd(a, what);
  // LLT happily factorizes matrices that are singular to working precision
  const RVector diag = llt.matrixLLT().diagonal().real();
  if (diag.minCoeff() <= 1e-14 * diag.maxCoeff()) throw_not_pd(a, what);
  return llt;
}

}  // namespace

WeightingScheme::WeightingScheme(Representation rep, std::size_t dim)
    : rep_(std::move(rep)), dim_(dim) {}

WeightingScheme WeightingScheme::scaled_identity(double sigma2,
                                                 std::size_t dim) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw NotPositiveDefinite("scaled identity needs sigma^2 > 0");
  }
  if (dim == 0) throw InvalidArgument("weighting dimension must be positive");
  return WeightingScheme(ScaledIdentity{sigma2, dim}, dim);
}

WeightingScheme WeightingScheme::diagonal(RVector d) {
  if (d.size() == 0) throw InvalidArgument("empty diagonal weighting");
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (!(d[i] > 0.0) || !std::isfinite(d[i])) {
      std::ostringstream msg;
      msg << "diagonal weighting entry " << i << " = " << d[i]
          << " is not positive";
      throw NotPositiveDefinite(msg.str());
    }
  }
  const auto dim = static_cast<std::size_t>(d.size());
  return WeightingScheme(Diagonal{std::move(d)}, dim);
}

WeightingScheme WeightingScheme::dense(CMatrix w) {
  require_hermitian(w, 1e-10, "weighting matrix");
  w = 0.5 * (w + w.adjoint()).eval();
  auto factor = std::make_shared<Factor>();
  factor->llt = factorize(w, "weighting matrix");
  const auto dim = static_cast<std::size_t>(w.rows());
  WeightingScheme s(DenseHermitian{std::move(w)}, dim);
  s.factor_ = std::move(factor);
  return s;
}

WeightingScheme WeightingScheme::kronecker(CMatrix r) {
  require_hermitian(r, 1e-10, "Kronecker factor R");
  r = 0.5 * (r + r.adjoint()).eval();
  auto factor = std::make_shared<Factor>();
  factor->llt = factorize(r, "Kronecker factor R");
  const auto dim = static_cast<std::size_t>(r.rows() * r.rows());
  WeightingScheme s(KroneckerPair{std::move(r)}, dim);
  s.factor_ = std::move(factor);
  return s;
}

WeightingScheme WeightingScheme::diag_plus_low_rank(RVector d, CMatrix l) {
  if (l.rows() > 0 && l.cols() != d.size()) {
    throw InvalidArgument("low-rank factor has the wrong width");
  }
  (void)diagonal(d);  // validates d > 0
  auto factor = std::make_shared<Factor>();
  factor->l_dinv = l * d.cwiseInverse().cast<cplx>().asDiagonal();
  CMatrix inner = factor->l_dinv * l.adjoint();
  inner.diagonal().array() += 1.0;
  factor->llt = factorize(inner, "Woodbury core");
  const auto dim = static_cast<std::size_t>(d.size());
  WeightingScheme s(DiagPlusLowRank{std::move(d), std::move(l)}, dim);
  s.factor_ = std::move(factor);
  return s;
}

void WeightingScheme::require_dimension(Eigen::Index n) const {
  if (static_cast<std::size_t>(n) != dim_) {
    throw InconsistentInputs("vector of length " + std::to_string(n) +
                             " does not match weighting of dimension " +
                             std::to_string(dim_));
  }
}

CMatrix WeightingScheme::apply_inverse(const CMatrix& v) const {
  require_dimension(v.rows());
  return std::visit(
      [&](const auto& rep) -> CMatrix {
        using T = std::decay_t<decltype(rep)>;
        if constexpr (std::is_same_v<T, ScaledIdentity>) {
          return v / rep.sigma2;
        } else if constexpr (std::is_same_v<T, Diagonal>) {
          return rep.d.cwiseInverse().template cast<cplx>().asDiagonal() * v;
        } else if constexpr (std::is_same_v<T, DenseHermitian>) {
          return factor_->llt.solve(v);
        } else if constexpr (std::is_same_v<T, KroneckerPair>) {
          // (R^T kron R)^-1 vec A = vec(R^-1 A R^-1)
          const Eigen::Index m = rep.r.rows();
          CMatrix out(v.rows(), v.cols());
          for (Eigen::Index c = 0; c < v.cols(); ++c) {
            const CMatrix a = Eigen::Map<const CMatrix>(v.col(c).data(), m, m);
            const CMatrix left = factor_->llt.solve(a);
            const CMatrix both = factor_->llt.solve(left.adjoint()).adjoint();
            out.col(c) = Eigen::Map<const CVector>(both.data(), m * m);
          }
          return out;
        } else {
          const CMatrix dinv_v =
              rep.d.cwiseInverse().template cast<cplx>().asDiagonal() * v;
          if (rep.l.rows() == 0) return dinv_v;
          return dinv_v - factor_->l_dinv.adjoint() *
                              factor_->llt.solve(rep.l * dinv_v);
        }
      },
      rep_);
}

CVector WeightingScheme::apply_inverse(const CVector& v) const {
  return apply_inverse(CMatrix(v)).col(0);
}

CVector WeightingScheme::apply(const CVector& v) const {
  require_dimension(v.size());
  return std::visit(
      [&](const auto& rep) -> CVector {
        using T = std::decay_t<decltype(rep)>;
        if constexpr (std::is_same_v<T, ScaledIdentity>) {
          return v * rep.sigma2;
        } else if constexpr (std::is_same_v<T, Diagonal>) {
          return v.cwiseProduct(rep.d.template cast<cplx>());
        } else if constexpr (std::is_same_v<T, DenseHermitian>) {
          return rep.w * v;
        } else if constexpr (std::is_same_v<T, KroneckerPair>) {
          const Eigen::Index m = rep.r.rows();
          const CMatrix a = Eigen::Map<const CMatrix>(v.data(), m, m);
          const CMatrix out = rep.r * a * rep.r;
          return Eigen::Map<const CVector>(out.data(), m * m);
        } else {
          return v.cwiseProduct(rep.d.template cast<cplx>()) +
                 rep.l.adjoint() * (rep.l * v);
        }
      },
      rep_);
}

CMatrix WeightingScheme::dense_matrix() const {
  return std::visit(
      [&](const auto& rep) -> CMatrix {
        using T = std::decay_t<decltype(rep)>;
        const auto n = static_cast<Eigen::Index>(dim_);
        if constexpr (std::is_same_v<T, ScaledIdentity>) {
          return CMatrix::Identity(n, n) * rep.sigma2;
        } else if constexpr (std::is_same_v<T, Diagonal>) {
          return rep.d.template cast<cplx>().asDiagonal();
        } else if constexpr (std::is_same_v<T, DenseHermitian>) {
          return rep.w;
        } else if constexpr (std::is_same_v<T, KroneckerPair>) {
          const Eigen::Index m = rep.r.rows();
          CMatrix w(n, n);
          for (Eigen::Index l = 0; l < m; ++l) {
            for (Eigen::Index lp = 0; lp < m; ++lp) {
              w.block(l * m, lp * m, m, m) = rep.r(lp, l) * rep.r;
            }
          }
          return w;
        } else {
          CMatrix w = rep.l.adjoint() * rep.l;
          w.diagonal() += rep.d.template cast<cplx>();
          return w;
        }
      },
      rep_);
}

WeightingScheme WeightingScheme::reduce(const SelectionMask& mask) const {
  if (mask.full_size() != dim_) {
    throw InconsistentInputs("mask over " + std::to_string(mask.full_size()) +
                             " pairs does not match weighting of dimension " +
                             std::to_string(dim_));
  }
  if (mask.is_full()) return *this;
  const auto& keep = mask.retained();
  const auto n = static_cast<Eigen::Index>(keep.size());
  WeightingScheme out = std::visit(
      [&](const auto& rep) -> WeightingScheme {
        using T = std::decay_t<decltype(rep)>;
        if constexpr (std::is_same_v<T, ScaledIdentity>) {
          return scaled_identity(rep.sigma2, keep.size());
        } else if constexpr (std::is_same_v<T, Diagonal>) {
          RVector d(n);
          for (Eigen::Index i = 0; i < n; ++i) d[i] = rep.d[keep[i]];
          return diagonal(std::move(d));
        } else if constexpr (std::is_same_v<T, DiagPlusLowRank>) {
          RVector d(n);
          CMatrix l(rep.l.rows(), n);
          for (Eigen::Index i = 0; i < n; ++i) {
            const auto k = static_cast<Eigen::Index>(keep[i]);
            d[i] = rep.d[k];
            l.col(i) = rep.l.col(k);
          }
          return diag_plus_low_rank(std::move(d), std::move(l));
        } else {
          return dense(mask.reduce_square(dense_matrix()));
        }
      },
      rep_);
  out.label_ = label_;
  return out;
}

cplx weighted_inner(const WeightingScheme& w, const CVector& a,
                    const CVector& b) {
  if (a.size() != b.size()) {
    throw InconsistentInputs("inner product of vectors of different length");
  }
  // Eigen's dot conjugates its first argument
  return w.apply_inverse(b).dot(a);
}

// ---------------------------------------------------------------- choices

const char* to_string(WeightingKind kind) {
  switch (kind) {
    case WeightingKind::Conventional:
      return "conventional";
    case WeightingKind::InverseVarianceDiagonal:
      return "ivd";
    case WeightingKind::InverseCovarianceFull:
      return "ivf";
    case WeightingKind::Shading:
      return "shading";
    case WeightingKind::RobustAdaptive:
      return "rab";
    case WeightingKind::Capon:
      return "capon";
  }
  return "unknown";
}

WeightingKind weighting_kind_from_string(const std::string& name) {
  for (auto k : {WeightingKind::Conventional,
                 WeightingKind::InverseVarianceDiagonal,
                 WeightingKind::InverseCovarianceFull, WeightingKind::Shading,
                 WeightingKind::RobustAdaptive, WeightingKind::Capon}) {
    if (name == to_string(k)) return k;
  }
  throw InvalidArgument("unknown weighting type '" + name + "'");
}

WeightingChoice WeightingChoice::from_json(const nlohmann::json& j) {
  WeightingChoice c;
  try {
    if (j.is_string()) {
      c.kind = weighting_kind_from_string(j.get<std::string>());
      return c;
    }
    c.kind = weighting_kind_from_string(j.at("type").get<std::string>());
    c.sigma2 = j.value("sigma2", 1.0);
    c.alpha = j.value("alpha", 0.0);
    c.low_rank = j.value("low_rank", false);
    c.low_rank_mass = j.value("low_rank_mass", 0.99);
    if (j.contains("nu")) {
      const auto nu = j.at("nu").get<std::vector<double>>();
      c.shading = Eigen::Map<const RVector>(nu.data(),
                                            static_cast<Eigen::Index>(nu.size()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("weighting config: ") + e.what());
  }
  if (c.kind == WeightingKind::RobustAdaptive && !(c.alpha > 0.0)) {
    throw InvalidArgument("rab weighting needs alpha > 0");
  }
  if (c.kind == WeightingKind::Shading && c.shading.size() == 0) {
    throw InvalidArgument("shading weighting needs a 'nu' vector");
  }
  return c;
}

nlohmann::json WeightingChoice::to_json() const {
  nlohmann::json j{{"type", name()}};
  switch (kind) {
    case WeightingKind::Conventional:
      j["sigma2"] = sigma2;
      break;
    case WeightingKind::RobustAdaptive:
      j["alpha"] = alpha;
      break;
    case WeightingKind::Shading:
      j["nu"] = std::vector<double>(shading.data(),
                                    shading.data() + shading.size());
      break;
    case WeightingKind::InverseCovarianceFull:
      j["low_rank"] = low_rank;
      break;
    default:
      break;
  }
  return j;
}

WeightingScheme conventional_weighting(std::size_t mics, double sigma2) {
  return WeightingScheme::scaled_identity(sigma2, mics * mics)
      .set_label("conventional");
}

WeightingScheme ivd_weighting(const CMatrix& sigma) {
  if (sigma.rows() != sigma.cols()) {
    throw InvalidArgument("covariance matrix is not square");
  }
  return WeightingScheme::diagonal(sigma.diagonal().real()).set_label("ivd");
}

WeightingScheme ivf_weighting(const CMatrix& sigma) {
  return WeightingScheme::dense(sigma).set_label("ivf");
}

WeightingScheme ivf_low_rank_weighting(const CMatrix& sigma, double mass) {
  require_hermitian(sigma, 1e-10, "covariance matrix");
  if (!(mass > 0.0 && mass <= 1.0)) {
    throw InvalidArgument("low-rank mass fraction must lie in (0, 1]");
  }
  const RVector d = sigma.diagonal().real();
  CMatrix remainder = sigma;
  remainder.diagonal().setZero();
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(remainder);
  const RVector& lambda = eig.eigenvalues();  // ascending
  const double total = lambda.squaredNorm();
  std::vector<Eigen::Index> chosen;
  double captured = 0.0;
  for (Eigen::Index i = lambda.size() - 1; i >= 0; --i) {
    if (captured >= mass * total || lambda[i] <= 0.0) break;
    chosen.push_back(i);
    captured += lambda[i] * lambda[i];
  }
  CMatrix l(static_cast<Eigen::Index>(chosen.size()), sigma.cols());
  for (std::size_t r = 0; r < chosen.size(); ++r) {
    const Eigen::Index i = chosen[r];
    l.row(static_cast<Eigen::Index>(r)) =
        std::sqrt(lambda[i]) * eig.eigenvectors().col(i).adjoint();
  }
  return WeightingScheme::diag_plus_low_rank(d, std::move(l)).set_label("ivf");
}

WeightingScheme shading_weighting(const RVector& nu) {
  if (nu.size() == 0 || (nu.array() <= 0.0).any()) {
    throw InvalidArgument("shading weights must be positive");
  }
  const Eigen::Index m = nu.size();
  RVector d(m * m);
  for (Eigen::Index l = 0; l < m; ++l) {
    for (Eigen::Index k = 0; k < m; ++k) {
      d[l * m + k] = 1.0 / (nu[k] * nu[l]);
    }
  }
  return WeightingScheme::diagonal(std::move(d)).set_label("shading");
}

WeightingScheme rab_weighting(const CMatrix& csm, double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("rab weighting needs alpha > 0");
  CMatrix r = csm;
  r.diagonal().array() += alpha;
  return WeightingScheme::kronecker(std::move(r)).set_label("rab");
}

WeightingScheme capon_weighting(const CMatrix& csm) {
  return WeightingScheme::kronecker(csm).set_label("capon");
}

WeightingScheme build_weighting(const WeightingChoice& choice,
                                const CMatrix& csm, const CMatrix* sigma,
                                const SelectionMask& mask) {
  const auto mics = static_cast<std::size_t>(csm.rows());
  if (mask.mics() != mics) {
    throw InconsistentInputs("mask is for " + std::to_string(mask.mics()) +
                             " microphones but the CSM has " +
                             std::to_string(mics));
  }
  if (choice.needs_covariance()) {
    if (sigma == nullptr) {
      throw InvalidArgument(choice.name() + " weighting needs a covariance");
    }
    if (static_cast<std::size_t>(sigma->rows()) != mics * mics) {
      throw InconsistentInputs("covariance of size " +
                               std::to_string(sigma->rows()) +
                               " does not match " + std::to_string(mics) +
                               " microphones");
    }
  }
  switch (choice.kind) {
    case WeightingKind::Conventional:
      return conventional_weighting(mics, choice.sigma2).reduce(mask);
    case WeightingKind::InverseVarianceDiagonal:
      return ivd_weighting(*sigma).reduce(mask);
    case WeightingKind::InverseCovarianceFull:
      // reduce before factorizing: the full matrix is never needed
      if (choice.low_rank) {
        return ivf_low_rank_weighting(*sigma, choice.low_rank_mass)
            .reduce(mask);
      }
      return ivf_weighting(mask.reduce_square(*sigma));
    case WeightingKind::Shading:
      if (static_cast<std::size_t>(choice.shading.size()) != mics) {
        throw InconsistentInputs("shading vector length does not match array");
      }
      return shading_weighting(choice.shading).reduce(mask);
    case WeightingKind::RobustAdaptive:
      return rab_weighting(csm, choice.alpha).reduce(mask);
    case WeightingKind::Capon:
      return capon_weighting(csm).reduce(mask);
  }
  throw InvalidArgument("unhandled weighting kind");
}

}  // namespace aaim
