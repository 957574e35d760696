#pragma once

// The weighted data space (C^{M^2}, <a, b>_W = <a, W^-1 b>_2). W is kept in
// structured form; dense expansion is only meant for small test problems.

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "aaim/covariance.hpp"
#include "aaim/types.hpp"

namespace aaim {

/// Sensor pairs excluded from vec-space quantities.
class SelectionMask {
 public:
  SelectionMask() = default;

  static SelectionMask full(std::size_t mics);
  /// Removes all (m, m) pairs.
  static SelectionMask diagonal_removal(std::size_t mics);
  static SelectionMask removing(std::size_t mics,
                                std::vector<IndexPair> removed);

  std::size_t mics() const { return mics_; }
  std::size_t full_size() const { return mics_ * mics_; }
  std::size_t size() const { return retained_.size(); }
  bool is_full() const { return retained_.size() == full_size(); }
  const std::vector<std::size_t>& retained() const { return retained_; }
  const std::vector<IndexPair>& removed() const { return removed_; }

  CVector reduce(const CVector& full) const;
  /// Keeps retained rows of a column stack of vec-space vectors.
  CMatrix reduce_rows(const CMatrix& full) const;
  /// Keeps retained rows and columns.
  CMatrix reduce_square(const CMatrix& full) const;

  /// "none", "diagonal" or "custom:<count>".
  std::string describe() const;

  bool operator==(const SelectionMask& other) const {
    return mics_ == other.mics_ && retained_ == other.retained_;
  }

 private:
  std::size_t mics_ = 0;
  std::vector<std::size_t> retained_;
  std::vector<IndexPair> removed_;
  std::string label_;
};

/// (D + L^* L)^-1 v through the Sherman-Morrison-Woodbury identity.
CVector woodbury_apply(const RVector& d, const CMatrix& l, const CVector& v);

class WeightingScheme {
 public:
  struct ScaledIdentity {
    double sigma2;
    std::size_t dim;
  };
  struct Diagonal {
    RVector d;
  };
  struct DenseHermitian {
    CMatrix w;
  };
  /// W = R^T kron R for an M x M Hermitian positive definite R.
  struct KroneckerPair {
    CMatrix r;
  };
  /// W = D + L^* L with L of shape rank x dim.
  struct DiagPlusLowRank {
    RVector d;
    CMatrix l;
  };
  using Representation = std::variant<ScaledIdentity, Diagonal, DenseHermitian,
                                      KroneckerPair, DiagPlusLowRank>;

  static WeightingScheme scaled_identity(double sigma2, std::size_t dim);
  static WeightingScheme diagonal(RVector d);
  static WeightingScheme dense(CMatrix w);
  static WeightingScheme kronecker(CMatrix r);
  static WeightingScheme diag_plus_low_rank(RVector d, CMatrix l);

  std::size_t dimension() const { return dim_; }
  const Representation& representation() const { return rep_; }

  CVector apply_inverse(const CVector& v) const;
  /// Column-wise W^-1 application.
  CMatrix apply_inverse(const CMatrix& columns) const;
  /// W v.
  CVector apply(const CVector& v) const;
  /// Explicit W; O(dim^2) memory.
  CMatrix dense_matrix() const;

  /// Rows/columns restricted to the mask's retained indices. Structured
  /// diagonal forms stay structured; Kronecker and dense become dense.
  WeightingScheme reduce(const SelectionMask& mask) const;

  const std::string& label() const { return label_; }
  WeightingScheme& set_label(std::string label) {
    label_ = std::move(label);
    return *this;
  }

 private:
  struct Factor;
  WeightingScheme(Representation rep, std::size_t dim);
  void require_dimension(Eigen::Index n) const;

  Representation rep_;
  std::size_t dim_ = 0;
  std::shared_ptr<const Factor> factor_;
  std::string label_ = "custom";
};

/// <a, b>_W = sum_j a_j conj((W^-1 b)_j).
cplx weighted_inner(const WeightingScheme& w, const CVector& a,
                    const CVector& b);

enum class WeightingKind {
  Conventional,
  InverseVarianceDiagonal,
  InverseCovarianceFull,
  Shading,
  RobustAdaptive,
  Capon,
};

const char* to_string(WeightingKind kind);
WeightingKind weighting_kind_from_string(const std::string& name);

/// A weighting request as it appears in run configs:
/// {"type": "conventional"|"ivd"|"ivf"|"shading"|"rab"|"capon", ...}.
struct WeightingChoice {
  WeightingKind kind = WeightingKind::Conventional;
  double sigma2 = 1.0;      // conventional
  double alpha = 0.0;       // rab diagonal loading
  RVector shading;          // shading microphone weights nu
  bool low_rank = false;    // ivf: diagonal-plus-low-rank surrogate
  double low_rank_mass = 0.99;

  bool needs_covariance() const {
    return kind == WeightingKind::InverseVarianceDiagonal ||
           kind == WeightingKind::InverseCovarianceFull;
  }
  std::string name() const { return to_string(kind); }

  static WeightingChoice from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

WeightingScheme conventional_weighting(std::size_t mics, double sigma2 = 1.0);
/// W = diag(Sigma).
WeightingScheme ivd_weighting(const CMatrix& sigma);
/// W = Sigma.
WeightingScheme ivf_weighting(const CMatrix& sigma);
/// D = diag(Sigma); L from the leading positive eigenpairs of
/// Sigma - diag(Sigma) covering `mass` of its squared Frobenius norm.
WeightingScheme ivf_low_rank_weighting(const CMatrix& sigma,
                                       double mass = 0.99);
/// W = diag(vec(nu nu^T))^-1.
WeightingScheme shading_weighting(const RVector& nu);
/// W = R^T kron R, R = C + alpha I.
WeightingScheme rab_weighting(const CMatrix& csm, double alpha);
/// W = C^T kron C.
WeightingScheme capon_weighting(const CMatrix& csm);

/// Builds the requested weighting already reduced by `mask`. `sigma` is any
/// positive multiple of the data covariance (only its shape matters for the
/// beamformer) and may be null unless the choice needs it.
WeightingScheme build_weighting(const WeightingChoice& choice,
                                const CMatrix& csm, const CMatrix* sigma,
                                const SelectionMask& mask);

}  // namespace aaim
