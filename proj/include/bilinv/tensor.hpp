#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <iostream>
#include <utility>
#include <vector>

#include "bilinv/errors.hpp"
#include "bilinv/rng.hpp"

namespace bilinv {

using Eigen::Index;

/// Order-3 operator basis: p slabs V_i of size l x n. Fixing the middle index
/// reproduces slab V_i. When every slab has a single nonzero row (row-wise PCA
/// output) the tensor is stored compressed: one n-row per slab plus its row
/// index, and all contractions skip the O(l*n) dense work per slab.
class BilinearTensor {
 public:
  BilinearTensor() = default;

  /// Dense construction from explicit slabs (all l x n, finite entries).
  BilinearTensor(Index l, Index n, std::vector<Eigen::MatrixXd> slabs)
      : l_(l), n_(n), slabs_(std::move(slabs)) {
    require(l > 0 && n > 0, "BilinearTensor: dimensions must be positive");
    for (std::size_t i = 0; i < slabs_.size(); ++i) {
      require_dim(l, slabs_[i].rows(), "BilinearTensor: slab row count");
      require_dim(n, slabs_[i].cols(), "BilinearTensor: slab column count");
      require(slabs_[i].allFinite(), "BilinearTensor: slab " + std::to_string(i) + " has non-finite entries");
    }
  }

  /// Row-sparse construction: slab i is zero except row nonzero_rows[i],
  /// which equals rows.row(i). rows is p x n.
  static BilinearTensor make_row_sparse(Index l, Index n, std::vector<Index> nonzero_rows,
                                        Eigen::MatrixXd rows) {
    require(l > 0 && n > 0, "BilinearTensor: dimensions must be positive");
    require_dim(static_cast<Index>(nonzero_rows.size()), rows.rows(),
                "BilinearTensor: one row index per slab");
    require_dim(n, rows.cols(), "BilinearTensor: compressed row length");
    require(rows.allFinite(), "BilinearTensor: non-finite entries");
    for (Index r : nonzero_rows)
      require(r >= 0 && r < l, "BilinearTensor: nonzero-row index out of range");
    BilinearTensor t;
    t.l_ = l;
    t.n_ = n;
    t.row_sparse_ = true;
    t.nonzero_rows_ = std::move(nonzero_rows);
    t.rows_ = std::move(rows);
    return t;
  }

  Index measurement_dim() const { return l_; }                // l
  Index coeff_dim() const {                                   // p
    return row_sparse_ ? rows_.rows() : static_cast<Index>(slabs_.size());
  }
  Index voxel_dim() const { return n_; }                      // n
  bool row_sparse() const { return row_sparse_; }
  const std::vector<Index>& nonzero_rows() const { return nonzero_rows_; }

  /// Compressed p x n storage (row-sparse form only).
  const Eigen::MatrixXd& compressed_rows() const {
    require(row_sparse_, "BilinearTensor: compressed_rows requires row-sparse storage");
    return rows_;
  }

  /// Materializes slab V_i as a dense l x n matrix.
  Eigen::MatrixXd slab(Index i) const {
    require(i >= 0 && i < coeff_dim(), "BilinearTensor: slab index out of range");
    if (!row_sparse_) return slabs_[static_cast<std::size_t>(i)];
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(l_, n_);
    v.row(nonzero_rows_[static_cast<std::size_t>(i)]) = rows_.row(i);
    return v;
  }

  BilinearTensor scaled(double c) const {
    BilinearTensor t(*this);
    if (row_sparse_) {
      t.rows_ *= c;
    } else {
      for (auto& v : t.slabs_) v *= c;
    }
    return t;
  }

 private:
  Index l_ = 0;
  Index n_ = 0;
  bool row_sparse_ = false;
  std::vector<Eigen::MatrixXd> slabs_;   // dense storage
  std::vector<Index> nonzero_rows_;      // row-sparse storage
  Eigen::MatrixXd rows_;                 // p x n, row i = nonzero row of slab i
};

/// Mean operator A0. A zero mean makes the unregularized bilinear problem
/// generically nonunique, so that case is flagged and warned on.
class MeanOperator {
 public:
  MeanOperator() = default;
  explicit MeanOperator(Eigen::MatrixXd a0) : a0_(std::move(a0)) {
    require(a0_.allFinite(), "MeanOperator: non-finite entries");
    is_zero_ = a0_.size() == 0 || a0_.isZero(0.0);
    if (is_zero_)
      std::cerr << "bilinv: warning: zero mean operator (bilinear scaling nonuniqueness)\n";
  }

  const Eigen::MatrixXd& matrix() const { return a0_; }
  Index rows() const { return a0_.rows(); }
  Index cols() const { return a0_.cols(); }
  bool is_zero() const { return is_zero_; }

 private:
  Eigen::MatrixXd a0_;
  bool is_zero_ = true;
};

/// The unknown pair: PC coefficients y (dimensionless) and voxel-wise
/// absorption change x (1/mm).
struct JointState {
  Eigen::VectorXd y;
  Eigen::VectorXd x;

  JointState() = default;
  JointState(Eigen::VectorXd y_in, Eigen::VectorXd x_in) : y(std::move(y_in)), x(std::move(x_in)) {
    require(y.allFinite() && x.allFinite(), "JointState: non-finite entries");
  }

  static JointState zero(Index p, Index n) {
    return JointState(Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(n));
  }

  Eigen::VectorXd stacked() const {
    Eigen::VectorXd s(y.size() + x.size());
    s << y, x;
    return s;
  }

  static JointState from_stacked(const Eigen::VectorXd& s, Index p, Index n) {
    require_dim(p + n, s.size(), "JointState: stacked length");
    return JointState(s.head(p), s.tail(n));
  }
};

/// A_{y,2} = sum_i y_i V_i, an l x n matrix.
inline Eigen::MatrixXd contract_y(const BilinearTensor& a, const Eigen::VectorXd& y) {
  require_dim(a.coeff_dim(), y.size(), "contract_y: coefficient length");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(a.measurement_dim(), a.voxel_dim());
  if (a.row_sparse()) {
    const auto& rows = a.compressed_rows();
    for (Index i = 0; i < a.coeff_dim(); ++i)
      m.row(a.nonzero_rows()[static_cast<std::size_t>(i)]) += y[i] * rows.row(i);
  } else {
    for (Index i = 0; i < a.coeff_dim(); ++i) m += y[i] * a.slab(i);
  }
  return m;
}

/// A_{x,3} = [V_1 x  V_2 x ... V_p x], an l x p matrix.
inline Eigen::MatrixXd contract_x(const BilinearTensor& a, const Eigen::VectorXd& x) {
  require_dim(a.voxel_dim(), x.size(), "contract_x: voxel length");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(a.measurement_dim(), a.coeff_dim());
  if (a.row_sparse()) {
    const auto& rows = a.compressed_rows();
    for (Index i = 0; i < a.coeff_dim(); ++i)
      m(a.nonzero_rows()[static_cast<std::size_t>(i)], i) = rows.row(i).dot(x);
  } else {
    for (Index i = 0; i < a.coeff_dim(); ++i) m.col(i) = a.slab(i) * x;
  }
  return m;
}

/// Tensor-vector-vector product over the latter two dimensions: an l-vector.
inline Eigen::VectorXd contract_yx(const BilinearTensor& a, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& x) {
  require_dim(a.coeff_dim(), y.size(), "contract_yx: coefficient length");
  require_dim(a.voxel_dim(), x.size(), "contract_yx: voxel length");
  return contract_x(a, x) * y;
}

/// First-mode contraction with w in R^l: the p x n matrix with rows (V_i^T w)^T.
inline Eigen::MatrixXd contract_first(const BilinearTensor& a, const Eigen::VectorXd& w) {
  require_dim(a.measurement_dim(), w.size(), "contract_first: measurement length");
  Eigen::MatrixXd m(a.coeff_dim(), a.voxel_dim());
  if (a.row_sparse()) {
    const auto& rows = a.compressed_rows();
    for (Index i = 0; i < a.coeff_dim(); ++i)
      m.row(i) = w[a.nonzero_rows()[static_cast<std::size_t>(i)]] * rows.row(i);
  } else {
    for (Index i = 0; i < a.coeff_dim(); ++i) m.row(i) = (a.slab(i).transpose() * w).transpose();
  }
  return m;
}

/// Jacobian of the bilinear forward map at state s: [A_{x,3} | A0 + A_{y,2}],
/// an l x (p+n) matrix with the y-block first.
inline Eigen::MatrixXd bilinear_jacobian(const BilinearTensor& a, const MeanOperator& a0,
                                         const JointState& s) {
  require_dim(a.measurement_dim(), a0.rows(), "bilinear_jacobian: mean operator rows");
  require_dim(a.voxel_dim(), a0.cols(), "bilinear_jacobian: mean operator columns");
  const Index p = a.coeff_dim();
  const Index n = a.voxel_dim();
  require_dim(p, s.y.size(), "bilinear_jacobian: y length");
  require_dim(n, s.x.size(), "bilinear_jacobian: x length");
  Eigen::MatrixXd j(a.measurement_dim(), p + n);
  j.leftCols(p) = contract_x(a, s.x);
  j.rightCols(n) = a0.matrix() + contract_y(a, s.y);
  return j;
}

/// Operator norm sup_{|u|=|v|=1} |A.(u,v)| estimated by alternating
/// singular-vector iteration with random restarts. The returned value is a
/// lower bound on the true norm, converged to relative change < tol; it is
/// an estimate, not a certified supremum.
inline double tensor_norm(const BilinearTensor& a, double tol, int restarts = 10,
                          int max_iters = 500, std::uint64_t seed = 0x7e3a11) {
  require(tol > 0.0, "tensor_norm: tol must be positive");
  const Index p = a.coeff_dim();
  const Index n = a.voxel_dim();
  if (p == 0) return 0.0;

  Rng rng(seed);
  double best = 0.0;
  bool any_converged = false;

  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXd xi = rng.normal_vector(n);
    if (xi.norm() == 0.0) xi.setOnes();
    xi.normalize();
    double value = 0.0;
    bool converged = false;
    for (int it = 0; it < max_iters; ++it) {
      Eigen::MatrixXd mx = contract_x(a, xi);  // l x p
      Eigen::JacobiSVD<Eigen::MatrixXd> svd_u(mx, Eigen::ComputeThinV);
      if (svd_u.singularValues()[0] == 0.0) {
        value = 0.0;
        converged = true;  // tensor annihilates this direction pair
        break;
      }
      Eigen::VectorXd upsilon = svd_u.matrixV().col(0);
      Eigen::MatrixXd my = contract_y(a, upsilon);  // l x n
      Eigen::BDCSVD<Eigen::MatrixXd> svd_x(my, Eigen::ComputeThinV);
      double next = svd_x.singularValues()[0];
      xi = svd_x.matrixV().col(0);
      if (next == 0.0) {
        value = 0.0;
        converged = true;
        break;
      }
      if (std::abs(next - value) < tol * next) {
        value = next;
        converged = true;
        break;
      }
      value = next;
    }
    best = std::max(best, value);
    any_converged = any_converged || converged;
  }
  if (!any_converged)
    throw ConvergenceError("tensor_norm: alternating iteration did not converge", best);
  return best;
}

}  // namespace bilinv
