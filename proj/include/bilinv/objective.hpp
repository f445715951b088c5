#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "bilinv/covariance.hpp"
#include "bilinv/tensor.hpp"

namespace bilinv {

/// One inverse-problem instance: data b = A0 x + A.(y,x) + e with noise
/// covariance gamma1 and zero-mean Gaussian priors gamma2 (y) and gamma3 (x).
class Problem {
 public:
  Problem(MeanOperator a0, BilinearTensor a, Eigen::VectorXd b, CovarianceModel gamma1,
          CovarianceModel gamma2, CovarianceModel gamma3)
      : a0_(std::move(a0)),
        a_(std::move(a)),
        b_(std::move(b)),
        gamma1_(std::move(gamma1)),
        gamma2_(std::move(gamma2)),
        gamma3_(std::move(gamma3)) {
    require_dim(a_.measurement_dim(), a0_.rows(), "Problem: mean operator rows");
    require_dim(a_.voxel_dim(), a0_.cols(), "Problem: mean operator columns");
    require_dim(a_.measurement_dim(), b_.size(), "Problem: data length");
    require_dim(a_.measurement_dim(), gamma1_.dim(), "Problem: gamma1 dimension");
    require_dim(a_.coeff_dim(), gamma2_.dim(), "Problem: gamma2 dimension");
    require_dim(a_.voxel_dim(), gamma3_.dim(), "Problem: gamma3 dimension");
    require(b_.allFinite(), "Problem: non-finite data");
  }

  const MeanOperator& mean_operator() const { return a0_; }
  const BilinearTensor& tensor() const { return a_; }
  const Eigen::VectorXd& data() const { return b_; }
  const CovarianceModel& gamma1() const { return gamma1_; }
  const CovarianceModel& gamma2() const { return gamma2_; }
  const CovarianceModel& gamma3() const { return gamma3_; }

  Index measurement_dim() const { return a_.measurement_dim(); }
  Index coeff_dim() const { return a_.coeff_dim(); }
  Index voxel_dim() const { return a_.voxel_dim(); }

 private:
  MeanOperator a0_;
  BilinearTensor a_;
  Eigen::VectorXd b_;
  CovarianceModel gamma1_;
  CovarianceModel gamma2_;
  CovarianceModel gamma3_;
};

/// r = b - A0 x - A.(y,x)
inline Eigen::VectorXd residual(const Problem& prob, const JointState& s) {
  require_dim(prob.coeff_dim(), s.y.size(), "residual: y length");
  require_dim(prob.voxel_dim(), s.x.size(), "residual: x length");
  return prob.data() - prob.mean_operator().matrix() * s.x - contract_yx(prob.tensor(), s.y, s.x);
}

/// Tikhonov functional ||r||^2_{G1^-1} + ||y||^2_{G2^-1} + ||x||^2_{G3^-1}.
/// Quadratic forms go through triangular factor solves, never explicit
/// inverses; a semidefinite gamma3 uses a least-squares solve and throws a
/// diagnosed error when x leaves its range.
inline double phi(const Problem& prob, const JointState& s) {
  Eigen::VectorXd r = residual(prob, s);
  return prob.gamma1().quad_inv(r) + prob.gamma2().quad_inv(s.y) + prob.gamma3().quad_inv(s.x);
}

/// Stacked gradient (dPhi/dy, dPhi/dx) =
///   2 (-A_{x,3}^T G1^-1 r + G2^-1 y, -(A0 + A_{y,2})^T G1^-1 r + G3^-1 x).
inline Eigen::VectorXd phi_gradient(const Problem& prob, const JointState& s) {
  Eigen::VectorXd r = residual(prob, s);
  Eigen::VectorXd g1r = prob.gamma1().solve(r);
  Eigen::MatrixXd ax3 = contract_x(prob.tensor(), s.x);
  Eigen::MatrixXd m = prob.mean_operator().matrix() + contract_y(prob.tensor(), s.y);
  Eigen::VectorXd g(prob.coeff_dim() + prob.voxel_dim());
  g.head(prob.coeff_dim()) = 2.0 * (-ax3.transpose() * g1r + prob.gamma2().solve(s.y));
  g.tail(prob.voxel_dim()) = 2.0 * (-m.transpose() * g1r + prob.gamma3().solve(s.x));
  return g;
}

/// Symmetric (p+n) x (p+n) Hessian, including the first-mode cross term
/// -A.(G1^-1 r)_1 that the Gauss-Newton model drops.
inline Eigen::MatrixXd phi_hessian(const Problem& prob, const JointState& s) {
  const Index p = prob.coeff_dim();
  const Index n = prob.voxel_dim();
  Eigen::VectorXd r = residual(prob, s);
  Eigen::VectorXd g1r = prob.gamma1().solve(r);
  Eigen::MatrixXd ax3 = contract_x(prob.tensor(), s.x);
  Eigen::MatrixXd m = prob.mean_operator().matrix() + contract_y(prob.tensor(), s.y);

  Eigen::MatrixXd g1inv_ax3(prob.measurement_dim(), p);
  for (Index i = 0; i < p; ++i) g1inv_ax3.col(i) = prob.gamma1().solve(ax3.col(i));
  Eigen::MatrixXd g1inv_m(prob.measurement_dim(), n);
  for (Index j = 0; j < n; ++j) g1inv_m.col(j) = prob.gamma1().solve(m.col(j));

  Eigen::MatrixXd cross = ax3.transpose() * g1inv_m - contract_first(prob.tensor(), g1r);

  Eigen::MatrixXd g2inv(p, p);
  for (Index i = 0; i < p; ++i) g2inv.col(i) = prob.gamma2().solve(Eigen::VectorXd::Unit(p, i));
  Eigen::MatrixXd g3inv(n, n);
  for (Index j = 0; j < n; ++j) g3inv.col(j) = prob.gamma3().solve(Eigen::VectorXd::Unit(n, j));

  Eigen::MatrixXd h(p + n, p + n);
  h.topLeftCorner(p, p) = g2inv + ax3.transpose() * g1inv_ax3;
  h.topRightCorner(p, n) = cross;
  h.bottomLeftCorner(n, p) = cross.transpose();
  h.bottomRightCorner(n, n) = g3inv + m.transpose() * g1inv_m;
  h *= 2.0;
  return 0.5 * (h + h.transpose());
}

/// Unique-minimizer diagnostics: mu = max(l2max, l3max)/l1min, the radius
/// rho = sqrt(mu) ||b|| of the ball that must contain every global
/// minimizer, and an empirical convexity probe (minimum Hessian eigenvalue
/// over random states inside the ball -- a probe, not a proof).
struct ConvexityDiagnostics {
  double mu = 0.0;
  double rho = 0.0;
  double lambda1_min = 0.0;
  double lambda2_max = 0.0;
  double lambda3_max = 0.0;
  double min_hessian_eigenvalue = 0.0;
  std::optional<JointState> hessian_pd_at;  // probe state attaining the minimum eigenvalue
};

inline ConvexityDiagnostics convexity_diagnostics(const Problem& prob, int probe_count = 100,
                                                  std::uint64_t seed = 0xb0a7) {
  ConvexityDiagnostics d;
  d.lambda1_min = prob.gamma1().min_eigenvalue();
  d.lambda2_max = prob.gamma2().max_eigenvalue();
  d.lambda3_max = prob.gamma3().max_eigenvalue();
  d.mu = std::max(d.lambda2_max, d.lambda3_max) / d.lambda1_min;
  d.rho = std::sqrt(d.mu) * prob.data().norm();

  const Index p = prob.coeff_dim();
  const Index n = prob.voxel_dim();
  Rng rng(seed);
  double min_eig = std::numeric_limits<double>::infinity();
  for (int k = 0; k < probe_count; ++k) {
    Eigen::VectorXd point = rng.ball_point(p + n, d.rho);
    JointState s(point.head(p), point.tail(n));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(phi_hessian(prob, s), Eigen::EigenvaluesOnly);
    double e = es.eigenvalues().minCoeff();
    if (e < min_eig) {
      min_eig = e;
      d.hessian_pd_at = s;
    }
  }
  d.min_hessian_eigenvalue = min_eig;
  return d;
}

/// 2x2 Hessian of alpha,beta -> Phi(alpha*y0, beta*x0); its determinant goes
/// negative for large alpha, beta whenever A.(y0,x0) != 0 (the nonconvexity
/// witness).
inline Eigen::Matrix2d restricted_hessian(const Problem& prob, const Eigen::VectorXd& y0,
                                          const Eigen::VectorXd& x0, double alpha, double beta) {
  JointState s(alpha * y0, beta * x0);
  Eigen::MatrixXd h = phi_hessian(prob, s);
  const Index p = prob.coeff_dim();
  const Index n = prob.voxel_dim();
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(p + n, 2);
  basis.col(0).head(p) = y0;
  basis.col(1).tail(n) = x0;
  Eigen::Matrix2d hf = basis.transpose() * h * basis;
  return 0.5 * (hf + hf.transpose());
}

}  // namespace bilinv
