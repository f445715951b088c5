#include <catch2/catch_amalgamated.hpp>

#include "bilinv/objective.hpp"
#include "oracles.hpp"

using namespace bilinv;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

JointState state(double y, double x) {
  return JointState(VectorXd::Constant(1, y), VectorXd::Constant(1, x));
}

// Known critical points of the scalar problem, from the quintic's real roots
// mapped through x(y) = (1+y)/((1+y)^2 + beta).
struct CriticalPoint {
  double y, x;
};
const CriticalPoint kSaddle01{-1.0101219279731, -0.09990899651308};
const CriticalPoint kLocalMin01{-1.7436880474194427, -1.1387537818176};
const CriticalPoint kGlobalMin01{0.35873669716335543, 0.69816069307896};
const CriticalPoint kOnlyMin1{0.20126887244695413, 0.49170874852034};

double map_x(double y, double beta) { return (1.0 + y) / ((1.0 + y) * (1.0 + y) + beta); }

}  // namespace

TEST_CASE("residual") {
  auto prob = oracles::random_problem({3, 2, 4}, 61);
  SECTION("at the origin the residual is the data") {
    REQUIRE((residual(prob, JointState::zero(2, 4)) - prob.data()).norm() == 0.0);
  }
  SECTION("scalar instance at (y,x) = (0,1) has zero residual") {
    auto scalar = oracles::scalar_beta_problem(0.1);
    REQUIRE(residual(scalar, state(0.0, 1.0)).norm() < 1e-15);
  }
  SECTION("random state matches a direct dense evaluation") {
    std::mt19937_64 eng(62);
    VectorXd y = oracles::random_vector(2, eng), x = oracles::random_vector(4, eng);
    VectorXd direct = prob.data() - prob.mean_operator().matrix() * x;
    for (Eigen::Index i = 0; i < 2; ++i) direct -= y[i] * prob.tensor().slab(i) * x;
    REQUIRE((residual(prob, JointState(y, x)) - direct).norm() < 1e-12);
  }
}

TEST_CASE("phi on the scalar problem") {
  SECTION("phi(0,0) equals the data misfit") {
    auto prob = oracles::random_problem({3, 2, 4}, 63);
    REQUIRE(phi(prob, JointState::zero(2, 4)) ==
            Catch::Approx(prob.gamma1().quad_inv(prob.data())).epsilon(1e-12));
  }
  SECTION("beta = 0.1: the printed global minimum has the smallest phi") {
    auto prob = oracles::scalar_beta_problem(0.1);
    double at_global = phi(prob, state(kGlobalMin01.y, kGlobalMin01.x));
    REQUIRE(at_global < phi(prob, state(kSaddle01.y, kSaddle01.x)));
    REQUIRE(at_global < phi(prob, state(kLocalMin01.y, kLocalMin01.x)));
  }
  SECTION("beta = 1: gradient norm < 1e-6 at the single critical point") {
    auto prob = oracles::scalar_beta_problem(1.0);
    REQUIRE(phi_gradient(prob, state(kOnlyMin1.y, kOnlyMin1.x)).norm() < 1e-6);
  }
  SECTION("matches the closed form (1 - x - yx)^2 + beta (y^2 + x^2)") {
    auto prob = oracles::scalar_beta_problem(0.7);
    for (double y : {-1.5, -0.2, 0.4}) {
      for (double x : {-0.8, 0.1, 1.3}) {
        double r = 1.0 - x - y * x;
        REQUIRE(phi(prob, state(y, x)) ==
                Catch::Approx(r * r + 0.7 * (y * y + x * x)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("phi_gradient") {
  SECTION("vanishes at all three beta = 0.1 critical points") {
    auto prob = oracles::scalar_beta_problem(0.1);
    for (const auto& cp : {kSaddle01, kLocalMin01, kGlobalMin01}) {
      REQUIRE(phi_gradient(prob, state(cp.y, cp.x)).norm() < 1e-5);
    }
  }
  SECTION("matches central finite differences at random states") {
    std::mt19937_64 eng(64);
    for (int t = 0; t < 20; ++t) {
      auto prob = oracles::random_problem({3, 2, 4}, 200 + t);
      VectorXd s = oracles::random_vector(6, eng);
      JointState st = JointState::from_stacked(s, 2, 4);
      VectorXd got = phi_gradient(prob, st);
      VectorXd want = oracles::fd_gradient(
          [&](const VectorXd& v) { return phi(prob, JointState::from_stacked(v, 2, 4)); }, s, 1e-6);
      REQUIRE((got - want).norm() < 1e-6 * std::max(1.0, want.norm()));
    }
  }
  SECTION("at y = 0 the y-block reduces to -2 A_{x,3}^T G1^-1 (b - A0 x)") {
    auto prob = oracles::random_problem({3, 2, 4}, 65);
    std::mt19937_64 eng(66);
    VectorXd x = oracles::random_vector(4, eng);
    JointState st(VectorXd::Zero(2), x);
    VectorXd g = phi_gradient(prob, st);
    VectorXd r = prob.data() - prob.mean_operator().matrix() * x;
    VectorXd want = -2.0 * contract_x(prob.tensor(), x).transpose() * prob.gamma1().solve(r);
    REQUIRE((g.head(2) - want).norm() < 1e-10 * std::max(1.0, want.norm()));
  }
}

TEST_CASE("phi_hessian") {
  SECTION("matches finite differences of the gradient") {
    std::mt19937_64 eng(67);
    for (int t = 0; t < 10; ++t) {
      auto prob = oracles::random_problem({3, 2, 4}, 300 + t);
      VectorXd s = oracles::random_vector(6, eng);
      JointState st = JointState::from_stacked(s, 2, 4);
      MatrixXd got = phi_hessian(prob, st);
      MatrixXd want = oracles::fd_jacobian(
          [&](const VectorXd& v) { return phi_gradient(prob, JointState::from_stacked(v, 2, 4)); },
          s, 1e-6);
      want = 0.5 * (want + want.transpose());
      REQUIRE((got - want).cwiseAbs().maxCoeff() < 1e-5 * std::max(1.0, want.cwiseAbs().maxCoeff()));
    }
  }
  SECTION("symmetry at random states") {
    auto prob = oracles::random_problem({4, 3, 5}, 68);
    std::mt19937_64 eng(69);
    for (int t = 0; t < 5; ++t) {
      JointState st(oracles::random_vector(3, eng), oracles::random_vector(5, eng));
      MatrixXd h = phi_hessian(prob, st);
      REQUIRE((h - h.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SECTION("saddle classification at the beta = 0.1 saddle") {
    auto prob = oracles::scalar_beta_problem(0.1);
    MatrixXd h = phi_hessian(prob, state(kSaddle01.y, kSaddle01.x));
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
    REQUIRE(es.eigenvalues()[0] < -1e-3);
    REQUIRE(es.eigenvalues()[1] > 1e-3);
  }
  SECTION("minima classify as positive definite") {
    auto prob = oracles::scalar_beta_problem(0.1);
    for (const auto& cp : {kLocalMin01, kGlobalMin01}) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(phi_hessian(prob, state(cp.y, cp.x)));
      REQUIRE(es.eigenvalues().minCoeff() > 0.0);
    }
  }
}

TEST_CASE("critical points of the quintic map through x(y)") {
  // gradient vanishes exactly at the quintic's roots mapped through x(y)
  for (double beta : {0.1, 1.0}) {
    auto prob = oracles::scalar_beta_problem(beta);
    Eigen::Matrix<double, 6, 1> coeffs;  // y^5 ... constant
    coeffs << 1.0, 4.0, 2.0 * (3.0 + beta), 4.0 * (1.0 + beta), beta * (2.0 + beta), -1.0;
    Eigen::Matrix<double, 5, 5> companion = Eigen::Matrix<double, 5, 5>::Zero();
    companion.diagonal(-1).setOnes();
    for (int i = 0; i < 5; ++i) companion(0, i) = -coeffs[i + 1] / coeffs[0];
    Eigen::EigenSolver<Eigen::Matrix<double, 5, 5>> es(companion);
    int real_count = 0;
    for (int i = 0; i < 5; ++i) {
      if (std::abs(es.eigenvalues()[i].imag()) > 1e-8) continue;
      ++real_count;
      double y = es.eigenvalues()[i].real();
      double x = map_x(y, beta);
      REQUIRE(phi_gradient(prob, state(y, x)).norm() < 1e-5);
    }
    REQUIRE(real_count == (beta == 0.1 ? 3 : 1));
  }
}

TEST_CASE("convexity diagnostics") {
  SECTION("identity covariances give mu = 1 and rho = ||b||") {
    std::mt19937_64 eng(70);
    std::vector<MatrixXd> slabs{oracles::random_matrix(3, 4, eng),
                                oracles::random_matrix(3, 4, eng)};
    BilinearTensor tensor(3, 4, slabs);
    MeanOperator a0(oracles::random_matrix(3, 4, eng));
    VectorXd b = oracles::random_vector(3, eng);
    Problem prob(a0, tensor, b, CovarianceModel::diagonal(VectorXd::Ones(3)),
                 CovarianceModel::diagonal(VectorXd::Ones(2)),
                 CovarianceModel::diagonal(VectorXd::Ones(4)));
    auto d = convexity_diagnostics(prob, 10);
    REQUIRE(d.mu == Catch::Approx(1.0));
    REQUIRE(d.rho == Catch::Approx(b.norm()));
  }
  SECTION("scaling the priors by 1/10 scales mu by 1/10") {
    auto p1 = oracles::scalar_beta_problem(1.0);
    auto p2 = oracles::scalar_beta_problem(10.0);  // Gamma2 = Gamma3 = 1/10
    auto d1 = convexity_diagnostics(p1, 5);
    auto d2 = convexity_diagnostics(p2, 5);
    REQUIRE(d2.mu == Catch::Approx(d1.mu / 10.0).epsilon(1e-12));
  }
  SECTION("beta = 1 probe finds no negative eigenvalue inside the ball") {
    auto prob = oracles::scalar_beta_problem(1.0);
    auto d = convexity_diagnostics(prob, 200);
    REQUIRE(d.min_hessian_eigenvalue > -1e-10);
  }
  SECTION("beta = 0.1 scan finds indefiniteness") {
    auto prob = oracles::scalar_beta_problem(0.1);
    double min_eig = 0.0;
    for (double y = -3.0; y <= 3.0; y += 0.25) {
      for (double x = -3.0; x <= 3.0; x += 0.25) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(phi_hessian(prob, state(y, x)),
                                                   Eigen::EigenvaluesOnly);
        min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
      }
    }
    REQUIRE(min_eig < 0.0);
  }
}

TEST_CASE("nonconvexity witness at large scaling") {
  std::mt19937_64 eng(71);
  for (int t = 0; t < 10; ++t) {
    auto prob = oracles::random_problem({3, 2, 4}, 400 + t);
    VectorXd y0 = oracles::random_vector(2, eng);
    VectorXd x0 = oracles::random_vector(4, eng);
    if (contract_yx(prob.tensor(), y0, x0).norm() < 1e-3) continue;
    for (double scale : {10.0, 100.0}) {
      Eigen::Matrix2d hf = restricted_hessian(prob, y0, x0, scale, scale);
      if (scale == 100.0) REQUIRE(hf.determinant() < 0.0);
    }
  }
}
