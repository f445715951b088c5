#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <cmath>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "bilinv/errors.hpp"
#include "bilinv/rng.hpp"

namespace bilinv {

enum class CovKind { diagonal, dense, truncated_kernel };

namespace detail {

// Shared factorization cache: Gamma ~ F F^T with F = P^-1 L sqrt(D+).
// Negative pivots are recorded and clamped to zero (sampling-only use of a
// semidefinite model); positive_definite reports whether clamping occurred.
struct CovFactor {
  bool positive_definite = false;
  Eigen::Index first_clamped_pivot = -1;

  // diagonal: sqrt of variances
  Eigen::VectorXd diag_sqrt;

  // dense: LLT (pd) or pivoted LDLT (clamped)
  bool dense_llt = false;
  Eigen::MatrixXd dense_l;                 // lower factor for LLT path
  Eigen::LDLT<Eigen::MatrixXd> ldlt;       // pivoted path
  Eigen::VectorXd d_clamped_sqrt;          // sqrt(max(D,0)) for LDLT path

  // sparse: simplicial LDLT of the truncated kernel
  std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> sparse;
  Eigen::VectorXd sparse_d_clamped_sqrt;
};

struct FactorCache {
  std::once_flag once;
  std::shared_ptr<const CovFactor> factor;
};

}  // namespace detail

/// Symmetric positive (semi)definite covariance with diagonal, dense, or
/// truncated-kernel (sparse) representation. The lower-triangular factor is
/// computed once on first use and shared read-only afterwards. Truncation can
/// make a kernel matrix semidefinite; such a model factorizes with
/// zero-clamped pivots and is usable for sampling/multiplication only, never
/// silently producing NaN: inverse-form queries throw a diagnosed error.
class CovarianceModel {
 public:
  CovarianceModel() = default;

  static CovarianceModel diagonal(Eigen::VectorXd variances) {
    require(variances.size() > 0, "CovarianceModel: empty diagonal");
    require(variances.allFinite(), "CovarianceModel: non-finite variances");
    require((variances.array() >= 0.0).all(), "CovarianceModel: negative variance");
    CovarianceModel c;
    c.kind_ = CovKind::diagonal;
    c.dim_ = variances.size();
    c.diag_ = std::move(variances);
    c.cache_ = std::make_shared<detail::FactorCache>();
    return c;
  }

  static CovarianceModel dense(Eigen::MatrixXd sym) {
    require(sym.rows() == sym.cols() && sym.rows() > 0, "CovarianceModel: dense matrix must be square");
    require(sym.allFinite(), "CovarianceModel: non-finite entries");
    double scale = std::max(1.0, sym.cwiseAbs().maxCoeff());
    require((sym - sym.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale,
            "CovarianceModel: matrix not symmetric to 1e-12");
    require((sym.diagonal().array() >= 0.0).all(), "CovarianceModel: negative diagonal entry");
    CovarianceModel c;
    c.kind_ = CovKind::dense;
    c.dim_ = sym.rows();
    c.dense_ = 0.5 * (sym + sym.transpose());
    c.cache_ = std::make_shared<detail::FactorCache>();
    return c;
  }

  static CovarianceModel truncated_kernel(Eigen::SparseMatrix<double> sym) {
    require(sym.rows() == sym.cols() && sym.rows() > 0, "CovarianceModel: kernel matrix must be square");
    CovarianceModel c;
    c.kind_ = CovKind::truncated_kernel;
    c.dim_ = sym.rows();
    c.sparse_ = std::move(sym);
    c.sparse_.makeCompressed();
    Eigen::SparseMatrix<double> diff = Eigen::SparseMatrix<double>(c.sparse_.transpose()) - c.sparse_;
    double asym = 0.0;
    for (int k = 0; k < diff.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(diff, k); it; ++it)
        asym = std::max(asym, std::abs(it.value()));
    double scale = std::max(1.0, c.sparse_.coeffs().size() ? c.sparse_.coeffs().abs().maxCoeff() : 0.0);
    require(asym <= 1e-12 * scale, "CovarianceModel: kernel matrix not symmetric to 1e-12");
    c.cache_ = std::make_shared<detail::FactorCache>();
    return c;
  }

  Eigen::Index dim() const { return dim_; }
  CovKind kind() const { return kind_; }

  /// True when the factorization completed with no clamped pivot.
  bool positive_definite() const { return factor().positive_definite; }

  Eigen::VectorXd multiply(const Eigen::VectorXd& v) const {
    require_dim(dim_, v.size(), "CovarianceModel: multiply length");
    switch (kind_) {
      case CovKind::diagonal: return diag_.cwiseProduct(v);
      case CovKind::dense: return dense_ * v;
      case CovKind::truncated_kernel: return sparse_ * v;
    }
    return {};
  }

  /// Gamma * M for a dim x k right factor.
  Eigen::MatrixXd multiply(const Eigen::MatrixXd& m) const {
    require_dim(dim_, m.rows(), "CovarianceModel: multiply rows");
    switch (kind_) {
      case CovKind::diagonal: return diag_.asDiagonal() * m;
      case CovKind::dense: return dense_ * m;
      case CovKind::truncated_kernel: return sparse_ * m;
    }
    return {};
  }

  Eigen::MatrixXd to_dense() const {
    switch (kind_) {
      case CovKind::diagonal: return Eigen::MatrixXd(diag_.asDiagonal());
      case CovKind::dense: return dense_;
      case CovKind::truncated_kernel: return Eigen::MatrixXd(sparse_);
    }
    return {};
  }

  const Eigen::SparseMatrix<double>& sparse_matrix() const {
    require(kind_ == CovKind::truncated_kernel, "CovarianceModel: not a kernel representation");
    return sparse_;
  }
  const Eigen::VectorXd& diagonal_variances() const {
    require(kind_ == CovKind::diagonal, "CovarianceModel: not a diagonal representation");
    return diag_;
  }

  /// Gamma^-1 v through the factor. Requires a positive definite model.
  Eigen::VectorXd solve(const Eigen::VectorXd& v) const {
    require_dim(dim_, v.size(), "CovarianceModel: solve length");
    const auto& f = factor();
    if (!f.positive_definite)
      throw FactorizationError("CovarianceModel: inverse solve on a semidefinite model",
                               f.first_clamped_pivot);
    switch (kind_) {
      case CovKind::diagonal: return v.cwiseQuotient(diag_);
      case CovKind::dense:
        if (f.dense_llt) {
          Eigen::VectorXd w = f.dense_l.triangularView<Eigen::Lower>().solve(v);
          return f.dense_l.transpose().triangularView<Eigen::Upper>().solve(w);
        }
        return f.ldlt.solve(v);
      case CovKind::truncated_kernel: return f.sparse->solve(v);
    }
    return {};
  }

  /// ||v||^2_{Gamma^-1} = ||F^+ v||^2 via triangular solves (no explicit
  /// inverse). On a semidefinite model this is a least-squares solve;
  /// components outside the range beyond 1e-8 relative throw.
  double quad_inv(const Eigen::VectorXd& v) const {
    require_dim(dim_, v.size(), "CovarianceModel: quad_inv length");
    const auto& f = factor();
    switch (kind_) {
      case CovKind::diagonal: {
        if (f.positive_definite) return v.cwiseQuotient(f.diag_sqrt).squaredNorm();
        double q = 0.0;
        for (Eigen::Index i = 0; i < dim_; ++i) {
          if (f.diag_sqrt[i] > 0.0) {
            double t = v[i] / f.diag_sqrt[i];
            q += t * t;
          } else if (std::abs(v[i]) > 1e-8 * (1.0 + v.norm())) {
            throw FactorizationError("CovarianceModel: vector outside the range of a semidefinite model", i);
          }
        }
        return q;
      }
      case CovKind::dense: {
        if (f.dense_llt) return f.dense_l.triangularView<Eigen::Lower>().solve(v).squaredNorm();
        // pivoted path: v = P^T L D^{1/2} z  =>  z = D^{+1/2} L^-1 P v
        Eigen::VectorXd w = f.ldlt.transpositionsP() * v;
        w = f.ldlt.matrixL().solve(w);
        double q = 0.0;
        for (Eigen::Index i = 0; i < dim_; ++i) {
          if (f.d_clamped_sqrt[i] > 0.0) {
            double t = w[i] / f.d_clamped_sqrt[i];
            q += t * t;
          } else if (std::abs(w[i]) > 1e-8 * (1.0 + v.norm())) {
            throw FactorizationError("CovarianceModel: vector outside the range of a semidefinite model", i);
          }
        }
        return q;
      }
      case CovKind::truncated_kernel: {
        Eigen::VectorXd w = f.sparse->permutationP() * v;
        w = f.sparse->matrixL().solve(w);
        double q = 0.0;
        for (Eigen::Index i = 0; i < dim_; ++i) {
          if (f.sparse_d_clamped_sqrt[i] > 0.0) {
            double t = w[i] / f.sparse_d_clamped_sqrt[i];
            q += t * t;
          } else if (std::abs(w[i]) > 1e-8 * (1.0 + v.norm())) {
            throw FactorizationError("CovarianceModel: vector outside the range of a semidefinite model", i);
          }
        }
        return q;
      }
    }
    return 0.0;
  }

  /// F z with Gamma ~ F F^T (exact when positive definite, zero-clamped
  /// pivots otherwise); the sampling primitive.
  Eigen::VectorXd apply_factor(const Eigen::VectorXd& z) const {
    require_dim(dim_, z.size(), "CovarianceModel: apply_factor length");
    const auto& f = factor();
    switch (kind_) {
      case CovKind::diagonal: return f.diag_sqrt.cwiseProduct(z);
      case CovKind::dense: {
        if (f.dense_llt) return f.dense_l.triangularView<Eigen::Lower>() * z;
        Eigen::VectorXd w = f.d_clamped_sqrt.cwiseProduct(z);
        w = f.ldlt.matrixL() * w;
        return f.ldlt.transpositionsP().transpose() * w;
      }
      case CovKind::truncated_kernel: {
        Eigen::VectorXd w = f.sparse_d_clamped_sqrt.cwiseProduct(z);
        w = f.sparse->matrixL() * w;
        return f.sparse->permutationPinv() * w;
      }
    }
    return {};
  }

  /// log det Gamma; positive definite models only.
  double log_det() const {
    const auto& f = factor();
    if (!f.positive_definite)
      throw FactorizationError("CovarianceModel: log_det on a semidefinite model",
                               f.first_clamped_pivot);
    switch (kind_) {
      case CovKind::diagonal: return diag_.array().log().sum();
      case CovKind::dense:
        if (f.dense_llt) return 2.0 * f.dense_l.diagonal().array().log().sum();
        return f.ldlt.vectorD().array().log().sum();
      case CovKind::truncated_kernel: return f.sparse->vectorD().array().log().sum();
    }
    return 0.0;
  }

  double min_eigenvalue() const { return eigen_extreme(false); }
  double max_eigenvalue() const { return eigen_extreme(true); }

 private:
  const detail::CovFactor& factor() const {
    std::call_once(cache_->once, [this] { cache_->factor = compute_factor(); });
    return *cache_->factor;
  }

  std::shared_ptr<const detail::CovFactor> compute_factor() const {
    auto f = std::make_shared<detail::CovFactor>();
    switch (kind_) {
      case CovKind::diagonal: {
        f->positive_definite = (diag_.array() > 0.0).all();
        if (!f->positive_definite)
          for (Eigen::Index i = 0; i < dim_; ++i)
            if (diag_[i] <= 0.0) { f->first_clamped_pivot = i; break; }
        f->diag_sqrt = diag_.cwiseMax(0.0).cwiseSqrt();
        break;
      }
      case CovKind::dense: {
        Eigen::LLT<Eigen::MatrixXd> llt(dense_);
        if (llt.info() == Eigen::Success) {
          f->positive_definite = true;
          f->dense_llt = true;
          f->dense_l = llt.matrixL();
        } else {
          f->ldlt.compute(dense_);
          if (f->ldlt.info() != Eigen::Success)
            throw FactorizationError("CovarianceModel: dense LDLT factorization failed");
          Eigen::VectorXd d = f->ldlt.vectorD();
          for (Eigen::Index i = 0; i < dim_; ++i)
            if (d[i] <= 0.0 && f->first_clamped_pivot < 0) f->first_clamped_pivot = i;
          f->d_clamped_sqrt = d.cwiseMax(0.0).cwiseSqrt();
          f->positive_definite = false;
        }
        break;
      }
      case CovKind::truncated_kernel: {
        f->sparse = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
        f->sparse->compute(sparse_);
        if (f->sparse->info() != Eigen::Success)
          throw FactorizationError("CovarianceModel: sparse LDLT factorization failed (zero structural pivot)");
        Eigen::VectorXd d = f->sparse->vectorD();
        require(d.allFinite(), "CovarianceModel: sparse factorization produced non-finite pivots");
        f->positive_definite = (d.array() > 0.0).all();
        if (!f->positive_definite)
          for (Eigen::Index i = 0; i < dim_; ++i)
            if (d[i] <= 0.0) { f->first_clamped_pivot = i; break; }
        f->sparse_d_clamped_sqrt = d.cwiseMax(0.0).cwiseSqrt();
        break;
      }
    }
    return f;
  }

  double eigen_extreme(bool want_max) const {
    switch (kind_) {
      case CovKind::diagonal: return want_max ? diag_.maxCoeff() : diag_.minCoeff();
      case CovKind::dense: {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_, Eigen::EigenvaluesOnly);
        return want_max ? es.eigenvalues().maxCoeff() : es.eigenvalues().minCoeff();
      }
      case CovKind::truncated_kernel: {
        if (dim_ <= 2048) {
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(sparse_),
                                                            Eigen::EigenvaluesOnly);
          return want_max ? es.eigenvalues().maxCoeff() : es.eigenvalues().minCoeff();
        }
        double lmax = sparse_power_extreme(0.0);
        if (want_max) return lmax;
        return lmax - sparse_power_extreme(lmax);  // largest eigenvalue of lmax*I - Gamma
      }
    }
    return 0.0;
  }

  // Power iteration on (shift*I - Gamma) when shift > 0, else on Gamma.
  double sparse_power_extreme(double shift) const {
    Rng rng(0x51f0c3);
    Eigen::VectorXd v = rng.normal_vector(dim_);
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < 500; ++it) {
      Eigen::VectorXd w = shift > 0.0 ? (shift * v - sparse_ * v).eval() : (sparse_ * v).eval();
      double norm = w.norm();
      if (norm == 0.0) return 0.0;
      w /= norm;
      double next = shift > 0.0 ? w.dot(shift * w - sparse_ * w) : w.dot(sparse_ * w);
      if (std::abs(next - lambda) < 1e-12 * std::max(1.0, std::abs(next))) return next;
      lambda = next;
      v = w;
    }
    return lambda;
  }

  CovKind kind_ = CovKind::diagonal;
  Eigen::Index dim_ = 0;
  Eigen::VectorXd diag_;
  Eigen::MatrixXd dense_;
  Eigen::SparseMatrix<double> sparse_;
  std::shared_ptr<detail::FactorCache> cache_;
};

/// Exponential spatial covariance over voxel midpoints: sigma (1/mm) is the
/// voxel-wise SD, corr_len (mm) the correlation length, and entries below
/// (rel_cut*sigma)^2 are truncated to exact zeros for sparsity.
struct SpatialCovarianceSpec {
  double sigma = 0.003;
  double corr_len = 3.0;
  double rel_cut = 0.01;

  void validate() const {
    require(sigma > 0.0, "SpatialCovarianceSpec: sigma must be positive");
    require(corr_len > 0.0, "SpatialCovarianceSpec: corr_len must be positive");
    require(rel_cut > 0.0 && rel_cut < 1.0, "SpatialCovarianceSpec: rel_cut must lie in (0,1)");
  }
};

inline CovarianceModel build_spatial_covariance(const SpatialCovarianceSpec& spec,
                                                const std::vector<Eigen::Vector3d>& centers) {
  spec.validate();
  require(!centers.empty(), "build_spatial_covariance: no voxel centers");
  for (const auto& c : centers)
    require(c.allFinite(), "build_spatial_covariance: non-finite center");

  const Eigen::Index n = static_cast<Eigen::Index>(centers.size());
  const double s2 = spec.sigma * spec.sigma;
  const double cut = spec.rel_cut * spec.rel_cut;            // relative threshold on the exp term
  const double reach2 = -2.0 * spec.corr_len * spec.corr_len * std::log(cut);

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(n) * 8);
  for (Eigen::Index i = 0; i < n; ++i) {
    trips.emplace_back(i, i, s2);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double d2 = (centers[static_cast<std::size_t>(i)] - centers[static_cast<std::size_t>(j)]).squaredNorm();
      if (d2 >= reach2) continue;
      double k = std::exp(-d2 / (2.0 * spec.corr_len * spec.corr_len));
      if (k <= cut) continue;
      trips.emplace_back(i, j, s2 * k);
      trips.emplace_back(j, i, s2 * k);
    }
  }
  Eigen::SparseMatrix<double> m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  return CovarianceModel::truncated_kernel(std::move(m));
}

/// mean + L z for standard-normal z; deterministic given the stream.
inline Eigen::VectorXd sample_gaussian(const Eigen::VectorXd& mean, const CovarianceModel& cov,
                                       Rng& rng) {
  require_dim(cov.dim(), mean.size(), "sample_gaussian: mean length");
  return mean + cov.apply_factor(rng.normal_vector(cov.dim()));
}

inline Eigen::VectorXd sample_gaussian(const Eigen::VectorXd& mean, const CovarianceModel& cov,
                                       std::uint64_t seed) {
  Rng rng(seed);
  return sample_gaussian(mean, cov, rng);
}

}  // namespace bilinv
