#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>

namespace bilinv {

/// Seeded random stream with the draw primitives the samplers need.
/// A fixed seed reproduces the exact same sequence within a platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }  // in [0, 1)

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = normal();
    return z;
  }

  /// Uniform point in the origin-centered dim-ball of the given radius.
  Eigen::VectorXd ball_point(Eigen::Index dim, double radius) {
    Eigen::VectorXd z = normal_vector(dim);
    double r = z.norm();
    if (r == 0.0) return Eigen::VectorXd::Zero(dim);
    double u = std::pow(uniform(), 1.0 / static_cast<double>(dim));
    return z * (radius * u / r);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// splitmix64 step; used to derive independent per-run seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace bilinv
