#pragma once

#include <cmath>

#include "bilinv/covariance.hpp"
#include "bilinv/errors.hpp"

namespace bilinv {

/// Frequency-domain measurement noise parameters. Intensities are detected
/// weights per input packet (dimensionless), amplitudes share that scale, and
/// phase quantities are in degrees. diff_factor converts a single-measurement
/// SD to the SD of averaged difference data: sqrt(2)/sqrt(30) for 30
/// independent repetitions of a two-measurement difference.
struct NoiseSpec {
  double intensity_threshold = 1.2e-5;
  double amp_coeff_low = 6.5e-7;
  double amp_coeff_high = 1.9e-4;
  double phase_coeff_low = 1.3e-4;   // degrees * sqrt(weight)
  double phase_floor = 0.038;        // degrees
  double diff_factor = 0.25819888974716115;  // sqrt(2/30)

  void validate() const {
    require(intensity_threshold > 0.0 && amp_coeff_low > 0.0 && amp_coeff_high > 0.0 &&
                phase_coeff_low > 0.0 && phase_floor > 0.0 && diff_factor > 0.0,
            "NoiseSpec: all parameters must be positive");
  }
};

/// SD of absolute-amplitude noise. Low-weight channels follow the sqrt(I)
/// branch (threshold inclusive), bright channels scale with the amplitude.
inline double noise_std_amplitude(double total_weight, double amplitude, const NoiseSpec& spec) {
  spec.validate();
  require(total_weight >= 0.0, "noise_std_amplitude: negative total weight");
  require(amplitude > 0.0, "noise_std_amplitude: amplitude must be positive");
  if (total_weight <= spec.intensity_threshold) return spec.amp_coeff_low * std::sqrt(total_weight);
  return spec.amp_coeff_high * amplitude;
}

/// SD of absolute-phase noise in degrees. Unbounded as the detected weight
/// vanishes, so zero weight is rejected.
inline double noise_std_phase(double total_weight, const NoiseSpec& spec) {
  spec.validate();
  require(total_weight > 0.0, "noise_std_phase: total weight must be positive (infinite noise at 0)");
  if (total_weight <= spec.intensity_threshold) return spec.phase_coeff_low / std::sqrt(total_weight);
  return spec.phase_floor;
}

/// SD of averaged difference data from a single-measurement SD.
inline double difference_noise_std(double sigma_single, const NoiseSpec& spec) {
  spec.validate();
  require(sigma_single >= 0.0, "difference_noise_std: negative SD");
  return spec.diff_factor * sigma_single;
}

/// Diagonal noise covariance from per-channel SDs, preserving the caller's
/// row ordering (all log-amplitude rows first, then all phase rows).
inline CovarianceModel build_noise_covariance(const Eigen::VectorXd& per_channel_sds) {
  require(per_channel_sds.size() > 0, "build_noise_covariance: empty SD vector");
  require((per_channel_sds.array() > 0.0).all(), "build_noise_covariance: SDs must be positive");
  return CovarianceModel::diagonal(per_channel_sds.array().square());
}

}  // namespace bilinv
