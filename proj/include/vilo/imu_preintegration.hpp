#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vilo/types.hpp"

namespace vilo {

/// IMU preintegration between two keyframes.
///
/// Accumulates alpha (position), beta (velocity) and gamma (rotation) terms
/// by Euler steps, and propagates the 15x15 error covariance P and error
/// Jacobian J. Error-state order: [d_alpha, d_beta, d_theta, d_bias_a,
/// d_bias_w], attitude errors as rotation vectors. P and J start at 0 and I.
///
/// Bias linearization points are fixed for the life of the object;
/// reintegrate() restarts from the buffered samples with new ones. A single
/// owner mutates; completed preintegrations may be shared read-only.
class ImuPreintegration {
 public:
  ImuPreintegration(const Eigen::Vector3d& lin_bias_a, const Eigen::Vector3d& lin_bias_w,
                    const ImuNoise& noise);

  /// One Euler step with the sample held over [s.t, s.t + dt).
  /// Throws std::invalid_argument on dt <= 0 or non-finite samples.
  void integrate(const ImuSample& s, double dt);

  /// Restart from buffered samples around new bias linearization points.
  void reintegrate(const Eigen::Vector3d& lin_bias_a, const Eigen::Vector3d& lin_bias_w);

  struct Corrected {
    Eigen::Vector3d alpha;
    Eigen::Vector3d beta;
    UnitQuaternion gamma;
  };

  /// First-order update of the preintegration terms for bias deltas relative
  /// to the linearization points. Valid below the reintegration thresholds;
  /// callers check needs_reintegration first.
  Corrected bias_corrected(const Eigen::Vector3d& delta_ba, const Eigen::Vector3d& delta_bw) const;

  bool needs_reintegration(const Eigen::Vector3d& delta_ba, const Eigen::Vector3d& delta_bw) const {
    return delta_bw.norm() > kReintegrateBwThreshold || delta_ba.norm() > kReintegrateBaThreshold;
  }

  const Eigen::Vector3d& alpha() const { return alpha_; }
  const Eigen::Vector3d& beta() const { return beta_; }
  const UnitQuaternion& gamma() const { return gamma_; }
  double dt_total() const { return dt_total_; }
  int num_samples() const { return static_cast<int>(samples_.size()); }
  const Eigen::Vector3d& lin_bias_a() const { return lin_bias_a_; }
  const Eigen::Vector3d& lin_bias_w() const { return lin_bias_w_; }
  const ImuNoise& noise() const { return noise_; }

  /// Covariance/Jacobian in error order [d_alpha, d_beta, d_theta, d_ba, d_bw].
  const Eigen::Matrix<double, 15, 15>& covariance() const { return P_; }
  const Eigen::Matrix<double, 15, 15>& jacobian() const { return J_; }

  /// Covariance permuted into the residual's row order
  /// [position, orientation, velocity, d_ba, d_bw].
  Eigen::Matrix<double, 15, 15> residual_covariance() const;

  const std::vector<std::pair<ImuSample, double>>& buffered_samples() const { return samples_; }

  // Keeps the first-order correction error below solver tolerance.
  static constexpr double kReintegrateBwThreshold = 0.01;  // [rad/s]
  static constexpr double kReintegrateBaThreshold = 0.1;   // [m/s^2]

 private:
  void step(const ImuSample& s, double dt);
  void reset();

  Eigen::Vector3d lin_bias_a_, lin_bias_w_;
  ImuNoise noise_;
  Eigen::Vector3d alpha_{Eigen::Vector3d::Zero()};
  Eigen::Vector3d beta_{Eigen::Vector3d::Zero()};
  UnitQuaternion gamma_{};
  double dt_total_{0.0};
  Eigen::Matrix<double, 15, 15> P_{Eigen::Matrix<double, 15, 15>::Zero()};
  Eigen::Matrix<double, 15, 15> J_{Eigen::Matrix<double, 15, 15>::Identity()};
  std::vector<std::pair<ImuSample, double>> samples_;
};

/// The 15-row IMU cost residual between consecutive keyframes, rows in the
/// order [position, orientation, velocity, bias_a difference, bias_w
/// difference]. Preintegration terms are first-order corrected for the
/// difference between the states' biases at x_k and the linearization biases.
/// gravity_w points up (+9.81 z) with the accelerometer modeled as specific
/// force. Propagates SingularRotationError from the orientation row.
Eigen::Matrix<double, 15, 1> imu_residual(const ImuPreintegration& pre, const RobotState& x_k,
                                          const RobotState& x_k1, const Eigen::Vector3d& gravity_w);

}  // namespace vilo
