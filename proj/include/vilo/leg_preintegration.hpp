#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vilo/imu_preintegration.hpp"
#include "vilo/types.hpp"

namespace vilo {

/// Contact-dependent uncertainty selection:
///   sigma_rho = c*sigma_c + (1-c)*sigma_nc
///   sigma_v   = c*sigma_0 + (1-c)*sigma_1
struct ContactNoise {
  double sigma_rho;
  double sigma_v;
};
ContactNoise contact_noise(int c, const LegNoise& noise);

/// Per-leg contact preintegration with the kinematic parameter in the state.
///
/// epsilon accumulates the LO-velocity displacement in the frame of keyframe
/// k. The augmented 19x19 covariance/Jacobian extend the IMU error order with
/// [d_epsilon (15..17), d_rho (18)]. The duplicated IMU blocks are propagated
/// from gyro data only; the leg factor never reads the accel-coupled entries
/// (those live in the companion ImuPreintegration).
///
/// Integration consumes the synchronized gamma of the companion IMU
/// preintegration at each step, so reintegration with a new gyro bias has to
/// replay both in lockstep (see PreintegrationBundle).
class LegPreintegration {
 public:
  /// imu_noise supplies the gyro and bias random-walk densities for the
  /// duplicated IMU error blocks.
  LegPreintegration(const KinParams& lin_rho, const Eigen::Vector3d& lin_bias_w,
                    const LegNoise& noise, const ImuNoise& imu_noise);

  /// One Euler step of epsilon and the augmented error propagation.
  /// imu_gamma is gamma^k_i from the synchronized IMU preintegration, before
  /// its own step for this timestamp. Throws std::invalid_argument on dt <= 0.
  void integrate(const LegSample& leg, const UnitQuaternion& imu_gamma, double dt,
                 const LegGeometry& geom);

  void reintegrate_begin(const KinParams& lin_rho, const Eigen::Vector3d& lin_bias_w);

  /// epsilon corrected to first order for gyro-bias and rho deltas relative
  /// to the linearization points.
  Eigen::Vector3d epsilon_corrected(const Eigen::Vector3d& delta_bw, double delta_rho) const;

  bool needs_reintegration(const Eigen::Vector3d& delta_bw, double delta_rho) const {
    return delta_bw.norm() > ImuPreintegration::kReintegrateBwThreshold ||
           std::abs(delta_rho) > kReintegrateRhoThreshold;
  }

  const Eigen::Vector3d& epsilon() const { return epsilon_; }
  const KinParams& lin_rho() const { return lin_rho_; }
  const Eigen::Vector3d& lin_bias_w() const { return lin_bias_w_; }
  double contact_ratio() const {
    return num_samples_ == 0 ? 0.0 : static_cast<double>(num_contact_) / num_samples_;
  }
  int num_samples() const { return num_samples_; }
  const LegNoise& noise() const { return noise_; }

  const Eigen::Matrix<double, 19, 19>& covariance_aug() const { return P_; }
  const Eigen::Matrix<double, 19, 19>& jacobian_aug() const { return J_; }

  /// 4x4 covariance of the (epsilon, rho-difference) residual rows.
  Eigen::Matrix4d residual_covariance() const { return P_.block<4, 4>(15, 15); }

  const std::vector<std::pair<LegSample, double>>& buffered_samples() const { return samples_; }

  static constexpr double kReintegrateRhoThreshold = 0.005;  // [m]

 private:
  void step(const LegSample& leg, const UnitQuaternion& imu_gamma, double dt,
            const LegGeometry& geom);

  KinParams lin_rho_;
  Eigen::Vector3d lin_bias_w_;
  LegNoise noise_;
  ImuNoise imu_noise_;
  Eigen::Vector3d epsilon_{Eigen::Vector3d::Zero()};
  Eigen::Matrix<double, 19, 19> P_{Eigen::Matrix<double, 19, 19>::Zero()};
  Eigen::Matrix<double, 19, 19> J_{Eigen::Matrix<double, 19, 19>::Identity()};
  int num_samples_{0};
  int num_contact_{0};
  std::vector<std::pair<LegSample, double>> samples_;

  friend struct PreintegrationBundle;
};

/// Leg residual rows: 0..2 the body-frame displacement constraint
/// A(q_k)^T (p_{k+1} - p_k) - epsilon, row 3 the rho random-walk difference
/// rho_{k+1} - rho_k for this leg. epsilon is corrected for the current
/// state-vs-linearization deltas.
Eigen::Vector4d leg_residual(const LegPreintegration& pre, const RobotState& x_k,
                             const RobotState& x_k1, int leg);

}  // namespace vilo
