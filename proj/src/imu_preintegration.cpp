#include "vilo/imu_preintegration.hpp"

#include <stdexcept>

namespace vilo {

ImuPreintegration::ImuPreintegration(const Eigen::Vector3d& lin_bias_a,
                                     const Eigen::Vector3d& lin_bias_w, const ImuNoise& noise)
    : lin_bias_a_(lin_bias_a), lin_bias_w_(lin_bias_w), noise_(noise) {}

void ImuPreintegration::reset() {
  alpha_.setZero();
  beta_.setZero();
  gamma_ = UnitQuaternion::identity();
  dt_total_ = 0.0;
  P_.setZero();
  J_.setIdentity();
}

void ImuPreintegration::integrate(const ImuSample& s, double dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("ImuPreintegration::integrate: dt must be positive");
  }
  if (!s.accel.allFinite() || !s.gyro.allFinite()) {
    throw std::invalid_argument("ImuPreintegration::integrate: non-finite sample");
  }
  samples_.emplace_back(s, dt);
  step(s, dt);
}

void ImuPreintegration::reintegrate(const Eigen::Vector3d& lin_bias_a,
                                    const Eigen::Vector3d& lin_bias_w) {
  lin_bias_a_ = lin_bias_a;
  lin_bias_w_ = lin_bias_w;
  reset();
  for (const auto& [s, dt] : samples_) {
    step(s, dt);
  }
}

void ImuPreintegration::step(const ImuSample& s, double dt) {
  const Eigen::Vector3d w = s.gyro - lin_bias_w_;
  const Eigen::Vector3d a = s.accel - lin_bias_a_;
  const Eigen::Matrix3d a_gamma = rotmat_from_quat(gamma_);

  // F, G blocks; error order [d_alpha, d_beta, d_theta, d_ba, d_bw].
  Eigen::Matrix<double, 15, 15> f = Eigen::Matrix<double, 15, 15>::Identity();
  f.block<3, 3>(0, 3) = Eigen::Matrix3d::Identity() * dt;
  f.block<3, 3>(3, 6) = -a_gamma * skew(a) * dt;
  f.block<3, 3>(3, 9) = -a_gamma * dt;
  f.block<3, 3>(6, 6) -= skew(w) * dt;
  f.block<3, 3>(6, 12) = -Eigen::Matrix3d::Identity() * dt;

  Eigen::Matrix<double, 15, 12> g = Eigen::Matrix<double, 15, 12>::Zero();
  g.block<3, 3>(3, 0) = -a_gamma * dt;
  g.block<3, 3>(6, 3) = -Eigen::Matrix3d::Identity() * dt;
  g.block<3, 3>(9, 6) = Eigen::Matrix3d::Identity() * dt;
  g.block<3, 3>(12, 9) = Eigen::Matrix3d::Identity() * dt;

  // Continuous densities to per-step discrete covariance: diag(sigma^2)/dt
  // through the dt factors already in G, giving sigma^2*dt contributions.
  Eigen::Matrix<double, 12, 1> q;
  q << Eigen::Vector3d::Constant(noise_.sigma_a * noise_.sigma_a),
      Eigen::Vector3d::Constant(noise_.sigma_w * noise_.sigma_w),
      Eigen::Vector3d::Constant(noise_.sigma_ba * noise_.sigma_ba),
      Eigen::Vector3d::Constant(noise_.sigma_bw * noise_.sigma_bw);
  q /= dt;

  P_ = f * P_ * f.transpose() + g * q.asDiagonal() * g.transpose();
  P_ = 0.5 * (P_ + P_.transpose());
  J_ = f * J_;

  alpha_ += beta_ * dt;
  beta_ += a_gamma * a * dt;
  gamma_ = gamma_ * cayley(0.5 * w * dt);
  dt_total_ += dt;
}

ImuPreintegration::Corrected ImuPreintegration::bias_corrected(
    const Eigen::Vector3d& delta_ba, const Eigen::Vector3d& delta_bw) const {
  Corrected c;
  c.alpha = alpha_ + J_.block<3, 3>(0, 9) * delta_ba + J_.block<3, 3>(0, 12) * delta_bw;
  c.beta = beta_ + J_.block<3, 3>(3, 9) * delta_ba + J_.block<3, 3>(3, 12) * delta_bw;
  // J's theta block is in rotation-vector units; the half maps it onto
  // Rodrigues parameters for the quaternion increment.
  c.gamma = gamma_ * cayley(0.5 * (J_.block<3, 3>(6, 12) * delta_bw));
  return c;
}

Eigen::Matrix<double, 15, 15> ImuPreintegration::residual_covariance() const {
  // Residual rows (p, theta, v) pair with covariance blocks (alpha, theta, beta).
  constexpr int kMap[15] = {0, 1, 2, 6, 7, 8, 3, 4, 5, 9, 10, 11, 12, 13, 14};
  Eigen::Matrix<double, 15, 15> out;
  for (int r = 0; r < 15; ++r) {
    for (int c = 0; c < 15; ++c) {
      out(r, c) = P_(kMap[r], kMap[c]);
    }
  }
  return out;
}

Eigen::Matrix<double, 15, 1> imu_residual(const ImuPreintegration& pre, const RobotState& x_k,
                                          const RobotState& x_k1,
                                          const Eigen::Vector3d& gravity_w) {
  const double dt = pre.dt_total();
  const Eigen::Matrix3d a_k_t = rotmat_from_quat(x_k.q).transpose();
  const auto corr =
      pre.bias_corrected(x_k.bias_a - pre.lin_bias_a(), x_k.bias_w - pre.lin_bias_w());

  Eigen::Matrix<double, 15, 1> r;
  r.segment<3>(0) =
      a_k_t * (x_k1.p - x_k.p + 0.5 * gravity_w * dt * dt - x_k.v * dt) - corr.alpha;
  r.segment<3>(3) = inv_cayley(x_k.q.inverse() * x_k1.q * corr.gamma.inverse());
  r.segment<3>(6) = a_k_t * (x_k1.v + gravity_w * dt - x_k.v) - corr.beta;
  r.segment<3>(9) = x_k1.bias_a - x_k.bias_a;
  r.segment<3>(12) = x_k1.bias_w - x_k.bias_w;
  return r;
}

}  // namespace vilo
