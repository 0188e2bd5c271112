#include "vilo/leg_preintegration.hpp"

#include <stdexcept>

namespace vilo {

ContactNoise contact_noise(int c, const LegNoise& noise) {
  ContactNoise out;
  out.sigma_rho = c * noise.sigma_rho_contact + (1 - c) * noise.sigma_rho_nocontact;
  out.sigma_v = c * noise.sigma_v_contact + (1 - c) * noise.sigma_v_nocontact;
  return out;
}

LegPreintegration::LegPreintegration(const KinParams& lin_rho, const Eigen::Vector3d& lin_bias_w,
                                     const LegNoise& noise, const ImuNoise& imu_noise)
    : lin_rho_(lin_rho), lin_bias_w_(lin_bias_w), noise_(noise), imu_noise_(imu_noise) {}

void LegPreintegration::integrate(const LegSample& leg, const UnitQuaternion& imu_gamma, double dt,
                                  const LegGeometry& geom) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("LegPreintegration::integrate: dt must be positive");
  }
  samples_.emplace_back(leg, dt);
  step(leg, imu_gamma, dt, geom);
}

void LegPreintegration::reintegrate_begin(const KinParams& lin_rho,
                                          const Eigen::Vector3d& lin_bias_w) {
  lin_rho_ = lin_rho;
  lin_bias_w_ = lin_bias_w;
  epsilon_.setZero();
  P_.setZero();
  J_.setIdentity();
  num_samples_ = 0;
  num_contact_ = 0;
}

void LegPreintegration::step(const LegSample& leg, const UnitQuaternion& imu_gamma, double dt,
                             const LegGeometry& geom) {
  const Eigen::Vector3d w = leg.gyro - lin_bias_w_;
  const Eigen::Matrix3d a_gamma = rotmat_from_quat(imu_gamma);

  const Eigen::Vector3d g_foot = forward_kinematics(geom, leg.phi, lin_rho_);
  const Eigen::Matrix3d jac = leg_jacobian(geom, leg.phi, lin_rho_);
  const KinematicPartials partials = kinematic_partials(geom, leg.phi, lin_rho_);
  const Eigen::Vector3d v_hat = -(jac * leg.dphi + w.cross(g_foot));

  // (dphi^T kron I3) * dvecJ/dx  ==  [dJ/dx_c * dphi]_c
  Eigen::Matrix3d dJdphi_dphi;
  for (int c = 0; c < 3; ++c) {
    dJdphi_dphi.col(c) =
        Eigen::Map<const Eigen::Matrix3d>(partials.dvecJ_dphi.col(c).data()) * leg.dphi;
  }
  const Eigen::Vector3d dJdrho_dphi =
      Eigen::Map<const Eigen::Matrix3d>(partials.dvecJ_drho.col(0).data()) * leg.dphi;

  const Eigen::Matrix3d zeta = -a_gamma * skew(g_foot);
  const Eigen::Matrix3d eta = a_gamma * (dJdphi_dphi + skew(w) * jac);
  const Eigen::Vector3d kappa = -a_gamma * (dJdrho_dphi + w.cross(partials.dg_drho));

  // Augmented error order [d_alpha, d_beta, d_theta, d_ba, d_bw, d_eps, d_rho];
  // the IMU sub-blocks carry the gyro-driven entries only.
  Eigen::Matrix<double, 19, 19> f = Eigen::Matrix<double, 19, 19>::Identity();
  f.block<3, 3>(0, 3) = Eigen::Matrix3d::Identity() * dt;
  f.block<3, 3>(6, 6) -= skew(w) * dt;
  f.block<3, 3>(6, 12) = -Eigen::Matrix3d::Identity() * dt;
  f.block<3, 3>(15, 6) = -a_gamma * skew(v_hat) * dt;
  f.block<3, 3>(15, 12) = zeta * dt;
  f.block<3, 1>(15, 18) = kappa * dt;

  // Noise order [n_a, n_w, n_ba, n_bw, n_phi, n_dphi, n_v, n_rho] (22 dims).
  Eigen::Matrix<double, 19, 22> g = Eigen::Matrix<double, 19, 22>::Zero();
  g.block<3, 3>(6, 3) = -Eigen::Matrix3d::Identity() * dt;
  g.block<3, 3>(9, 6) = Eigen::Matrix3d::Identity() * dt;
  g.block<3, 3>(12, 9) = Eigen::Matrix3d::Identity() * dt;
  g.block<3, 3>(15, 3) = zeta * dt;
  g.block<3, 3>(15, 12) = eta * dt;
  g.block<3, 3>(15, 15) = a_gamma * jac * dt;
  g.block<3, 3>(15, 18) = Eigen::Matrix3d::Identity() * dt;
  g(18, 21) = dt;

  // n_a is unused here (accel blocks live in the IMU preintegration). IMU
  // densities and the n_v / n_rho densities are discretized by 1/dt through
  // the dt factors in G; the joint sensing noises are per-sample stds.
  const ContactNoise cn = contact_noise(leg.contact, noise_);
  Eigen::Matrix<double, 22, 1> q;
  q.segment<3>(0).setZero();
  q.segment<3>(3).setConstant(imu_noise_.sigma_w * imu_noise_.sigma_w / dt);
  q.segment<3>(6).setConstant(imu_noise_.sigma_ba * imu_noise_.sigma_ba / dt);
  q.segment<3>(9).setConstant(imu_noise_.sigma_bw * imu_noise_.sigma_bw / dt);
  q.segment<3>(12).setConstant(noise_.sigma_phi * noise_.sigma_phi);
  q.segment<3>(15).setConstant(noise_.sigma_dphi * noise_.sigma_dphi);
  q.segment<3>(18).setConstant(cn.sigma_v * cn.sigma_v / dt);
  q(21) = cn.sigma_rho * cn.sigma_rho / dt;

  P_ = f * P_ * f.transpose() + g * q.asDiagonal() * g.transpose();
  P_ = 0.5 * (P_ + P_.transpose());
  J_ = f * J_;

  epsilon_ += a_gamma * v_hat * dt;
  ++num_samples_;
  num_contact_ += (leg.contact != 0);
}

Eigen::Vector3d LegPreintegration::epsilon_corrected(const Eigen::Vector3d& delta_bw,
                                                     double delta_rho) const {
  return epsilon_ + J_.block<3, 3>(15, 12) * delta_bw + J_.block<3, 1>(15, 18) * delta_rho;
}

Eigen::Vector4d leg_residual(const LegPreintegration& pre, const RobotState& x_k,
                             const RobotState& x_k1, int leg) {
  const Eigen::Vector3d eps = pre.epsilon_corrected(x_k.bias_w - pre.lin_bias_w(),
                                                    x_k.rho(leg) - pre.lin_rho().calf());
  Eigen::Vector4d r;
  r.head<3>() = rotmat_from_quat(x_k.q).transpose() * (x_k1.p - x_k.p) - eps;
  r(3) = x_k1.rho(leg) - x_k.rho(leg);
  return r;
}

}  // namespace vilo
