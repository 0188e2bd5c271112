#include "vilo/contact_filter.hpp"

#include <stdexcept>

namespace vilo {

ContactFilter::ContactFilter(const FilterState& init, const ImuNoise& noise,
                             const std::array<LegGeometry, kNumLegs>& geom,
                             const Eigen::Vector4d& rho_nominal, const Eigen::Vector3d& gravity_w,
                             double sigma_v_contact, double gate_chi2)
    : x_(init),
      noise_(noise),
      geom_(geom),
      rho_nominal_(rho_nominal),
      gravity_w_(gravity_w),
      sigma_v_(sigma_v_contact),
      gate_chi2_(gate_chi2) {}

void ContactFilter::predict(const ImuSample& s, double dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("ContactFilter::predict: dt must be positive");
  }
  const Eigen::Vector3d a = s.accel - x_.bias_a;
  const Eigen::Vector3d w = s.gyro - x_.bias_w;
  const Eigen::Matrix3d rot = rotmat_from_quat(x_.q);

  Eigen::Matrix<double, 15, 15> f = Eigen::Matrix<double, 15, 15>::Identity();
  f.block<3, 3>(0, 3) = Eigen::Matrix3d::Identity() * dt;
  f.block<3, 3>(3, 6) = -rot * skew(a) * dt;
  f.block<3, 3>(3, 9) = -rot * dt;
  f.block<3, 3>(6, 6) -= skew(w) * dt;
  f.block<3, 3>(6, 12) = -Eigen::Matrix3d::Identity() * dt;

  Eigen::Matrix<double, 15, 12> g = Eigen::Matrix<double, 15, 12>::Zero();
  g.block<3, 3>(3, 0) = -rot * dt;
  g.block<3, 3>(6, 3) = -Eigen::Matrix3d::Identity() * dt;
  g.block<3, 3>(9, 6) = Eigen::Matrix3d::Identity() * dt;
  g.block<3, 3>(12, 9) = Eigen::Matrix3d::Identity() * dt;

  Eigen::Matrix<double, 12, 1> q;
  q << Eigen::Vector3d::Constant(noise_.sigma_a * noise_.sigma_a),
      Eigen::Vector3d::Constant(noise_.sigma_w * noise_.sigma_w),
      Eigen::Vector3d::Constant(noise_.sigma_ba * noise_.sigma_ba),
      Eigen::Vector3d::Constant(noise_.sigma_bw * noise_.sigma_bw);
  q /= dt;

  x_.Sigma = f * x_.Sigma * f.transpose() + g * q.asDiagonal() * g.transpose();
  x_.Sigma = 0.5 * (x_.Sigma + x_.Sigma.transpose());

  x_.p += x_.v * dt;
  x_.v += (rot * a - gravity_w_) * dt;
  x_.q = x_.q * cayley(0.5 * w * dt);
}

Eigen::Vector3d ContactFilter::lo_velocity(const LegSample& leg, int leg_index) const {
  return lo_velocity_world(x_.q, geom_[leg_index], leg.phi, leg.dphi,
                           KinParams(rho_nominal_(leg_index)), leg.gyro - x_.bias_w);
}

double ContactFilter::innovation_distance2(const LegSample& leg, int leg_index) const {
  const Eigen::Vector3d nu = lo_velocity(leg, leg_index) - x_.v;
  const Eigen::Matrix3d s =
      x_.Sigma.block<3, 3>(3, 3) + sigma_v_ * sigma_v_ * Eigen::Matrix3d::Identity();
  return nu.dot(s.ldlt().solve(nu));
}

bool ContactFilter::detect_contact(const LegSample& leg, int leg_index,
                                   int /*prior_contact*/) const {
  // A prior stance flag is reverted when the innovation fails the gate, and a
  // swing flag is only reverted to stance when the innovation passes it; both
  // directions reduce to gate consistency.
  return innovation_distance2(leg, leg_index) <= gate_chi2_;
}

bool ContactFilter::update_leg(const LegSample& leg, int leg_index) {
  const Eigen::Vector3d z = lo_velocity(leg, leg_index);
  const Eigen::Vector3d nu = z - x_.v;
  const Eigen::Matrix3d r = sigma_v_ * sigma_v_ * Eigen::Matrix3d::Identity();
  const Eigen::Matrix3d s = x_.Sigma.block<3, 3>(3, 3) + r;
  if (nu.dot(s.ldlt().solve(nu)) > gate_chi2_) {
    return false;
  }

  Eigen::Matrix<double, 3, 15> h = Eigen::Matrix<double, 3, 15>::Zero();
  h.block<3, 3>(0, 3).setIdentity();
  const Eigen::Matrix<double, 15, 3> k = x_.Sigma * h.transpose() * s.inverse();
  const Eigen::Matrix<double, 15, 1> dx = k * nu;

  x_.p += dx.segment<3>(0);
  x_.v += dx.segment<3>(3);
  x_.q = x_.q * cayley(0.5 * dx.segment<3>(6));
  x_.bias_a += dx.segment<3>(9);
  x_.bias_w += dx.segment<3>(12);

  const Eigen::Matrix<double, 15, 15> ikh = Eigen::Matrix<double, 15, 15>::Identity() - k * h;
  x_.Sigma = ikh * x_.Sigma * ikh.transpose() + k * r * k.transpose();
  x_.Sigma = 0.5 * (x_.Sigma + x_.Sigma.transpose());
  return true;
}

}  // namespace vilo
