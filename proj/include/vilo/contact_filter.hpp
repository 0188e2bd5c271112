#pragma once

#include <Eigen/Dense>
#include <array>

#include "vilo/types.hpp"

namespace vilo {

struct FilterState {
  Eigen::Vector3d p{Eigen::Vector3d::Zero()};
  Eigen::Vector3d v{Eigen::Vector3d::Zero()};
  UnitQuaternion q{};
  Eigen::Vector3d bias_a{Eigen::Vector3d::Zero()};
  Eigen::Vector3d bias_w{Eigen::Vector3d::Zero()};
  // Error order [d_p, d_v, d_theta, d_ba, d_bw], rotation-vector attitude.
  Eigen::Matrix<double, 15, 15> Sigma{Eigen::Matrix<double, 15, 15>::Identity() * 1e-4};
};

/// Error-state Kalman filter fusing IMU propagation with per-leg LO velocity
/// updates. Doubles as the KF baseline trajectory and as the contact outlier
/// gate feeding the leg preintegration. Deterministic; no internal randomness.
class ContactFilter {
 public:
  ContactFilter(const FilterState& init, const ImuNoise& noise,
                const std::array<LegGeometry, kNumLegs>& geom, const Eigen::Vector4d& rho_nominal,
                const Eigen::Vector3d& gravity_w, double sigma_v_contact, double gate_chi2 = 11.34);

  /// Euler mean propagation with the bias-corrected sample; covariance via
  /// the standard error-state F, G blocks. Throws on dt <= 0.
  void predict(const ImuSample& s, double dt);

  /// Contact decision for one leg: the LO-velocity innovation must pass the
  /// chi-squared gate (3 DOF). A prior stance flag is reverted on gate
  /// failure; reversion of a swing flag to stance requires gate consistency.
  bool detect_contact(const LegSample& leg, int leg_index, int prior_contact) const;

  /// Joseph-form KF update with the leg's LO velocity as a world-frame
  /// velocity measurement. Skipped (returns false) when the innovation fails
  /// the gate.
  bool update_leg(const LegSample& leg, int leg_index);

  const FilterState& state() const { return x_; }
  FilterState& mutable_state() { return x_; }
  double gate_chi2() const { return gate_chi2_; }

  /// Mahalanobis distance of the LO-velocity innovation for one leg.
  double innovation_distance2(const LegSample& leg, int leg_index) const;

 private:
  Eigen::Vector3d lo_velocity(const LegSample& leg, int leg_index) const;

  FilterState x_;
  ImuNoise noise_;
  std::array<LegGeometry, kNumLegs> geom_;
  Eigen::Vector4d rho_nominal_;
  Eigen::Vector3d gravity_w_;
  double sigma_v_;
  double gate_chi2_;
};

}  // namespace vilo
