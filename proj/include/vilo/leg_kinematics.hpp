#pragma once

#include <Eigen/Dense>

#include "vilo/so3.hpp"

namespace vilo {

/// Fixed geometry of one 3-DOF leg. The calibrated part (calf length) lives
/// in KinParams; calf_length_nominal is the estimator's initial value.
struct LegGeometry {
  Eigen::Vector3d hip_offset{Eigen::Vector3d::Zero()};  // hip joint origin, body frame [m]
  double abduction_offset{0.08};                        // d, lateral offset magnitude [m]
  double thigh_length{0.20};                            // l_t [m]
  double calf_length_nominal{0.21};                     // nominal l_c [m]
  int side_sign{+1};                                    // +1 left legs, -1 right legs
};

struct JointState {
  Eigen::Vector3d phi{Eigen::Vector3d::Zero()};   // abduction, hip pitch, knee pitch [rad]
  Eigen::Vector3d dphi{Eigen::Vector3d::Zero()};  // [rad/s]
};

/// Calibrated kinematic parameters. Dimension 1: rho[0] is the calf length.
/// The vector form leaves room for more parameters; derivatives below are
/// implemented for the calf-length component.
struct KinParams {
  Eigen::VectorXd rho{Eigen::VectorXd::Zero(1)};

  KinParams() = default;
  explicit KinParams(double calf) : rho(Eigen::VectorXd::Constant(1, calf)) {}
  double calf() const { return rho(0); }

  static constexpr double kMin = 0.05;  // physical plausibility clamp [m]
  static constexpr double kMax = 0.5;
  KinParams clamped() const {
    KinParams out = *this;
    out.rho(0) = std::clamp(out.rho(0), kMin, kMax);
    return out;
  }
};

/// Derivatives of the foot position g and of vec(J) (columns stacked
/// vertically) with respect to joint angles and the calf length.
struct KinematicPartials {
  Eigen::Vector3d dg_drho;
  Eigen::Matrix<double, 9, 3> dvecJ_dphi;
  Eigen::Matrix<double, 9, 1> dvecJ_drho;
};

/// Foot position in the body frame, g(phi, rho).
///
/// Transform chain (the single source of truth for every derivative oracle):
///   start at hip_offset;
///   rotate about body x by phi[0] (abduction);
///   translate [0, side_sign * d, 0] in the rotated frame;
///   rotate about y by phi[1] (hip pitch);
///   translate [0, 0, -thigh_length];
///   rotate about y by phi[2] (knee pitch);
///   translate [0, 0, -rho[0]] (calf).
Eigen::Vector3d forward_kinematics(const LegGeometry& geom, const Eigen::Vector3d& phi,
                                   const KinParams& rho);

/// Analytic J(phi, rho) = dg/dphi; maps joint rates to foot velocity in the
/// body frame.
Eigen::Matrix3d leg_jacobian(const LegGeometry& geom, const Eigen::Vector3d& phi,
                             const KinParams& rho);

/// Analytic dg/drho, dvec(J)/dphi and dvec(J)/drho for the chain above.
KinematicPartials kinematic_partials(const LegGeometry& geom, const Eigen::Vector3d& phi,
                                     const KinParams& rho);

/// Leg-odometry body velocity under the no-slip assumption:
///   v = -[J(phi, rho) dphi + skew(omega_corrected) g(phi, rho)],
/// omega_corrected being the gyro measurement minus the bias estimate.
Eigen::Vector3d lo_velocity_body(const LegGeometry& geom, const Eigen::Vector3d& phi,
                                 const Eigen::Vector3d& dphi, const KinParams& rho,
                                 const Eigen::Vector3d& omega_corrected);

/// World-frame LO velocity: A(q) * lo_velocity_body.
Eigen::Vector3d lo_velocity_world(const UnitQuaternion& q, const LegGeometry& geom,
                                  const Eigen::Vector3d& phi, const Eigen::Vector3d& dphi,
                                  const KinParams& rho, const Eigen::Vector3d& omega_corrected);

}  // namespace vilo
