#pragma once

#include <Eigen/Dense>
#include <array>

#include "vilo/leg_kinematics.hpp"
#include "vilo/so3.hpp"

namespace vilo {

inline constexpr int kNumLegs = 4;

/// Leg indexing used everywhere: front-left, front-right, rear-left, rear-right.
enum LegIndex : int { kFL = 0, kFR = 1, kRL = 2, kRR = 3 };
inline constexpr const char* kLegNames[kNumLegs] = {"fl", "fr", "rl", "rr"};

struct ImuSample {
  double t{0.0};
  Eigen::Vector3d accel{Eigen::Vector3d::Zero()};  // specific force, body frame [m/s^2]
  Eigen::Vector3d gyro{Eigen::Vector3d::Zero()};   // body frame [rad/s]
};

/// One leg's sample, timestamp-aligned with the IMU stream.
struct LegSample {
  double t{0.0};
  Eigen::Vector3d phi{Eigen::Vector3d::Zero()};
  Eigen::Vector3d dphi{Eigen::Vector3d::Zero()};
  int contact{0};                                 // binary flag c in {0,1}
  Eigen::Vector3d gyro{Eigen::Vector3d::Zero()};  // shared with the IMU sample at t
};

/// Continuous-time IMU noise densities; discretized inside the preintegration.
struct ImuNoise {
  double sigma_a{2e-2};    // accel noise density [m/s^2/sqrt(Hz)]
  double sigma_w{2e-3};    // gyro noise density [rad/s/sqrt(Hz)]
  double sigma_ba{2e-4};   // accel bias random walk [m/s^3/sqrt(Hz)]
  double sigma_bw{2e-5};   // gyro bias random walk [rad/s^2/sqrt(Hz)]
};

/// Leg sensing and constraint noise. Contact switches between the low
/// (contact) and high (no-contact) uncertainty pairs.
struct LegNoise {
  double sigma_phi{1e-3};           // joint angle noise [rad]
  double sigma_dphi{1e-2};          // joint velocity noise [rad/s]
  double sigma_v_contact{1e-2};     // sigma_0, LO velocity constraint in stance
  double sigma_v_nocontact{1e2};    // sigma_1, LO velocity constraint in swing
  double sigma_rho_contact{1e-4};   // sigma_c, rho random walk in stance [m/sqrt(s)]
  double sigma_rho_nocontact{1e-1}; // sigma_nc, rho random walk in swing
};

/// Pinhole camera on the normalized image plane, with fixed body-to-camera
/// extrinsics (r_bc maps camera-frame vectors into the body frame).
struct CameraModel {
  Eigen::Matrix3d r_bc{(Eigen::Matrix3d() << 0, 0, 1, -1, 0, 0, 0, -1, 0).finished()};
  Eigen::Vector3d p_bc{0.1, 0.0, 0.0};
  double obs_noise_std{1.5e-3};  // normalized-plane units (about 0.7 px at f=460)
  double max_tan{1.2};           // FOV half-angle tangent
  double min_depth{0.3};
  double max_depth{25.0};
};

/// Per-keyframe estimate.
struct RobotState {
  Eigen::Vector3d p{Eigen::Vector3d::Zero()};
  UnitQuaternion q{};
  Eigen::Vector3d v{Eigen::Vector3d::Zero()};
  Eigen::Vector3d bias_a{Eigen::Vector3d::Zero()};
  Eigen::Vector3d bias_w{Eigen::Vector3d::Zero()};
  Eigen::Vector4d rho{Eigen::Vector4d::Zero()};  // calf length per leg [m]

  KinParams kin_params(int leg) const { return KinParams(rho(leg)); }
};

}  // namespace vilo
