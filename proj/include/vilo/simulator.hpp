#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vilo/dataset.hpp"
#include "vilo/types.hpp"

namespace vilo {

enum class PathKind { kCircle, kRoundedRect, kFigureEight };

struct SlipEvent {
  int leg{0};
  double t_start{0.0};
  double t_end{0.0};
  Eigen::Vector3d velocity{Eigen::Vector3d::Zero()};  // world frame, z ignored
};

struct SimConfig {
  std::uint64_t seed{1};
  double duration{0.0};  // seconds; 0 selects one full loop of the path
  PathKind path{PathKind::kCircle};
  double circle_radius{8.0};
  double rect_half_x{8.0};   // superellipse semi-axes
  double rect_half_y{5.0};
  double eight_half_x{8.0};  // Lissajous amplitudes
  double eight_half_y{4.0};
  double speed{0.5};         // exact on the circle, average on other paths

  double gait_freq{2.5};     // Hz
  double duty{0.5};
  double body_height{0.3};
  double step_height{0.05};
  bool pitch_excitation{false};
  double pitch_amp{0.05};   // rad
  double pitch_freq{0.7};   // Hz

  double imu_rate{500.0};
  double leg_rate{500.0};
  double cam_rate{15.0};

  ImuNoise imu_noise{};              // densities; zero disables
  double joint_noise_phi{1e-3};      // per-sample [rad]
  double joint_noise_dphi{1e-2};     // per-sample [rad/s]
  double pixel_noise{1.5e-3};        // normalized plane, per observation
  Eigen::Vector3d true_bias_a{Eigen::Vector3d::Zero()};
  Eigen::Vector3d true_bias_w{Eigen::Vector3d::Zero()};
  Eigen::Vector4d true_calf{0.23, 0.23, 0.23, 0.23};

  std::vector<SlipEvent> slip_events;

  int landmark_count{160};
  double landmark_band_inner{-5.0};  // radial band around the path, relative [m]
  double landmark_band_outer{7.0};
  double landmark_max_height{3.0};

  std::array<LegGeometry, kNumLegs> legs{};
  CameraModel camera{};

  SimConfig();
};

/// One truth sample at the IMU rate.
struct TruthSample {
  double t;
  Eigen::Vector3d p, v, a_w;
  UnitQuaternion q;
  Eigen::Vector3d omega_body;
  std::array<Eigen::Vector3d, kNumLegs> phi, dphi;
  std::array<int, kNumLegs> contact;
  std::array<int, kNumLegs> slip;
};

struct GroundTruth {
  std::vector<TruthSample> samples;
  std::vector<Eigen::Vector3d> landmarks;
  Eigen::Vector4d true_rho;
  Eigen::Vector3d true_bias_a, true_bias_w;
  double path_length{0.0};   // of the full loop
  double loop_time{0.0};
};

/// Body motion plus joint/contact schedules sampled at the IMU rate.
/// Closed C2 paths; yaw tangent to the path. Throws std::invalid_argument on
/// unreachable speed/path combinations (IK failures name the leg and time).
GroundTruth generate_trajectory(const SimConfig& cfg);

/// Per-leg contact flags of the trot schedule at time t.
std::array<int, kNumLegs> gait_schedule(const SimConfig& cfg, double t);

/// Closed-form 3-DOF inverse kinematics, knee-backward branch.
/// Throws std::domain_error when the target is outside the reachable annulus.
Eigen::Vector3d inverse_kinematics(const LegGeometry& geom, const Eigen::Vector3d& foot_body,
                                   const KinParams& rho);

/// Noisy sensor streams from the truth; all randomness from cfg.seed.
Dataset synthesize_sensors(const GroundTruth& truth, const SimConfig& cfg);

/// Noiseless normalized-plane projections of the landmarks visible from a
/// pose; used by synthesize_sensors and by tests.
std::vector<CamObservation> project_landmarks(const Eigen::Vector3d& p, const UnitQuaternion& q,
                                              const std::vector<Eigen::Vector3d>& landmarks,
                                              const CameraModel& cam);

/// generate_trajectory + synthesize_sensors.
Dataset simulate(const SimConfig& cfg);

}  // namespace vilo
