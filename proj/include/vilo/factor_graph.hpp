#pragma once

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "vilo/imu_preintegration.hpp"
#include "vilo/leg_preintegration.hpp"
#include "vilo/types.hpp"

namespace vilo {

enum class EstimatorMode { kKF, kVIO, kViloFixed, kViloCalib };
const char* mode_name(EstimatorMode mode);
std::optional<EstimatorMode> mode_from_name(const std::string& name);

/// Local error-state layout per keyframe:
/// [d_p 0..2, d_theta 3..5, d_v 6..8, d_ba 9..11, d_bw 12..14, d_rho 15..18].
inline constexpr int kStateDim = 19;

/// x (+) delta: additive except the orientation, which updates
/// multiplicatively via the Cayley map. rho is clamped to plausibility.
RobotState apply_delta(const RobotState& x, const Eigen::Matrix<double, kStateDim, 1>& delta);

/// x (-) lin in the same chart (inverse Cayley for orientation).
Eigen::Matrix<double, kStateDim, 1> state_minus(const RobotState& x, const RobotState& lin);

/// World landmark, parameterized directly as a 3D point.
struct Landmark {
  int id{0};
  Eigen::Vector3d position{Eigen::Vector3d::Zero()};
  bool active{false};  // triangulated from >= 2 keyframes and in the problem
};

/// The IMU and four leg preintegrations spanning one keyframe interval.
/// integrate_tick feeds the legs with the IMU's gamma before advancing it,
/// and reintegrate replays both in lockstep around new linearization points.
struct PreintegrationBundle {
  ImuPreintegration imu;
  std::vector<LegPreintegration> legs;  // kNumLegs entries

  PreintegrationBundle(const Eigen::Vector3d& ba, const Eigen::Vector3d& bw,
                       const Eigen::Vector4d& rho, const ImuNoise& imu_noise,
                       const LegNoise& leg_noise);

  void integrate_tick(const ImuSample& s, const std::array<LegSample, kNumLegs>& leg_samples,
                      double dt, const std::array<LegGeometry, kNumLegs>& geoms);

  void reintegrate(const Eigen::Vector3d& ba, const Eigen::Vector3d& bw,
                   const Eigen::Vector4d& rho, const std::array<LegGeometry, kNumLegs>& geoms);
};

struct Keyframe {
  double t{0.0};
  RobotState x{};
  std::unique_ptr<PreintegrationBundle> pre;  // covers (previous kf, this kf]; null on the first
  std::map<int, Eigen::Vector2d> obs;         // landmark id -> normalized observation
};

/// Gaussian prior over one state's error coordinates:
/// residual = sqrt_info * (x (-) lin) - rhs.
struct PriorFactor {
  int state_index{0};
  RobotState lin{};
  Eigen::MatrixXd sqrt_info;
  Eigen::VectorXd rhs;
};

// ---- factor evaluations (unwhitened residuals + analytic Jacobians) ----

struct ImuFactorEval {
  Eigen::Matrix<double, 15, 1> r;
  Eigen::Matrix<double, 15, kStateDim> J_k, J_k1;
};
ImuFactorEval eval_imu_factor(const ImuPreintegration& pre, const RobotState& x_k,
                              const RobotState& x_k1, const Eigen::Vector3d& gravity_w);

struct LegFactorEval {
  Eigen::Vector4d r;
  Eigen::Matrix<double, 4, kStateDim> J_k, J_k1;
};
LegFactorEval eval_leg_factor(const LegPreintegration& pre, const RobotState& x_k,
                              const RobotState& x_k1, int leg);

struct VisionFactorEval {
  bool valid{false};  // false when the landmark is behind the camera
  Eigen::Vector2d r{Eigen::Vector2d::Zero()};
  Eigen::Matrix<double, 2, kStateDim> J_x{Eigen::Matrix<double, 2, kStateDim>::Zero()};
  Eigen::Matrix<double, 2, 3> J_lm{Eigen::Matrix<double, 2, 3>::Zero()};
};
/// Normalized-plane reprojection error of a landmark through the keyframe
/// pose composed with the camera extrinsics. Invalid below 0.05 m depth.
VisionFactorEval eval_vision_factor(const RobotState& x, const Eigen::Vector3d& landmark,
                                    const Eigen::Vector2d& obs, const CameraModel& cam);

struct PriorFactorEval {
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
};
PriorFactorEval eval_prior_factor(const PriorFactor& prior, const RobotState& x);

struct SolverOptions {
  int max_iterations{10};
  double rel_cost_tol{1e-8};
  double lambda_init{1e-8};
  double lambda_max{1e8};
  double huber_vision{1.0};  // on whitened vision residual norms
};

struct SolveStats {
  int iterations{0};
  double initial_cost{0.0};
  double final_cost{0.0};
  double cond_proxy{0.0};  // max|d|/min|d| of the damped normal equations' LDLT
  bool converged{false};
  std::vector<double> accepted_costs;  // cost after each accepted step
};

struct WindowConfig {
  EstimatorMode mode{EstimatorMode::kViloCalib};
  int max_states{11};  // N + 1 keyframes
  Eigen::Vector3d gravity_w{0.0, 0.0, 9.81};
  std::array<LegGeometry, kNumLegs> geoms{};
  CameraModel camera{};
  ImuNoise imu_noise{};
  LegNoise leg_noise{};
  SolverOptions solver{};
  // Initial prior stds over [p, theta, v, ba, bw, rho].
  double prior_sigma_p{1e-3};
  double prior_sigma_theta{1e-3};
  double prior_sigma_v{1e-2};
  double prior_sigma_ba{0.1};
  double prior_sigma_bw{0.01};
  double prior_sigma_rho{0.05};
  double min_parallax{0.03};  // m of baseline before triangulation is trusted
};

/// Sliding-window maximum-likelihood estimator: damped Gauss-Newton over the
/// stacked whitened IMU, leg, vision and prior residuals, with landmark Schur
/// elimination, first-order preintegration corrections (re-integration past
/// the bias/rho thresholds) and Schur-complement marginalization of the
/// oldest keyframe. Deterministic: fixed assembly order, no randomness.
class SlidingWindow {
 public:
  explicit SlidingWindow(const WindowConfig& cfg);

  /// Installs the first keyframe with the configured initial prior.
  void initialize(double t, const RobotState& x0);

  /// New keyframe at t: state initialized by IMU mean propagation, landmarks
  /// triangulated when newly observed twice. Marginalizes first when at
  /// capacity. Throws std::invalid_argument on time-ordering violations.
  void add_keyframe(double t, std::unique_ptr<PreintegrationBundle> pre,
                    const std::vector<std::pair<int, Eigen::Vector2d>>& observations);

  /// Levenberg-Marquardt on the window; terminates on relative cost decrease
  /// < rel_cost_tol or max_iterations. Throws std::runtime_error on
  /// non-finite cost.
  SolveStats solve();

  /// Schur complement of the oldest keyframe (and landmarks last seen there)
  /// into the dense prior. No-op below capacity.
  void marginalize_oldest();

  bool initialized() const { return !kfs_.empty(); }
  int num_keyframes() const { return static_cast<int>(kfs_.size()); }
  const Keyframe& keyframe(int i) const { return kfs_[i]; }
  const Keyframe& newest() const { return kfs_.back(); }
  const std::map<int, Landmark>& landmarks() const { return landmarks_; }
  const PriorFactor& prior() const { return prior_; }
  const WindowConfig& config() const { return cfg_; }

  /// Test hook: replace a state (the brute-force oracle perturbs windows).
  RobotState& mutable_state(int i) { return kfs_[i].x; }

 private:
  struct Assembly;
  double evaluate(const std::vector<RobotState>& states,
                  const std::map<int, Eigen::Vector3d>& lm_pos, Assembly* out) const;
  void triangulate_pending();
  bool rho_frozen() const { return cfg_.mode != EstimatorMode::kViloCalib; }
  bool legs_enabled() const {
    return cfg_.mode == EstimatorMode::kViloFixed || cfg_.mode == EstimatorMode::kViloCalib;
  }

  WindowConfig cfg_;
  std::deque<Keyframe> kfs_;
  std::map<int, Landmark> landmarks_;
  PriorFactor prior_;
};

}  // namespace vilo
