#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "vilo/dataset.hpp"
#include "vilo/types.hpp"

namespace vilo {

struct TrajectoryPoint {
  double t;
  RobotState x;
};

/// Final-position drift in percent: 100 * |p_end_est - p_end_true| / path
/// length, path length from the ground truth. Throws std::invalid_argument
/// below 1 m of path.
double compute_drift(const std::vector<TrajectoryPoint>& estimated,
                     const std::vector<TruthRecord>& truth);

/// Position RMSE after rigid alignment of the first pose only (drift stays
/// visible). Throws on stamp mismatch.
double compute_ate(const std::vector<TrajectoryPoint>& estimated,
                   const std::vector<TruthRecord>& truth);

/// Ground-truth path length accumulated over the truth stream.
double path_length(const std::vector<TruthRecord>& truth);

struct MetricsReport {
  std::string mode;
  double drift_percent{0.0};
  double ate_rmse_m{0.0};
  Eigen::Vector3d final_error_xyz{Eigen::Vector3d::Zero()};
  Eigen::Vector4d final_rho{Eigen::Vector4d::Zero()};
  double mean_solve_ms{0.0};
  double max_solve_ms{0.0};
  std::string to_json() const;
};

}  // namespace vilo
