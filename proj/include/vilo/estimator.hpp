#pragma once

#include <string>
#include <vector>

#include "vilo/config.hpp"
#include "vilo/contact_filter.hpp"
#include "vilo/dataset.hpp"
#include "vilo/factor_graph.hpp"
#include "vilo/metrics.hpp"

namespace vilo {

struct RunOptions {
  EstimatorMode mode{EstimatorMode::kViloCalib};
  bool slip_rejection{true};
  int window_size{10};  // N keyframe intervals; N+1 states
  ImuNoise imu_noise{};
  LegNoise leg_noise{};
  SolverOptions solver{};
  double contact_gate{11.34};
  double filter_sigma_v{1e-2};

  double prior_sigma_p{1e-3};
  double prior_sigma_theta{1e-3};
  double prior_sigma_v{1e-2};
  double prior_sigma_ba{0.1};
  double prior_sigma_bw{0.01};
  double prior_sigma_rho{0.05};

  /// estimator.* keys override the defaults above (mode comes from the CLI).
  static RunOptions from_config(const Config& cfg);
};

struct RunDiagnostics {
  double mean_solve_ms{0.0};
  double max_solve_ms{0.0};
  double max_cond_proxy{0.0};
  long num_solves{0};
};

struct RunResult {
  std::vector<TrajectoryPoint> trajectory;  // one point per keyframe
  RunDiagnostics diagnostics;
};

/// Full pipeline: the contact filter consumes the 500 Hz streams (contact
/// gating, and the KF trajectory in KF mode); preintegrations accumulate
/// between camera keyframes; the sliding window is solved at each keyframe.
/// Throws DatasetError / std::runtime_error on schema violations (e.g.
/// vision modes on a dataset with no vision stream).
RunResult run_estimator(const Dataset& dataset, const RunOptions& opts);

}  // namespace vilo
