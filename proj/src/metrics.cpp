#include "vilo/metrics.hpp"

#include <stdexcept>

#include <json.hpp>

namespace vilo {

namespace {

// Truth state at a keyframe stamp (truth sampled on the same clock).
const TruthRecord& truth_at(const std::vector<TruthRecord>& truth, double t) {
  const auto it = std::lower_bound(truth.begin(), truth.end(), t - 1e-9,
                                   [](const TruthRecord& r, double tt) { return r.t < tt; });
  if (it == truth.end() || std::abs(it->t - t) > 1e-6) {
    throw std::invalid_argument("metrics: no ground-truth record at t=" + std::to_string(t));
  }
  return *it;
}

}  // namespace

double path_length(const std::vector<TruthRecord>& truth) {
  double len = 0.0;
  for (size_t i = 1; i < truth.size(); ++i) {
    len += (truth[i].p - truth[i - 1].p).norm();
  }
  return len;
}

double compute_drift(const std::vector<TrajectoryPoint>& estimated,
                     const std::vector<TruthRecord>& truth) {
  if (estimated.empty() || truth.empty()) {
    throw std::invalid_argument("metrics: empty trajectory");
  }
  const double len = path_length(truth);
  if (len < 1.0) {
    throw std::invalid_argument("metrics: path length below 1 m, drift undefined");
  }
  const TruthRecord& end_truth = truth_at(truth, estimated.back().t);
  return 100.0 * (estimated.back().x.p - end_truth.p).norm() / len;
}

double compute_ate(const std::vector<TrajectoryPoint>& estimated,
                   const std::vector<TruthRecord>& truth) {
  if (estimated.empty()) throw std::invalid_argument("metrics: empty trajectory");
  const TruthRecord& t0 = truth_at(truth, estimated.front().t);
  const RobotState& e0 = estimated.front().x;
  const Eigen::Matrix3d r_align =
      rotmat_from_quat(t0.q) * rotmat_from_quat(e0.q).transpose();
  const Eigen::Vector3d t_align = t0.p - r_align * e0.p;

  double sq = 0.0;
  for (const auto& pt : estimated) {
    const TruthRecord& tr = truth_at(truth, pt.t);
    sq += (r_align * pt.x.p + t_align - tr.p).squaredNorm();
  }
  return std::sqrt(sq / estimated.size());
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["mode"] = mode;
  j["final_drift_percent"] = drift_percent;
  j["ate_rmse_m"] = ate_rmse_m;
  j["final_error_xyz"] = {final_error_xyz.x(), final_error_xyz.y(), final_error_xyz.z()};
  j["final_rho"] = {final_rho(0), final_rho(1), final_rho(2), final_rho(3)};
  j["mean_solve_ms"] = mean_solve_ms;
  j["max_solve_ms"] = max_solve_ms;
  return j.dump(2);
}

}  // namespace vilo
