#pragma once

#include <array>
#include <string>
#include <vector>

#include "vilo/types.hpp"

namespace vilo {

inline constexpr const char* kDatasetSchema = "vilo-dataset/1";

/// Thrown on any dataset schema or invariant violation; the message names the
/// offending stream and line.
class DatasetError : public std::runtime_error {
 public:
  explicit DatasetError(const std::string& what) : std::runtime_error(what) {}
};

struct DatasetHeader {
  std::string schema{kDatasetSchema};
  double imu_rate{500.0};
  double leg_rate{500.0};
  double cam_rate{15.0};
  Eigen::Vector3d gravity_w{0.0, 0.0, 9.81};
  std::array<LegGeometry, kNumLegs> legs{};
  CameraModel camera{};
  // Initial true state, the estimator's starting point (benchmark convention).
  Eigen::Vector3d init_p{Eigen::Vector3d::Zero()};
  UnitQuaternion init_q{};
  Eigen::Vector3d init_v{Eigen::Vector3d::Zero()};
};

struct ImuRecord {
  double t;
  Eigen::Vector3d accel;
  Eigen::Vector3d gyro;
};

/// All four legs for one 500 Hz tick; order FL, FR, RL, RR.
struct LegRecord {
  double t;
  std::array<Eigen::Vector3d, kNumLegs> phi;
  std::array<Eigen::Vector3d, kNumLegs> dphi;
  std::array<int, kNumLegs> contact;
};

struct CamObservation {
  int id;
  Eigen::Vector2d uv;  // normalized image plane
};

struct CamRecord {
  double t;
  std::vector<CamObservation> obs;
};

struct TruthRecord {
  double t;
  Eigen::Vector3d p;
  UnitQuaternion q;
  Eigen::Vector3d v;
  Eigen::Vector4d rho;                     // true calf length per leg
  std::array<int, kNumLegs> contact;       // true contact schedule
  std::array<int, kNumLegs> slip;          // 1 while the foot moves under a stance flag
};

struct Dataset {
  DatasetHeader header;
  std::vector<ImuRecord> imu;
  std::vector<LegRecord> leg;
  std::vector<CamRecord> cam;
  std::vector<TruthRecord> truth;

  /// Strict invariant checks: monotone per-stream timestamps, header rates
  /// matching observed intervals within 1%, required streams present.
  /// Throws DatasetError naming the stream and line.
  void validate() const;
};

/// Line-delimited JSON: one header object, then one record object per line.
/// save is atomic (temp file + rename) and deterministic.
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace vilo
