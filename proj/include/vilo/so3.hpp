#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace vilo {

/// Rodrigues parameters (tan-half-angle vector). Defined on all of R^3.
using Rodrigues3 = Eigen::Vector3d;

/// Unit quaternion, scalar-first storage [q_w; q_x; q_y; q_z].
/// The vector part is q_v = [q_x; q_y; q_z]. rotmat_from_quat(q) maps
/// body-frame vectors into the parent frame when q is a body-to-parent
/// rotation.
struct UnitQuaternion {
  double w{1.0};
  Eigen::Vector3d v{Eigen::Vector3d::Zero()};

  UnitQuaternion() = default;
  UnitQuaternion(double w_, const Eigen::Vector3d& v_) : w(w_), v(v_) {}
  UnitQuaternion(double w_, double x, double y, double z) : w(w_), v(x, y, z) {}

  static UnitQuaternion identity() { return {1.0, Eigen::Vector3d::Zero()}; }

  /// q^-1 = [q_w; -q_v] for unit quaternions.
  UnitQuaternion inverse() const { return {w, -v}; }

  double norm() const { return std::sqrt(w * w + v.squaredNorm()); }

  UnitQuaternion normalized() const {
    const double n = norm();
    return {w / n, v / n};
  }

  Eigen::Vector4d coeffs() const { return {w, v.x(), v.y(), v.z()}; }

  bool is_finite() const { return std::isfinite(w) && v.allFinite(); }
};

/// Thrown by inv_cayley at q_w = 0 (a 180 degree error); a converging
/// estimator never produces one, so this signals divergence.
class SingularRotationError : public std::domain_error {
 public:
  SingularRotationError() : std::domain_error("inv_cayley: q_w is zero (180 degree rotation)") {}
};

/// Cross-product matrix: skew(v) * x == v x x.
inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
      v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

/// Left product matrix: q1 (x) q2 == quat_left(q1) * q2.coeffs().
Eigen::Matrix4d quat_left(const UnitQuaternion& q);

/// Right product matrix: q1 (x) q2 == quat_right(q2) * q1.coeffs().
Eigen::Matrix4d quat_right(const UnitQuaternion& q);

/// Hamilton product, renormalized to bound drift over long 500 Hz chains.
UnitQuaternion quat_product(const UnitQuaternion& q1, const UnitQuaternion& q2);

/// Rotation matrix A(q) = B^T L(q) R(q)^T B, B = [0; I3].
Eigen::Matrix3d rotmat_from_quat(const UnitQuaternion& q);

/// Cayley map: [1; theta] / sqrt(1 + |theta|^2). Unit norm by construction.
UnitQuaternion cayley(const Rodrigues3& theta);

/// Inverse Cayley map q_v / q_w. Throws SingularRotationError at q_w = 0.
Rodrigues3 inv_cayley(const UnitQuaternion& q);

inline UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b) {
  return quat_product(a, b);
}

}  // namespace vilo
