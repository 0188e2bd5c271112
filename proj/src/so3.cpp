#include "vilo/so3.hpp"

namespace vilo {

Eigen::Matrix4d quat_left(const UnitQuaternion& q) {
  Eigen::Matrix4d l;
  l(0, 0) = q.w;
  l.block<1, 3>(0, 1) = -q.v.transpose();
  l.block<3, 1>(1, 0) = q.v;
  l.block<3, 3>(1, 1) = q.w * Eigen::Matrix3d::Identity() + skew(q.v);
  return l;
}

Eigen::Matrix4d quat_right(const UnitQuaternion& q) {
  Eigen::Matrix4d r;
  r(0, 0) = q.w;
  r.block<1, 3>(0, 1) = -q.v.transpose();
  r.block<3, 1>(1, 0) = q.v;
  r.block<3, 3>(1, 1) = q.w * Eigen::Matrix3d::Identity() - skew(q.v);
  return r;
}

UnitQuaternion quat_product(const UnitQuaternion& q1, const UnitQuaternion& q2) {
  const Eigen::Vector4d c = quat_left(q1) * q2.coeffs();
  return UnitQuaternion(c(0), c.tail<3>()).normalized();
}

Eigen::Matrix3d rotmat_from_quat(const UnitQuaternion& q) {
  Eigen::Matrix<double, 4, 3> b = Eigen::Matrix<double, 4, 3>::Zero();
  b.block<3, 3>(1, 0).setIdentity();
  return b.transpose() * quat_left(q) * quat_right(q).transpose() * b;
}

UnitQuaternion cayley(const Rodrigues3& theta) {
  const double s = std::sqrt(1.0 + theta.squaredNorm());
  return {1.0 / s, theta / s};
}

Rodrigues3 inv_cayley(const UnitQuaternion& q) {
  if (std::abs(q.w) < 1e-12) {
    throw SingularRotationError();
  }
  return q.v / q.w;
}

}  // namespace vilo
