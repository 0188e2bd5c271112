#include "vilo/leg_kinematics.hpp"

namespace vilo {

namespace {

Eigen::Matrix3d rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << 1, 0, 0,
      0, c, -s,
      0, s, c;
  return m;
}

Eigen::Matrix3d rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << c, 0, s,
      0, 1, 0,
      -s, 0, c;
  return m;
}

const Eigen::Matrix3d kSx = skew(Eigen::Vector3d::UnitX());
const Eigen::Matrix3d kSy = skew(Eigen::Vector3d::UnitY());

// Shared terms of the chain: u is the thigh+calf vector in the post-hip
// frame, w the full vector from the abduction axis.
struct ChainTerms {
  Eigen::Matrix3d rx, ry1, ry2;
  Eigen::Vector3d t_calf;  // [0, 0, -rho]
  Eigen::Vector3d u;       // [0,0,-l_t] + Ry2 * t_calf
  Eigen::Vector3d w;       // [0, s*d, 0] + Ry1 * u
};

ChainTerms chain_terms(const LegGeometry& geom, const Eigen::Vector3d& phi, const KinParams& rho) {
  ChainTerms c;
  c.rx = rot_x(phi(0));
  c.ry1 = rot_y(phi(1));
  c.ry2 = rot_y(phi(2));
  c.t_calf = Eigen::Vector3d(0, 0, -rho.calf());
  c.u = Eigen::Vector3d(0, 0, -geom.thigh_length) + c.ry2 * c.t_calf;
  c.w = Eigen::Vector3d(0, geom.side_sign * geom.abduction_offset, 0) + c.ry1 * c.u;
  return c;
}

}  // namespace

Eigen::Vector3d forward_kinematics(const LegGeometry& geom, const Eigen::Vector3d& phi,
                                   const KinParams& rho) {
  const ChainTerms c = chain_terms(geom, phi, rho);
  return geom.hip_offset + c.rx * c.w;
}

Eigen::Matrix3d leg_jacobian(const LegGeometry& geom, const Eigen::Vector3d& phi,
                             const KinParams& rho) {
  const ChainTerms c = chain_terms(geom, phi, rho);
  Eigen::Matrix3d j;
  j.col(0) = kSx * (c.rx * c.w);                 // abduction about body x
  j.col(1) = c.rx * (kSy * (c.ry1 * c.u));       // hip pitch
  j.col(2) = c.rx * c.ry1 * (kSy * (c.ry2 * c.t_calf));  // knee pitch
  return j;
}

KinematicPartials kinematic_partials(const LegGeometry& geom, const Eigen::Vector3d& phi,
                                     const KinParams& rho) {
  const ChainTerms c = chain_terms(geom, phi, rho);
  const Eigen::Vector3d tc_drho(0, 0, -1.0);  // d(t_calf)/d(rho)

  const Eigen::Vector3d col0 = kSx * (c.rx * c.w);
  const Eigen::Vector3d col1 = c.rx * (kSy * (c.ry1 * c.u));
  const Eigen::Vector3d col2 = c.rx * c.ry1 * (kSy * (c.ry2 * c.t_calf));

  KinematicPartials out;
  out.dg_drho = c.rx * c.ry1 * (c.ry2 * tc_drho);

  // d(col)/d(phi_k); second derivatives of g, symmetric across columns.
  const Eigen::Vector3d d01 = kSx * col1;                                    // = d10
  const Eigen::Vector3d d02 = kSx * col2;                                    // = d20
  const Eigen::Vector3d d12 = c.rx * (kSy * (c.ry1 * (kSy * (c.ry2 * c.t_calf))));  // = d21

  out.dvecJ_dphi.block<3, 1>(0, 0) = kSx * col0;
  out.dvecJ_dphi.block<3, 1>(0, 1) = d01;
  out.dvecJ_dphi.block<3, 1>(0, 2) = d02;
  out.dvecJ_dphi.block<3, 1>(3, 0) = d01;
  out.dvecJ_dphi.block<3, 1>(3, 1) = c.rx * (kSy * (kSy * (c.ry1 * c.u)));
  out.dvecJ_dphi.block<3, 1>(3, 2) = d12;
  out.dvecJ_dphi.block<3, 1>(6, 0) = d02;
  out.dvecJ_dphi.block<3, 1>(6, 1) = d12;
  out.dvecJ_dphi.block<3, 1>(6, 2) = c.rx * c.ry1 * (kSy * (kSy * (c.ry2 * c.t_calf)));

  out.dvecJ_drho.block<3, 1>(0, 0) = kSx * out.dg_drho;
  out.dvecJ_drho.block<3, 1>(3, 0) = c.rx * (kSy * (c.ry1 * (c.ry2 * tc_drho)));
  out.dvecJ_drho.block<3, 1>(6, 0) = c.rx * c.ry1 * (kSy * (c.ry2 * tc_drho));
  return out;
}

Eigen::Vector3d lo_velocity_body(const LegGeometry& geom, const Eigen::Vector3d& phi,
                                 const Eigen::Vector3d& dphi, const KinParams& rho,
                                 const Eigen::Vector3d& omega_corrected) {
  const Eigen::Vector3d g = forward_kinematics(geom, phi, rho);
  const Eigen::Matrix3d j = leg_jacobian(geom, phi, rho);
  return -(j * dphi + omega_corrected.cross(g));
}

Eigen::Vector3d lo_velocity_world(const UnitQuaternion& q, const LegGeometry& geom,
                                  const Eigen::Vector3d& phi, const Eigen::Vector3d& dphi,
                                  const KinParams& rho, const Eigen::Vector3d& omega_corrected) {
  return rotmat_from_quat(q) * lo_velocity_body(geom, phi, dphi, rho, omega_corrected);
}

}  // namespace vilo
