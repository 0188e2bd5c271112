#include "vilo/factor_graph.hpp"

#include <cstdlib>
#include <iostream>
#include <sstream>

namespace vilo {

namespace {

const Eigen::Matrix<double, 4, 3> kB = [] {
  Eigen::Matrix<double, 4, 3> b = Eigen::Matrix<double, 4, 3>::Zero();
  b.block<3, 3>(1, 0).setIdentity();
  return b;
}();

const Eigen::Matrix4d kConj = Eigen::Vector4d(1, -1, -1, -1).asDiagonal();

// d(inv_cayley(p))/dp as a 3x4 matrix.
Eigen::Matrix<double, 3, 4> inv_cayley_grad(const UnitQuaternion& p) {
  Eigen::Matrix<double, 3, 4> g;
  g.col(0) = -p.v / (p.w * p.w);
  g.block<3, 3>(0, 1) = Eigen::Matrix3d::Identity() / p.w;
  return g;
}

// d(cayley(m))/dm as a 4x3 matrix, evaluated at m.
Eigen::Matrix<double, 4, 3> cayley_grad(const Eigen::Vector3d& m) {
  const double s2 = 1.0 + m.squaredNorm();
  const double s = std::sqrt(s2);
  Eigen::Vector4d phi;
  phi << 1.0, m;
  phi /= s;
  return kB / s - phi * m.transpose() / s2;
}

int log_level() {
  static const int level = [] {
    const char* env = std::getenv("VILO_LOG");
    return env ? std::atoi(env) : 0;
  }();
  return level;
}

void warn(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[vilo] " << msg << "\n";
}

double huber_cost(double s, double delta) {
  const double n = std::sqrt(s);
  return n <= delta ? s : 2.0 * delta * n - delta * delta;
}

double huber_weight(double s, double delta) {
  const double n = std::sqrt(s);
  return n <= delta ? 1.0 : delta / n;
}

}  // namespace

const char* mode_name(EstimatorMode mode) {
  switch (mode) {
    case EstimatorMode::kKF: return "kf";
    case EstimatorMode::kVIO: return "vio";
    case EstimatorMode::kViloFixed: return "vilo";
    case EstimatorMode::kViloCalib: return "vilo-calib";
  }
  return "?";
}

std::optional<EstimatorMode> mode_from_name(const std::string& name) {
  if (name == "kf") return EstimatorMode::kKF;
  if (name == "vio") return EstimatorMode::kVIO;
  if (name == "vilo") return EstimatorMode::kViloFixed;
  if (name == "vilo-calib") return EstimatorMode::kViloCalib;
  return std::nullopt;
}

RobotState apply_delta(const RobotState& x, const Eigen::Matrix<double, kStateDim, 1>& delta) {
  RobotState out = x;
  out.p += delta.segment<3>(0);
  out.q = x.q * cayley(delta.segment<3>(3));
  out.v += delta.segment<3>(6);
  out.bias_a += delta.segment<3>(9);
  out.bias_w += delta.segment<3>(12);
  out.rho += delta.segment<4>(15);
  for (int l = 0; l < kNumLegs; ++l) {
    out.rho(l) = std::clamp(out.rho(l), KinParams::kMin, KinParams::kMax);
  }
  return out;
}

Eigen::Matrix<double, kStateDim, 1> state_minus(const RobotState& x, const RobotState& lin) {
  Eigen::Matrix<double, kStateDim, 1> d;
  d.segment<3>(0) = x.p - lin.p;
  d.segment<3>(3) = inv_cayley(lin.q.inverse() * x.q);
  d.segment<3>(6) = x.v - lin.v;
  d.segment<3>(9) = x.bias_a - lin.bias_a;
  d.segment<3>(12) = x.bias_w - lin.bias_w;
  d.segment<4>(15) = x.rho - lin.rho;
  return d;
}

// ---------------------------------------------------------------------------
// PreintegrationBundle

PreintegrationBundle::PreintegrationBundle(const Eigen::Vector3d& ba, const Eigen::Vector3d& bw,
                                           const Eigen::Vector4d& rho, const ImuNoise& imu_noise,
                                           const LegNoise& leg_noise)
    : imu(ba, bw, imu_noise) {
  legs.reserve(kNumLegs);
  for (int l = 0; l < kNumLegs; ++l) {
    legs.emplace_back(KinParams(rho(l)), bw, leg_noise, imu_noise);
  }
}

void PreintegrationBundle::integrate_tick(const ImuSample& s,
                                          const std::array<LegSample, kNumLegs>& leg_samples,
                                          double dt,
                                          const std::array<LegGeometry, kNumLegs>& geoms) {
  // Legs consume gamma^k_i before the IMU advances it for this tick.
  for (int l = 0; l < kNumLegs; ++l) {
    legs[l].integrate(leg_samples[l], imu.gamma(), dt, geoms[l]);
  }
  imu.integrate(s, dt);
}

void PreintegrationBundle::reintegrate(const Eigen::Vector3d& ba, const Eigen::Vector3d& bw,
                                       const Eigen::Vector4d& rho,
                                       const std::array<LegGeometry, kNumLegs>& geoms) {
  for (int l = 0; l < kNumLegs; ++l) {
    legs[l].reintegrate_begin(KinParams(rho(l)), bw);
  }
  ImuPreintegration fresh(ba, bw, imu.noise());
  const auto& buffered = imu.buffered_samples();
  for (size_t i = 0; i < buffered.size(); ++i) {
    for (int l = 0; l < kNumLegs; ++l) {
      const auto& [leg_sample, leg_dt] = legs[l].buffered_samples()[i];
      legs[l].step(leg_sample, fresh.gamma(), leg_dt, geoms[l]);
    }
    fresh.integrate(buffered[i].first, buffered[i].second);
  }
  imu = std::move(fresh);
}

// ---------------------------------------------------------------------------
// Factor evaluations

ImuFactorEval eval_imu_factor(const ImuPreintegration& pre, const RobotState& x_k,
                              const RobotState& x_k1, const Eigen::Vector3d& gravity_w) {
  ImuFactorEval out;
  out.r = imu_residual(pre, x_k, x_k1, gravity_w);
  out.J_k.setZero();
  out.J_k1.setZero();

  const double dt = pre.dt_total();
  const Eigen::Matrix3d a_k_t = rotmat_from_quat(x_k.q).transpose();
  const Eigen::Vector3d dba = x_k.bias_a - pre.lin_bias_a();
  const Eigen::Vector3d dbw = x_k.bias_w - pre.lin_bias_w();
  const auto corr = pre.bias_corrected(dba, dbw);
  const auto& J = pre.jacobian();

  // Position rows.
  const Eigen::Vector3d yp = x_k1.p - x_k.p + 0.5 * gravity_w * dt * dt - x_k.v * dt;
  out.J_k.block<3, 3>(0, 0) = -a_k_t;
  out.J_k.block<3, 3>(0, 3) = 2.0 * skew(a_k_t * yp);
  out.J_k.block<3, 3>(0, 6) = -a_k_t * dt;
  out.J_k.block<3, 3>(0, 9) = -J.block<3, 3>(0, 9);
  out.J_k.block<3, 3>(0, 12) = -J.block<3, 3>(0, 12);
  out.J_k1.block<3, 3>(0, 0) = a_k_t;

  // Orientation rows through the product chain.
  const UnitQuaternion q_rel = x_k.q.inverse() * x_k1.q;
  const UnitQuaternion e_q = q_rel * corr.gamma.inverse();
  const Eigen::Matrix<double, 3, 4> g_e = inv_cayley_grad(e_q);
  out.J_k.block<3, 3>(3, 3) = -g_e * quat_right(e_q) * kB;
  out.J_k1.block<3, 3>(3, 3) = g_e * quat_left(q_rel) * quat_right(corr.gamma.inverse()) * kB;
  const Eigen::Matrix3d half_jgw = 0.5 * J.block<3, 3>(6, 12);
  const Eigen::Vector3d m = half_jgw * dbw;
  out.J_k.block<3, 3>(3, 12) = g_e * quat_left(q_rel) * quat_right(pre.gamma().inverse()) * kConj *
                               cayley_grad(m) * half_jgw;

  // Velocity rows.
  const Eigen::Vector3d yv = x_k1.v + gravity_w * dt - x_k.v;
  out.J_k.block<3, 3>(6, 3) = 2.0 * skew(a_k_t * yv);
  out.J_k.block<3, 3>(6, 6) = -a_k_t;
  out.J_k.block<3, 3>(6, 9) = -J.block<3, 3>(3, 9);
  out.J_k.block<3, 3>(6, 12) = -J.block<3, 3>(3, 12);
  out.J_k1.block<3, 3>(6, 6) = a_k_t;

  // Bias difference rows.
  out.J_k.block<3, 3>(9, 9) = -Eigen::Matrix3d::Identity();
  out.J_k.block<3, 3>(12, 12) = -Eigen::Matrix3d::Identity();
  out.J_k1.block<3, 3>(9, 9).setIdentity();
  out.J_k1.block<3, 3>(12, 12).setIdentity();
  return out;
}

LegFactorEval eval_leg_factor(const LegPreintegration& pre, const RobotState& x_k,
                              const RobotState& x_k1, int leg) {
  LegFactorEval out;
  out.r = leg_residual(pre, x_k, x_k1, leg);
  out.J_k.setZero();
  out.J_k1.setZero();

  const Eigen::Matrix3d a_k_t = rotmat_from_quat(x_k.q).transpose();
  const auto& J = pre.jacobian_aug();

  out.J_k.block<3, 3>(0, 0) = -a_k_t;
  out.J_k.block<3, 3>(0, 3) = 2.0 * skew(a_k_t * (x_k1.p - x_k.p));
  out.J_k.block<3, 3>(0, 12) = -J.block<3, 3>(15, 12);
  out.J_k.block<3, 1>(0, 15 + leg) = -J.block<3, 1>(15, 18);
  out.J_k(3, 15 + leg) = -1.0;
  out.J_k1.block<3, 3>(0, 0) = a_k_t;
  out.J_k1(3, 15 + leg) = 1.0;
  return out;
}

VisionFactorEval eval_vision_factor(const RobotState& x, const Eigen::Vector3d& landmark,
                                    const Eigen::Vector2d& obs, const CameraModel& cam) {
  VisionFactorEval out;
  const Eigen::Matrix3d a_t = rotmat_from_quat(x.q).transpose();
  const Eigen::Vector3d p_b = a_t * (landmark - x.p);
  const Eigen::Vector3d p_c = cam.r_bc.transpose() * (p_b - cam.p_bc);
  if (p_c.z() <= 0.05) {
    return out;  // behind or grazing the camera; excluded
  }
  out.valid = true;
  const double iz = 1.0 / p_c.z();
  out.r = Eigen::Vector2d(p_c.x() * iz, p_c.y() * iz) - obs;

  Eigen::Matrix<double, 2, 3> d_pc;
  d_pc << iz, 0.0, -p_c.x() * iz * iz,
      0.0, iz, -p_c.y() * iz * iz;
  const Eigen::Matrix<double, 2, 3> d_pb = d_pc * cam.r_bc.transpose();
  out.J_x.block<2, 3>(0, 0) = -d_pb * a_t;
  out.J_x.block<2, 3>(0, 3) = d_pb * 2.0 * skew(p_b);
  out.J_lm = d_pb * a_t;
  return out;
}

PriorFactorEval eval_prior_factor(const PriorFactor& prior, const RobotState& x) {
  PriorFactorEval out;
  const Eigen::Matrix<double, kStateDim, 1> d = state_minus(x, prior.lin);
  out.r = prior.sqrt_info * d - prior.rhs;

  Eigen::Matrix<double, kStateDim, kStateDim> chart =
      Eigen::Matrix<double, kStateDim, kStateDim>::Identity();
  const UnitQuaternion e_q = prior.lin.q.inverse() * x.q;
  chart.block<3, 3>(3, 3) = inv_cayley_grad(e_q) * quat_left(e_q) * kB;
  out.J = prior.sqrt_info * chart;
  return out;
}

// ---------------------------------------------------------------------------
// SlidingWindow

SlidingWindow::SlidingWindow(const WindowConfig& cfg) : cfg_(cfg) {}

void SlidingWindow::initialize(double t, const RobotState& x0) {
  kfs_.clear();
  landmarks_.clear();
  Keyframe kf;
  kf.t = t;
  kf.x = x0;
  kfs_.push_back(std::move(kf));

  Eigen::Matrix<double, kStateDim, 1> inv_sigma;
  inv_sigma << Eigen::Vector3d::Constant(1.0 / cfg_.prior_sigma_p),
      Eigen::Vector3d::Constant(1.0 / cfg_.prior_sigma_theta),
      Eigen::Vector3d::Constant(1.0 / cfg_.prior_sigma_v),
      Eigen::Vector3d::Constant(1.0 / cfg_.prior_sigma_ba),
      Eigen::Vector3d::Constant(1.0 / cfg_.prior_sigma_bw),
      Eigen::Vector4d::Constant(1.0 / cfg_.prior_sigma_rho);
  prior_.state_index = 0;
  prior_.lin = x0;
  prior_.sqrt_info = inv_sigma.asDiagonal();
  prior_.rhs = Eigen::VectorXd::Zero(kStateDim);
}

void SlidingWindow::add_keyframe(double t, std::unique_ptr<PreintegrationBundle> pre,
                                 const std::vector<std::pair<int, Eigen::Vector2d>>& observations) {
  if (kfs_.empty()) {
    throw std::invalid_argument("add_keyframe: window not initialized");
  }
  if (!(t > kfs_.back().t)) {
    throw std::invalid_argument("add_keyframe: keyframe times must be strictly increasing");
  }
  if (static_cast<int>(kfs_.size()) >= cfg_.max_states) {
    marginalize_oldest();
  }

  const RobotState& xk = kfs_.back().x;
  const auto corr =
      pre->imu.bias_corrected(xk.bias_a - pre->imu.lin_bias_a(), xk.bias_w - pre->imu.lin_bias_w());
  const double dt = pre->imu.dt_total();
  const Eigen::Matrix3d a_k = rotmat_from_quat(xk.q);

  Keyframe kf;
  kf.t = t;
  kf.x = xk;
  kf.x.p = xk.p + xk.v * dt - 0.5 * cfg_.gravity_w * dt * dt + a_k * corr.alpha;
  kf.x.v = xk.v - cfg_.gravity_w * dt + a_k * corr.beta;
  kf.x.q = xk.q * corr.gamma;
  kf.pre = std::move(pre);
  for (const auto& [id, uv] : observations) {
    kf.obs[id] = uv;
  }
  kfs_.push_back(std::move(kf));
  triangulate_pending();
}

void SlidingWindow::triangulate_pending() {
  if (cfg_.mode == EstimatorMode::kKF) return;
  // Ensure entries exist for every observed id.
  for (const auto& kf : kfs_) {
    for (const auto& [id, uv] : kf.obs) {
      (void)uv;
      if (!landmarks_.count(id)) {
        landmarks_[id] = Landmark{id, Eigen::Vector3d::Zero(), false};
      }
    }
  }
  for (auto& [id, lm] : landmarks_) {
    if (lm.active) continue;
    std::vector<std::pair<const Keyframe*, Eigen::Vector2d>> views;
    for (const auto& kf : kfs_) {
      const auto it = kf.obs.find(id);
      if (it != kf.obs.end()) views.emplace_back(&kf, it->second);
    }
    if (views.size() < 2) continue;

    std::vector<Eigen::Matrix3d> r_wc(views.size());
    std::vector<Eigen::Vector3d> c_w(views.size());
    double baseline = 0.0;
    for (size_t i = 0; i < views.size(); ++i) {
      const Eigen::Matrix3d a = rotmat_from_quat(views[i].first->x.q);
      r_wc[i] = a * cfg_.camera.r_bc;
      c_w[i] = views[i].first->x.p + a * cfg_.camera.p_bc;
      for (size_t j = 0; j < i; ++j) {
        baseline = std::max(baseline, (c_w[i] - c_w[j]).norm());
      }
    }
    if (baseline < cfg_.min_parallax) continue;

    Eigen::MatrixXd a_mat(3 * views.size(), 3);
    Eigen::VectorXd b_vec(3 * views.size());
    for (size_t i = 0; i < views.size(); ++i) {
      const Eigen::Vector3d dir =
          r_wc[i] * Eigen::Vector3d(views[i].second.x(), views[i].second.y(), 1.0);
      const Eigen::Matrix3d s = skew(dir);
      a_mat.block<3, 3>(3 * i, 0) = s;
      b_vec.segment<3>(3 * i) = s * c_w[i];
    }
    const Eigen::Vector3d pos = a_mat.colPivHouseholderQr().solve(b_vec);
    if (!pos.allFinite()) continue;

    bool ok = true;
    for (size_t i = 0; i < views.size(); ++i) {
      const double depth = (r_wc[i].transpose() * (pos - c_w[i])).z();
      if (depth < 0.05 || depth > 4.0 * cfg_.camera.max_depth) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    lm.position = pos;
    lm.active = true;
  }
}

// Dense Gauss-Newton assembly over the window states plus active landmarks.
struct SlidingWindow::Assembly {
  int ns{0};
  std::vector<int> lm_ids;
  Eigen::MatrixXd h_ss;
  Eigen::VectorXd g_s;
  std::vector<Eigen::Matrix3d> h_ll;
  std::vector<Eigen::MatrixXd> h_sl;
  std::vector<Eigen::Vector3d> g_l;
};

double SlidingWindow::evaluate(const std::vector<RobotState>& states,
                               const std::map<int, Eigen::Vector3d>& lm_pos,
                               Assembly* out) const {
  const int ns = static_cast<int>(states.size());
  const int sdim = ns * kStateDim;
  double cost = 0.0;

  std::vector<int> lm_ids;
  std::map<int, int> lm_index;
  for (const auto& [id, pos] : lm_pos) {
    (void)pos;
    lm_index[id] = static_cast<int>(lm_ids.size());
    lm_ids.push_back(id);
  }

  if (out) {
    out->ns = ns;
    out->lm_ids = lm_ids;
    out->h_ss = Eigen::MatrixXd::Zero(sdim, sdim);
    out->g_s = Eigen::VectorXd::Zero(sdim);
    out->h_ll.assign(lm_ids.size(), Eigen::Matrix3d::Zero());
    out->h_sl.assign(lm_ids.size(), Eigen::MatrixXd::Zero(sdim, 3));
    out->g_l.assign(lm_ids.size(), Eigen::Vector3d::Zero());
  }

  // Prior factor.
  {
    const PriorFactorEval pe = eval_prior_factor(prior_, states[prior_.state_index]);
    cost += 0.5 * pe.r.squaredNorm();
    if (out) {
      const int base = prior_.state_index * kStateDim;
      out->h_ss.block(base, base, kStateDim, kStateDim) += pe.J.transpose() * pe.J;
      out->g_s.segment(base, kStateDim) += pe.J.transpose() * pe.r;
    }
  }

  // IMU and leg factors per interval.
  for (int i = 1; i < ns; ++i) {
    const PreintegrationBundle& pre = *kfs_[i].pre;
    {
      const ImuFactorEval fe = eval_imu_factor(pre.imu, states[i - 1], states[i], cfg_.gravity_w);
      const Eigen::Matrix<double, 15, 15> cov = pre.imu.residual_covariance();
      Eigen::LLT<Eigen::Matrix<double, 15, 15>> llt(cov);
      Eigen::Matrix<double, 15, 15> l_inv;
      if (llt.info() == Eigen::Success) {
        l_inv = llt.matrixL().solve(Eigen::Matrix<double, 15, 15>::Identity());
      } else {
        const Eigen::Matrix<double, 15, 15> jitter =
            cov + 1e-14 * std::max(1.0, cov.trace()) * Eigen::Matrix<double, 15, 15>::Identity();
        l_inv = Eigen::LLT<Eigen::Matrix<double, 15, 15>>(jitter).matrixL().solve(
            Eigen::Matrix<double, 15, 15>::Identity());
      }
      const Eigen::Matrix<double, 15, 1> rw = l_inv * fe.r;
      cost += 0.5 * rw.squaredNorm();
      if (out) {
        const Eigen::Matrix<double, 15, kStateDim> ja = l_inv * fe.J_k;
        const Eigen::Matrix<double, 15, kStateDim> jb = l_inv * fe.J_k1;
        const int a = (i - 1) * kStateDim, b = i * kStateDim;
        out->h_ss.block(a, a, kStateDim, kStateDim) += ja.transpose() * ja;
        out->h_ss.block(a, b, kStateDim, kStateDim) += ja.transpose() * jb;
        out->h_ss.block(b, a, kStateDim, kStateDim) += jb.transpose() * ja;
        out->h_ss.block(b, b, kStateDim, kStateDim) += jb.transpose() * jb;
        out->g_s.segment(a, kStateDim) += ja.transpose() * rw;
        out->g_s.segment(b, kStateDim) += jb.transpose() * rw;
      }
    }
    if (legs_enabled()) {
      for (int l = 0; l < kNumLegs; ++l) {
        const LegFactorEval fe = eval_leg_factor(pre.legs[l], states[i - 1], states[i], l);
        const Eigen::Matrix4d cov = pre.legs[l].residual_covariance();
        Eigen::LLT<Eigen::Matrix4d> llt(cov);
        Eigen::Matrix4d l_inv;
        if (llt.info() == Eigen::Success) {
          l_inv = llt.matrixL().solve(Eigen::Matrix4d::Identity());
        } else {
          const Eigen::Matrix4d jitter =
              cov + 1e-14 * std::max(1.0, cov.trace()) * Eigen::Matrix4d::Identity();
          l_inv = Eigen::LLT<Eigen::Matrix4d>(jitter).matrixL().solve(Eigen::Matrix4d::Identity());
        }
        const Eigen::Vector4d rw = l_inv * fe.r;
        cost += 0.5 * rw.squaredNorm();
        if (out) {
          const Eigen::Matrix<double, 4, kStateDim> ja = l_inv * fe.J_k;
          const Eigen::Matrix<double, 4, kStateDim> jb = l_inv * fe.J_k1;
          const int a = (i - 1) * kStateDim, b = i * kStateDim;
          out->h_ss.block(a, a, kStateDim, kStateDim) += ja.transpose() * ja;
          out->h_ss.block(a, b, kStateDim, kStateDim) += ja.transpose() * jb;
          out->h_ss.block(b, a, kStateDim, kStateDim) += jb.transpose() * ja;
          out->h_ss.block(b, b, kStateDim, kStateDim) += jb.transpose() * jb;
          out->g_s.segment(a, kStateDim) += ja.transpose() * rw;
          out->g_s.segment(b, kStateDim) += jb.transpose() * rw;
        }
      }
    }
  }

  // Vision factors.
  if (cfg_.mode != EstimatorMode::kKF) {
    const double inv_sigma = 1.0 / cfg_.camera.obs_noise_std;
    for (const auto& [id, pos] : lm_pos) {
      const int li = lm_index.at(id);
      for (int i = 0; i < ns; ++i) {
        const auto it = kfs_[i].obs.find(id);
        if (it == kfs_[i].obs.end()) continue;
        const VisionFactorEval fe = eval_vision_factor(states[i], pos, it->second, cfg_.camera);
        if (!fe.valid) continue;
        const Eigen::Vector2d rw = fe.r * inv_sigma;
        const double s = rw.squaredNorm();
        cost += 0.5 * huber_cost(s, cfg_.solver.huber_vision);
        if (out) {
          const double w = huber_weight(s, cfg_.solver.huber_vision);
          const Eigen::Matrix<double, 2, kStateDim> jx = fe.J_x * inv_sigma;
          const Eigen::Matrix<double, 2, 3> jl = fe.J_lm * inv_sigma;
          const int a = i * kStateDim;
          out->h_ss.block(a, a, kStateDim, kStateDim) += w * jx.transpose() * jx;
          out->g_s.segment(a, kStateDim) += w * jx.transpose() * rw;
          out->h_ll[li] += w * jl.transpose() * jl;
          out->h_sl[li].block(a, 0, kStateDim, 3) += w * jx.transpose() * jl;
          out->g_l[li] += w * jl.transpose() * rw;
        }
      }
    }
  }
  return cost;
}

SolveStats SlidingWindow::solve() {
  SolveStats stats;
  if (kfs_.size() < 2) {
    stats.converged = true;
    return stats;
  }
  const int ns = static_cast<int>(kfs_.size());
  const int sdim = ns * kStateDim;

  std::vector<RobotState> states;
  states.reserve(ns);
  for (const auto& kf : kfs_) states.push_back(kf.x);
  std::map<int, Eigen::Vector3d> lm_pos;
  for (const auto& [id, lm] : landmarks_) {
    if (lm.active) lm_pos[id] = lm.position;
  }

  Assembly asmb;
  double cost = evaluate(states, lm_pos, &asmb);
  if (!std::isfinite(cost)) {
    throw std::runtime_error("solve_window: non-finite initial cost");
  }
  stats.initial_cost = cost;

  double lambda = cfg_.solver.lambda_init;
  for (int iter = 0; iter < cfg_.solver.max_iterations; ++iter) {
    stats.iterations = iter + 1;

    // Frozen rho coordinates (all modes except calibration).
    std::vector<int> frozen;
    if (rho_frozen()) {
      for (int i = 0; i < ns; ++i) {
        for (int l = 0; l < kNumLegs; ++l) frozen.push_back(i * kStateDim + 15 + l);
      }
    }

    bool accepted = false;
    std::vector<RobotState> cand_states;
    std::map<int, Eigen::Vector3d> cand_lm;
    double cand_cost = 0.0;

    while (!accepted) {
      // Damped Schur system over the states.
      Eigen::MatrixXd h = asmb.h_ss;
      Eigen::VectorXd g = asmb.g_s;
      const int nl = static_cast<int>(asmb.lm_ids.size());
      std::vector<Eigen::Matrix3d> h_ll_inv(nl);
      for (int li = 0; li < nl; ++li) {
        Eigen::Matrix3d d = asmb.h_ll[li];
        for (int k = 0; k < 3; ++k) d(k, k) += lambda * std::max(d(k, k), 1e-6);
        h_ll_inv[li] = d.inverse();
        h -= asmb.h_sl[li] * h_ll_inv[li] * asmb.h_sl[li].transpose();
        g -= asmb.h_sl[li] * (h_ll_inv[li] * asmb.g_l[li]);
      }
      for (int k = 0; k < sdim; ++k) {
        h(k, k) += lambda * std::max(asmb.h_ss(k, k), 1e-6);
      }
      for (int idx : frozen) {
        h.row(idx).setZero();
        h.col(idx).setZero();
        h(idx, idx) = 1.0;
        g(idx) = 0.0;
      }

      const Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
      const Eigen::VectorXd delta_s = ldlt.solve(-g);
      const Eigen::VectorXd d_abs = ldlt.vectorD().cwiseAbs();
      stats.cond_proxy = d_abs.maxCoeff() / std::max(d_abs.minCoeff(), 1e-300);

      bool ok = delta_s.allFinite();
      if (ok) {
        cand_states.clear();
        for (int i = 0; i < ns; ++i) {
          cand_states.push_back(
              apply_delta(states[i], delta_s.segment<kStateDim>(i * kStateDim)));
        }
        cand_lm.clear();
        int li = 0;
        for (const auto& [id, pos] : lm_pos) {
          const Eigen::Vector3d dl =
              -h_ll_inv[li] * (asmb.g_l[li] + asmb.h_sl[li].transpose() * delta_s);
          cand_lm[id] = pos + dl;
          ++li;
        }
        cand_cost = evaluate(cand_states, cand_lm, nullptr);
        ok = std::isfinite(cand_cost) && cand_cost < cost;
      }
      if (ok) {
        accepted = true;
        lambda = std::max(lambda / 3.0, 1e-12);
      } else {
        lambda *= 10.0;
        if (lambda > cfg_.solver.lambda_max) break;
      }
    }
    if (!accepted) break;

    const double prev_cost = cost;
    states = cand_states;
    lm_pos = cand_lm;
    stats.accepted_costs.push_back(cand_cost);

    // Write back and re-linearize preintegrations past the thresholds.
    for (int i = 0; i < ns; ++i) kfs_[i].x = states[i];
    for (auto& [id, pos] : lm_pos) landmarks_[id].position = pos;
    for (int i = 1; i < ns; ++i) {
      PreintegrationBundle& pre = *kfs_[i].pre;
      const RobotState& xk = kfs_[i - 1].x;
      bool redo = pre.imu.needs_reintegration(xk.bias_a - pre.imu.lin_bias_a(),
                                              xk.bias_w - pre.imu.lin_bias_w());
      for (int l = 0; l < kNumLegs && !redo; ++l) {
        redo = pre.legs[l].needs_reintegration(xk.bias_w - pre.legs[l].lin_bias_w(),
                                               xk.rho(l) - pre.legs[l].lin_rho().calf());
      }
      if (redo) {
        pre.reintegrate(xk.bias_a, xk.bias_w, xk.rho, cfg_.geoms);
      }
    }

    cost = evaluate(states, lm_pos, &asmb);
    if (!std::isfinite(cost)) {
      throw std::runtime_error("solve_window: non-finite cost after step");
    }
    if (prev_cost - cand_cost < cfg_.solver.rel_cost_tol * std::max(prev_cost, 1e-300)) {
      stats.converged = true;
      break;
    }
  }
  stats.final_cost = cost;
  if (stats.cond_proxy > 1e12) {
    warn("solve_window: normal-equation condition proxy above 1e12");
  }
  return stats;
}

void SlidingWindow::marginalize_oldest() {
  if (static_cast<int>(kfs_.size()) < cfg_.max_states) {
    return;  // below capacity
  }

  // Landmarks last seen at the oldest keyframe.
  std::vector<int> dead_ids;
  for (const auto& [id, uv] : kfs_[0].obs) {
    (void)uv;
    const auto it = landmarks_.find(id);
    if (it == landmarks_.end() || !it->second.active) continue;
    bool seen_later = false;
    for (size_t i = 1; i < kfs_.size() && !seen_later; ++i) {
      seen_later = kfs_[i].obs.count(id) > 0;
    }
    if (!seen_later) dead_ids.push_back(id);
  }

  // Linear system over [x0 (19), x1 (19), dead landmarks (3 each)].
  const int nd = static_cast<int>(dead_ids.size());
  const int dim = 2 * kStateDim + 3 * nd;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);

  {
    const PriorFactorEval pe = eval_prior_factor(prior_, kfs_[0].x);
    h.block(0, 0, kStateDim, kStateDim) += pe.J.transpose() * pe.J;
    g.segment(0, kStateDim) += pe.J.transpose() * pe.r;
  }
  const PreintegrationBundle& pre = *kfs_[1].pre;
  {
    const ImuFactorEval fe = eval_imu_factor(pre.imu, kfs_[0].x, kfs_[1].x, cfg_.gravity_w);
    const Eigen::Matrix<double, 15, 15> cov = pre.imu.residual_covariance();
    const Eigen::Matrix<double, 15, 15> l_inv =
        Eigen::LLT<Eigen::Matrix<double, 15, 15>>(
            cov + 1e-16 * std::max(1.0, cov.trace()) * Eigen::Matrix<double, 15, 15>::Identity())
            .matrixL()
            .solve(Eigen::Matrix<double, 15, 15>::Identity());
    const Eigen::Matrix<double, 15, 1> rw = l_inv * fe.r;
    const Eigen::Matrix<double, 15, kStateDim> ja = l_inv * fe.J_k;
    const Eigen::Matrix<double, 15, kStateDim> jb = l_inv * fe.J_k1;
    h.block(0, 0, kStateDim, kStateDim) += ja.transpose() * ja;
    h.block(0, kStateDim, kStateDim, kStateDim) += ja.transpose() * jb;
    h.block(kStateDim, 0, kStateDim, kStateDim) += jb.transpose() * ja;
    h.block(kStateDim, kStateDim, kStateDim, kStateDim) += jb.transpose() * jb;
    g.segment(0, kStateDim) += ja.transpose() * rw;
    g.segment(kStateDim, kStateDim) += jb.transpose() * rw;
  }
  if (legs_enabled()) {
    for (int l = 0; l < kNumLegs; ++l) {
      const LegFactorEval fe = eval_leg_factor(pre.legs[l], kfs_[0].x, kfs_[1].x, l);
      const Eigen::Matrix4d cov = pre.legs[l].residual_covariance();
      const Eigen::Matrix4d l_inv =
          Eigen::LLT<Eigen::Matrix4d>(cov + 1e-16 * std::max(1.0, cov.trace()) *
                                                Eigen::Matrix4d::Identity())
              .matrixL()
              .solve(Eigen::Matrix4d::Identity());
      const Eigen::Vector4d rw = l_inv * fe.r;
      const Eigen::Matrix<double, 4, kStateDim> ja = l_inv * fe.J_k;
      const Eigen::Matrix<double, 4, kStateDim> jb = l_inv * fe.J_k1;
      h.block(0, 0, kStateDim, kStateDim) += ja.transpose() * ja;
      h.block(0, kStateDim, kStateDim, kStateDim) += ja.transpose() * jb;
      h.block(kStateDim, 0, kStateDim, kStateDim) += jb.transpose() * ja;
      h.block(kStateDim, kStateDim, kStateDim, kStateDim) += jb.transpose() * jb;
      g.segment(0, kStateDim) += ja.transpose() * rw;
      g.segment(kStateDim, kStateDim) += jb.transpose() * rw;
    }
  }
  if (cfg_.mode != EstimatorMode::kKF) {
    const double inv_sigma = 1.0 / cfg_.camera.obs_noise_std;
    for (int di = 0; di < nd; ++di) {
      const int id = dead_ids[di];
      const VisionFactorEval fe = eval_vision_factor(kfs_[0].x, landmarks_[id].position,
                                                     kfs_[0].obs.at(id), cfg_.camera);
      if (!fe.valid) continue;
      const Eigen::Vector2d rw = fe.r * inv_sigma;
      const double w = huber_weight(rw.squaredNorm(), cfg_.solver.huber_vision);
      const Eigen::Matrix<double, 2, kStateDim> jx = fe.J_x * inv_sigma;
      const Eigen::Matrix<double, 2, 3> jl = fe.J_lm * inv_sigma;
      const int lb = 2 * kStateDim + 3 * di;
      h.block(0, 0, kStateDim, kStateDim) += w * jx.transpose() * jx;
      h.block(0, lb, kStateDim, 3) += w * jx.transpose() * jl;
      h.block(lb, 0, 3, kStateDim) += w * jl.transpose() * jx;
      h.block(lb, lb, 3, 3) += w * jl.transpose() * jl;
      g.segment(0, kStateDim) += w * jx.transpose() * rw;
      g.segment(lb, 3) += w * jl.transpose() * rw;
    }
  }

  // Move the marginalized block (x0 + dead landmarks) to the front.
  const int mdim = kStateDim + 3 * nd;
  Eigen::VectorXi order(dim);
  int k = 0;
  for (int i = 0; i < kStateDim; ++i) order(k++) = i;
  for (int i = 2 * kStateDim; i < dim; ++i) order(k++) = i;
  for (int i = kStateDim; i < 2 * kStateDim; ++i) order(k++) = i;
  Eigen::MatrixXd hp(dim, dim);
  Eigen::VectorXd gp(dim);
  for (int i = 0; i < dim; ++i) {
    gp(i) = g(order(i));
    for (int j = 0; j < dim; ++j) hp(i, j) = h(order(i), order(j));
  }

  Eigen::MatrixXd h_mm = hp.topLeftCorner(mdim, mdim);
  {
    const Eigen::LDLT<Eigen::MatrixXd> probe(h_mm);
    const Eigen::VectorXd d = probe.vectorD();
    if (probe.info() != Eigen::Success || d.minCoeff() < 1e-10 * std::max(1.0, d.maxCoeff())) {
      warn("marginalize_oldest: rank-deficient block, regularizing with 1e-8 diagonal");
      h_mm += 1e-8 * Eigen::MatrixXd::Identity(mdim, mdim);
    }
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(h_mm);
  const Eigen::MatrixXd h_rm = hp.bottomLeftCorner(kStateDim, mdim);
  const Eigen::MatrixXd h_rr = hp.bottomRightCorner(kStateDim, kStateDim);
  const Eigen::MatrixXd h_marg = h_rr - h_rm * ldlt.solve(h_rm.transpose());
  const Eigen::VectorXd g_marg =
      gp.tail(kStateDim) - h_rm * ldlt.solve(gp.head(mdim));

  // Square-root form: residual = sqrt_info * delta - rhs.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (h_marg + h_marg.transpose()));
  const Eigen::VectorXd evals = es.eigenvalues();
  const double emax = std::max(evals.maxCoeff(), 0.0);
  std::vector<int> keep;
  for (int i = 0; i < evals.size(); ++i) {
    if (evals(i) > std::max(1e-12 * emax, 1e-300)) keep.push_back(i);
  }
  Eigen::MatrixXd sqrt_info(keep.size(), kStateDim);
  Eigen::VectorXd rhs(keep.size());
  for (size_t i = 0; i < keep.size(); ++i) {
    const double lam = evals(keep[i]);
    sqrt_info.row(i) = std::sqrt(lam) * es.eigenvectors().col(keep[i]).transpose();
    rhs(i) = -es.eigenvectors().col(keep[i]).dot(g_marg) / std::sqrt(lam);
  }

  prior_.state_index = 0;
  prior_.lin = kfs_[1].x;
  prior_.sqrt_info = std::move(sqrt_info);
  prior_.rhs = std::move(rhs);

  kfs_.pop_front();
  kfs_.front().pre.reset();
  for (int id : dead_ids) landmarks_.erase(id);

  // Forget landmarks with no remaining observations in the window.
  for (auto it = landmarks_.begin(); it != landmarks_.end();) {
    bool seen = false;
    for (const auto& kf : kfs_) {
      if (kf.obs.count(it->first)) {
        seen = true;
        break;
      }
    }
    it = seen ? std::next(it) : landmarks_.erase(it);
  }
}

}  // namespace vilo
