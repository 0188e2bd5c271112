#include "vilo/simulator.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace vilo {

namespace {

// Univariate second-order dual number for exact path derivatives.
struct Jet2 {
  double f{0}, d1{0}, d2{0};
};
Jet2 jet_const(double c) { return {c, 0, 0}; }
Jet2 operator+(const Jet2& a, const Jet2& b) { return {a.f + b.f, a.d1 + b.d1, a.d2 + b.d2}; }
Jet2 operator*(const Jet2& a, const Jet2& b) {
  return {a.f * b.f, a.d1 * b.f + a.f * b.d1, a.d2 * b.f + 2.0 * a.d1 * b.d1 + a.f * b.d2};
}
Jet2 jet_sin(const Jet2& a) {
  const double s = std::sin(a.f), c = std::cos(a.f);
  return {s, c * a.d1, -s * a.d1 * a.d1 + c * a.d2};
}
Jet2 jet_cos(const Jet2& a) {
  const double s = std::sin(a.f), c = std::cos(a.f);
  return {c, -s * a.d1, -c * a.d1 * a.d1 - s * a.d2};
}
Jet2 jet_pow(const Jet2& a, double e) {
  const double f1 = std::pow(a.f, e - 1.0);
  return {std::pow(a.f, e), e * f1 * a.d1,
          e * (e - 1.0) * std::pow(a.f, e - 2.0) * a.d1 * a.d1 + e * f1 * a.d2};
}

struct PathPoint {
  Eigen::Vector2d pos, d1, d2;  // derivatives w.r.t. the loop parameter u
};

PathPoint path_eval(const SimConfig& cfg, double u) {
  const Jet2 ju{u, 1.0, 0.0};
  Jet2 x, y;
  switch (cfg.path) {
    case PathKind::kCircle:
      x = jet_const(cfg.circle_radius) * jet_cos(ju);
      y = jet_const(cfg.circle_radius) * jet_sin(ju);
      break;
    case PathKind::kRoundedRect: {
      // Superellipse (|x/a|^4 + |y/b|^4 = 1) in polar form; C-infinity.
      const Jet2 c = jet_cos(ju), s = jet_sin(ju);
      const Jet2 m = jet_pow(c * c, 2.0) * jet_const(std::pow(cfg.rect_half_x, -4.0)) +
                     jet_pow(s * s, 2.0) * jet_const(std::pow(cfg.rect_half_y, -4.0));
      const Jet2 r = jet_pow(m, -0.25);
      x = r * c;
      y = r * s;
      break;
    }
    case PathKind::kFigureEight: {
      const Jet2 ju2{2.0 * u, 2.0, 0.0};
      x = jet_const(cfg.eight_half_x) * jet_sin(ju);
      y = jet_const(cfg.eight_half_y) * jet_sin(ju2);
      break;
    }
  }
  PathPoint p;
  p.pos = {x.f, y.f};
  p.d1 = {x.d1, y.d1};
  p.d2 = {x.d2, y.d2};
  return p;
}

double loop_length(const SimConfig& cfg) {
  // Composite Simpson over one period; deterministic.
  const int n = 20000;  // even
  const double h = 2.0 * M_PI / n;
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    sum += w * path_eval(cfg, i * h).d1.norm();
  }
  return sum * h / 3.0;
}

UnitQuaternion yaw_pitch_quat(double yaw, double pitch) {
  const UnitQuaternion qz(std::cos(0.5 * yaw), 0, 0, std::sin(0.5 * yaw));
  const UnitQuaternion qy(std::cos(0.5 * pitch), 0, std::sin(0.5 * pitch), 0);
  return qz * qy;
}

double smooth5(double s) { return s * s * s * (10.0 + s * (-15.0 + 6.0 * s)); }
double smooth5_d(double s) { return s * s * (30.0 + s * (-60.0 + 30.0 * s)); }

// Body pose and derivatives at time t.
struct BodyState {
  Eigen::Vector3d p, v, a_w;
  UnitQuaternion q;
  Eigen::Vector3d omega_body;
};

class TrajectoryModel {
 public:
  explicit TrajectoryModel(const SimConfig& cfg) : cfg_(cfg) {
    length_ = loop_length(cfg);
    loop_time_ = cfg.speed > 0.0 ? length_ / cfg.speed : std::numeric_limits<double>::infinity();
    u_rate_ = cfg.speed > 0.0 ? 2.0 * M_PI / loop_time_ : 0.0;
  }

  double length() const { return length_; }
  double loop_time() const { return loop_time_; }

  BodyState body(double t) const {
    BodyState b;
    const PathPoint pp = path_eval(cfg_, u_rate_ * t);
    b.p = {pp.pos.x(), pp.pos.y(), cfg_.body_height};
    b.v = {pp.d1.x() * u_rate_, pp.d1.y() * u_rate_, 0.0};
    b.a_w = {pp.d2.x() * u_rate_ * u_rate_, pp.d2.y() * u_rate_ * u_rate_, 0.0};

    double yaw = 0.0, yaw_rate = 0.0;
    if (cfg_.speed > 0.0) {
      yaw = std::atan2(pp.d1.y(), pp.d1.x());
      const double n2 = pp.d1.squaredNorm();
      yaw_rate = (pp.d1.x() * pp.d2.y() - pp.d1.y() * pp.d2.x()) / n2 * u_rate_;
    }
    double pitch = 0.0, pitch_rate = 0.0;
    if (cfg_.pitch_excitation) {
      pitch = cfg_.pitch_amp * std::sin(2.0 * M_PI * cfg_.pitch_freq * t);
      pitch_rate = cfg_.pitch_amp * 2.0 * M_PI * cfg_.pitch_freq *
                   std::cos(2.0 * M_PI * cfg_.pitch_freq * t);
    }
    b.q = yaw_pitch_quat(yaw, pitch);
    // omega for q = Rz(yaw) Ry(pitch): Ry^T e_z yaw_rate + e_y pitch_rate.
    b.omega_body = {-std::sin(pitch) * yaw_rate, pitch_rate, std::cos(pitch) * yaw_rate};
    return b;
  }

 private:
  SimConfig cfg_;
  double length_, loop_time_, u_rate_;
};

// Trot phase offsets: diagonal pairs FL+RR and FR+RL alternate.
constexpr double kGaitOffset[kNumLegs] = {0.0, 0.5, 0.5, 0.0};

struct GaitPhase {
  bool stance;
  long cycle;     // stance/swing cycle index
  double s;       // normalized phase within stance [0,duty) or swing [0,1)
};

GaitPhase gait_phase(const SimConfig& cfg, int leg, double t) {
  const double s = t * cfg.gait_freq + kGaitOffset[leg];
  const double k = std::floor(s);
  const double frac = s - k;
  GaitPhase g;
  g.cycle = static_cast<long>(k);
  if (frac < cfg.duty) {
    g.stance = true;
    g.s = frac / cfg.duty;
  } else {
    g.stance = false;
    g.s = (frac - cfg.duty) / (1.0 - cfg.duty);
  }
  return g;
}

class FootModel {
 public:
  FootModel(const SimConfig& cfg, const TrajectoryModel& traj) : cfg_(cfg), traj_(traj) {}

  // Nominal foothold of a stance cycle: the leg's workspace center projected
  // to the ground at mid-stance.
  Eigen::Vector3d foothold(int leg, long cycle) const {
    const double t_mid = (cycle - kGaitOffset[leg] + 0.5 * cfg_.duty) / cfg_.gait_freq;
    const BodyState b = traj_.body(t_mid);
    const LegGeometry& g = cfg_.legs[leg];
    const Eigen::Vector3d anchor =
        g.hip_offset + Eigen::Vector3d(0, g.side_sign * g.abduction_offset, 0);
    Eigen::Vector3d fh = b.p + rotmat_from_quat(b.q) * anchor;
    fh.z() = 0.0;
    return fh;
  }

  // Slip displacement accumulated for a leg from stance start to time t, and
  // the instantaneous slip velocity at t.
  void slip_at(int leg, double stance_start, double t, Eigen::Vector3d* disp,
               Eigen::Vector3d* vel, bool* active) const {
    disp->setZero();
    vel->setZero();
    *active = false;
    for (const auto& e : cfg_.slip_events) {
      if (e.leg != leg) continue;
      const double lo = std::max(stance_start, e.t_start);
      const double hi = std::min(t, e.t_end);
      if (hi > lo) {
        Eigen::Vector3d v = e.velocity;
        v.z() = 0.0;
        *disp += v * (hi - lo);
        if (t >= e.t_start && t < e.t_end) {
          *vel += v;
          *active = true;
        }
      }
    }
  }

  // World position and velocity of the foot plus the slip label at time t.
  void foot_world(int leg, double t, Eigen::Vector3d* pos, Eigen::Vector3d* vel,
                  bool* slipping) const {
    const GaitPhase ph = gait_phase(cfg_, leg, t);
    if (ph.stance) {
      const double stance_start = (ph.cycle - kGaitOffset[leg]) / cfg_.gait_freq;
      Eigen::Vector3d disp, svel;
      slip_at(leg, stance_start, t, &disp, &svel, slipping);
      *pos = foothold(leg, ph.cycle) + disp;
      *vel = svel;
      return;
    }
    *slipping = false;
    // Swing: from the end position of this cycle's stance to the next
    // cycle's foothold; quintic in xy (zero end velocity), sin^2 lift in z.
    const double stance_start = (ph.cycle - kGaitOffset[leg]) / cfg_.gait_freq;
    const double stance_end = stance_start + cfg_.duty / cfg_.gait_freq;
    Eigen::Vector3d disp, svel;
    bool unused;
    slip_at(leg, stance_start, stance_end, &disp, &svel, &unused);
    const Eigen::Vector3d from = foothold(leg, ph.cycle) + disp;
    const Eigen::Vector3d to = foothold(leg, ph.cycle + 1);
    const double sdur = (1.0 - cfg_.duty) / cfg_.gait_freq;
    const double s = ph.s;
    *pos = from + smooth5(s) * (to - from);
    pos->z() = cfg_.step_height * std::pow(std::sin(M_PI * s), 2);
    *vel = smooth5_d(s) / sdur * (to - from);
    vel->z() = cfg_.step_height * M_PI * std::sin(2.0 * M_PI * s) / sdur;
  }

 private:
  const SimConfig& cfg_;
  const TrajectoryModel& traj_;
};

}  // namespace

SimConfig::SimConfig() {
  const double hx = 0.1805, hy = 0.047;
  legs[kFL] = {{hx, hy, 0.0}, 0.0838, 0.20, 0.21, +1};
  legs[kFR] = {{hx, -hy, 0.0}, 0.0838, 0.20, 0.21, -1};
  legs[kRL] = {{-hx, hy, 0.0}, 0.0838, 0.20, 0.21, +1};
  legs[kRR] = {{-hx, -hy, 0.0}, 0.0838, 0.20, 0.21, -1};
}

std::array<int, kNumLegs> gait_schedule(const SimConfig& cfg, double t) {
  std::array<int, kNumLegs> c;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    c[leg] = gait_phase(cfg, leg, t).stance ? 1 : 0;
  }
  return c;
}

Eigen::Vector3d inverse_kinematics(const LegGeometry& geom, const Eigen::Vector3d& foot_body,
                                   const KinParams& rho) {
  const Eigen::Vector3d h = foot_body - geom.hip_offset;
  const double sd = geom.side_sign * geom.abduction_offset;
  const double rr = std::hypot(h.y(), h.z());
  if (rr < std::abs(sd)) {
    throw std::domain_error("inverse_kinematics: target inside the abduction cylinder");
  }
  const double psi = std::atan2(h.z(), h.y());
  const double off = std::acos(std::clamp(sd / rr, -1.0, 1.0));
  auto wrap = [](double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a < -M_PI) a += 2.0 * M_PI;
    return a;
  };
  const double cand1 = wrap(psi + off);
  const double cand2 = wrap(psi - off);
  const double phi0 = std::abs(cand1) <= std::abs(cand2) ? cand1 : cand2;

  // Into the post-abduction frame; the planar 2-link acts in x-z.
  const double c0 = std::cos(phi0), s0 = std::sin(phi0);
  const double x = h.x();
  const double z = -s0 * h.y() + c0 * h.z();

  const double lt = geom.thigh_length, lc = rho.calf();
  const double dist2 = x * x + z * z;
  const double lo = std::abs(lt - lc), hi = lt + lc;
  if (dist2 < lo * lo * (1.0 - 1e-9) || dist2 > hi * hi * (1.0 + 1e-9)) {
    std::ostringstream os;
    os << "inverse_kinematics: target at distance " << std::sqrt(dist2)
       << " outside reachable annulus (" << lo << ", " << hi << ")";
    throw std::domain_error(os.str());
  }
  const double d = std::clamp((dist2 - lt * lt - lc * lc) / (2.0 * lt * lc), -1.0, 1.0);
  const double phi2 = std::acos(d);  // knee-backward branch
  const double k1 = lt + lc * std::cos(phi2);
  const double k2 = lc * std::sin(phi2);
  const double phi1 = std::atan2(-x, -z) - std::atan2(k2, k1);

  Eigen::Vector3d phi(phi0, wrap(phi1), phi2);
  if (phi.cwiseAbs().maxCoeff() >= M_PI) {
    throw std::domain_error("inverse_kinematics: joint limit exceeded");
  }
  return phi;
}

GroundTruth generate_trajectory(const SimConfig& cfg) {
  if (cfg.imu_rate <= 0 || cfg.leg_rate <= 0 || cfg.cam_rate <= 0) {
    throw std::invalid_argument("sim: rates must be positive");
  }
  if (!(cfg.duty > 0.0 && cfg.duty < 1.0)) {
    throw std::invalid_argument("sim: duty factor must be in (0,1)");
  }
  if (cfg.speed < 0.0) {
    throw std::invalid_argument("sim: speed must be non-negative");
  }

  const TrajectoryModel traj(cfg);
  const FootModel feet(cfg, traj);

  GroundTruth gt;
  gt.true_rho = cfg.true_calf;
  gt.true_bias_a = cfg.true_bias_a;
  gt.true_bias_w = cfg.true_bias_w;
  gt.path_length = traj.length();
  gt.loop_time = traj.loop_time();

  const double duration = cfg.duration > 0.0 ? cfg.duration : traj.loop_time();
  if (!std::isfinite(duration)) {
    throw std::invalid_argument("sim: zero speed needs an explicit duration");
  }
  const double dt = 1.0 / cfg.imu_rate;
  const long n = std::lround(duration * cfg.imu_rate);

  gt.samples.reserve(n + 1);
  for (long i = 0; i <= n; ++i) {
    const double t = i * dt;
    const BodyState b = traj.body(t);
    TruthSample s;
    s.t = t;
    s.p = b.p;
    s.v = b.v;
    s.a_w = b.a_w;
    s.q = b.q;
    s.omega_body = b.omega_body;

    const Eigen::Matrix3d rot = rotmat_from_quat(b.q);
    for (int leg = 0; leg < kNumLegs; ++leg) {
      Eigen::Vector3d fw, fvw;
      bool slipping;
      feet.foot_world(leg, t, &fw, &fvw, &slipping);
      const Eigen::Vector3d foot_body = rot.transpose() * (fw - b.p);
      const KinParams rho(cfg.true_calf(leg));
      Eigen::Vector3d phi;
      try {
        phi = inverse_kinematics(cfg.legs[leg], foot_body, rho);
      } catch (const std::domain_error& e) {
        std::ostringstream os;
        os << "sim: leg " << kLegNames[leg] << " at t=" << t << ": " << e.what();
        throw std::invalid_argument(os.str());
      }
      // v_foot_body = -[w]x g + A^T (v_foot_w - v); joint rates through J^-1.
      const Eigen::Vector3d v_foot_body =
          -b.omega_body.cross(foot_body) + rot.transpose() * (fvw - b.v);
      const Eigen::Matrix3d jac = leg_jacobian(cfg.legs[leg], phi, rho);
      s.phi[leg] = phi;
      s.dphi[leg] = jac.partialPivLu().solve(v_foot_body);
      s.contact[leg] = gait_phase(cfg, leg, t).stance ? 1 : 0;
      s.slip[leg] = (s.contact[leg] && slipping) ? 1 : 0;
    }
    gt.samples.push_back(std::move(s));
  }

  // Landmarks in a band around the path, offset along the outward normal.
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> uu(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> ur(cfg.landmark_band_inner, cfg.landmark_band_outer);
  std::uniform_real_distribution<double> uh(0.0, cfg.landmark_max_height);
  gt.landmarks.reserve(cfg.landmark_count);
  for (int i = 0; i < cfg.landmark_count; ++i) {
    const PathPoint pp = path_eval(cfg, uu(rng));
    Eigen::Vector2d nrm(pp.d1.y(), -pp.d1.x());
    const double nn = nrm.norm();
    nrm = nn > 1e-12 ? Eigen::Vector2d(nrm / nn) : Eigen::Vector2d(1, 0);
    const Eigen::Vector2d xy = pp.pos + ur(rng) * nrm;
    gt.landmarks.emplace_back(xy.x(), xy.y(), uh(rng));
  }
  return gt;
}

std::vector<CamObservation> project_landmarks(const Eigen::Vector3d& p, const UnitQuaternion& q,
                                              const std::vector<Eigen::Vector3d>& landmarks,
                                              const CameraModel& cam) {
  std::vector<CamObservation> out;
  const Eigen::Matrix3d rot_t = rotmat_from_quat(q).transpose();
  for (int id = 0; id < static_cast<int>(landmarks.size()); ++id) {
    const Eigen::Vector3d pc = cam.r_bc.transpose() * (rot_t * (landmarks[id] - p) - cam.p_bc);
    if (pc.z() < cam.min_depth || pc.z() > cam.max_depth) continue;
    const Eigen::Vector2d uv(pc.x() / pc.z(), pc.y() / pc.z());
    if (std::abs(uv.x()) > cam.max_tan || std::abs(uv.y()) > cam.max_tan) continue;
    out.push_back({id, uv});
  }
  return out;
}

Dataset synthesize_sensors(const GroundTruth& truth, const SimConfig& cfg) {
  Dataset d;
  d.header.imu_rate = cfg.imu_rate;
  d.header.leg_rate = cfg.leg_rate;
  d.header.cam_rate = cfg.cam_rate;
  d.header.legs = cfg.legs;
  d.header.camera = cfg.camera;
  d.header.camera.obs_noise_std = cfg.pixel_noise;
  if (!truth.samples.empty()) {
    d.header.init_p = truth.samples.front().p;
    d.header.init_q = truth.samples.front().q;
    d.header.init_v = truth.samples.front().v;
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  auto noise3 = [&](double sigma) {
    return Eigen::Vector3d(n01(rng), n01(rng), n01(rng)) * sigma;
  };

  const double dt = 1.0 / cfg.imu_rate;
  const double sa = cfg.imu_noise.sigma_a / std::sqrt(dt);  // density to per-sample std
  const double sw = cfg.imu_noise.sigma_w / std::sqrt(dt);
  const Eigen::Vector3d gravity = d.header.gravity_w;

  // Camera times snapped to the shared 500 Hz tick grid.
  std::vector<long> cam_ticks;
  const long n_samples = static_cast<long>(truth.samples.size());
  for (long k = 0;; ++k) {
    const long tick = std::lround(k / cfg.cam_rate * cfg.imu_rate);
    if (tick >= n_samples) break;
    cam_ticks.push_back(tick);
  }
  size_t next_cam = 0;

  for (long i = 0; i < n_samples; ++i) {
    const TruthSample& s = truth.samples[i];
    const Eigen::Matrix3d rot_t = rotmat_from_quat(s.q).transpose();

    ImuRecord imu;
    imu.t = s.t;
    imu.accel = rot_t * (s.a_w + gravity) + truth.true_bias_a + noise3(sa);
    imu.gyro = s.omega_body + truth.true_bias_w + noise3(sw);
    d.imu.push_back(imu);

    LegRecord leg;
    leg.t = s.t;
    for (int l = 0; l < kNumLegs; ++l) {
      leg.phi[l] = s.phi[l] + noise3(cfg.joint_noise_phi);
      leg.dphi[l] = s.dphi[l] + noise3(cfg.joint_noise_dphi);
      leg.contact[l] = s.contact[l];
    }
    d.leg.push_back(leg);

    TruthRecord tr;
    tr.t = s.t;
    tr.p = s.p;
    tr.q = s.q;
    tr.v = s.v;
    tr.rho = truth.true_rho;
    tr.contact = s.contact;
    tr.slip = s.slip;
    d.truth.push_back(tr);

    if (next_cam < cam_ticks.size() && cam_ticks[next_cam] == i) {
      ++next_cam;
      CamRecord cr;
      cr.t = s.t;
      cr.obs = project_landmarks(s.p, s.q, truth.landmarks, d.header.camera);
      for (auto& o : cr.obs) {
        o.uv += Eigen::Vector2d(n01(rng), n01(rng)) * cfg.pixel_noise;
      }
      d.cam.push_back(std::move(cr));
    }
  }
  return d;
}

Dataset simulate(const SimConfig& cfg) {
  return synthesize_sensors(generate_trajectory(cfg), cfg);
}

}  // namespace vilo
