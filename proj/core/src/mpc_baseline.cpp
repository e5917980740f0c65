#include "gaitlab/mpc_baseline.hpp"

#include "gaitlab/kinematics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace gaitlab::mpc {

void GaitScheduleConfig::validate() const {
  for (int i = 0; i < kNumLegs; ++i) {
    const auto li = static_cast<std::size_t>(i);
    if (!(duty_factor[li] > 0.0 && duty_factor[li] <= 1.0))
      throw std::invalid_argument("gait '" + name + "': duty factor must be in (0, 1]");
    if (!(initial_phase[li] >= 0.0 && initial_phase[li] < 1.0))
      throw std::invalid_argument("gait '" + name + "': initial phase must be in [0, 1)");
  }
}

double GaitScheduleConfig::stance_duration(double v) const {
  const double d = stance_law.duration(v);
  if (!(d > 0.0))
    throw std::invalid_argument("gait '" + name + "': nonpositive stance duration at v = " +
                                std::to_string(v) + " m/s");
  return d;
}

double GaitScheduleConfig::period(double v) const { return stance_duration(v) / duty_factor[0]; }

GaitScheduleConfig GaitScheduleConfig::walk() {
  GaitScheduleConfig g;
  g.name = "walk";
  g.duty_factor = {0.8, 0.8, 0.8, 0.8};
  g.initial_phase = {0.0, 0.25, 0.5, 0.0};
  g.stance_law = {-0.5, 0.75};
  g.initial_swing = {false, false, false, true};
  g.min_speed = 0.1;
  g.max_speed = 0.7;
  return g;
}

GaitScheduleConfig GaitScheduleConfig::trot() {
  GaitScheduleConfig g;
  g.name = "trot";
  g.duty_factor = {0.6, 0.6, 0.6, 0.6};
  g.initial_phase = {0.9, 0.0, 0.0, 0.9};
  g.stance_law = {-0.15, 0.325};
  g.initial_swing = {true, false, false, true};
  g.min_speed = 0.5;
  g.max_speed = 1.5;
  return g;
}

GaitScheduleConfig GaitScheduleConfig::bounce() {
  GaitScheduleConfig g;
  g.name = "bounce";
  g.duty_factor = {0.35, 0.35, 0.35, 0.35};
  g.initial_phase = {0.0, 0.0, 0.0, 0.0};
  g.stance_law = {0.0, 0.04};
  g.initial_swing = {false, false, false, false};
  g.min_speed = 1.0;
  g.max_speed = 2.0;
  return g;
}

GaitScheduleConfig GaitScheduleConfig::by_name(const std::string& name) {
  if (name == "walk") return walk();
  if (name == "trot") return trot();
  if (name == "bounce") return bounce();
  throw std::invalid_argument("unknown gait '" + name + "' (walk, trot, bounce)");
}

GaitPhaseState schedule_state(const GaitScheduleConfig& cfg, double v_target, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("schedule: t must be >= 0");
  cfg.validate();
  GaitPhaseState s;
  const double stance = cfg.stance_duration(v_target);
  s.cycle_period = stance / cfg.duty_factor[0];
  for (int i = 0; i < kNumLegs; ++i) {
    const auto li = static_cast<std::size_t>(i);
    const double d = cfg.duty_factor[li];
    const double period = stance / d;
    double phi = t / period + cfg.initial_phase[li];
    phi -= std::floor(phi);
    s.cycle_phase[li] = phi;
    if (cfg.initial_swing[li]) {
      const double sw = 1.0 - d;
      if (phi < sw) {
        s.mode[li] = LegMode::Swing;
        s.phase[li] = phi / sw;
      } else {
        s.mode[li] = LegMode::Stance;
        s.phase[li] = (phi - sw) / d;
      }
    } else if (phi < d) {
      s.mode[li] = LegMode::Stance;
      s.phase[li] = phi / d;
    } else {
      s.mode[li] = LegMode::Swing;
      s.phase[li] = (phi - d) / (1.0 - d);
    }
  }
  return s;
}

std::array<LegMode, kNumLegs> schedule_tick(const GaitScheduleConfig& cfg, double v_target,
                                            double t) {
  return schedule_state(cfg, v_target, t).mode;
}

double support_fraction(const GaitScheduleConfig& cfg, double v_target, int samples) {
  const double period = cfg.period(v_target);
  int support = 0;
  for (int k = 0; k < samples; ++k) {
    const auto m = schedule_tick(cfg, v_target, period * (k + 0.5) / samples);
    if (std::any_of(m.begin(), m.end(), [](LegMode x) { return x == LegMode::Stance; })) ++support;
  }
  return static_cast<double>(support) / samples;
}

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Mat3 yaw_rotation(const Quat& q) {
  const double yaw = roll_pitch_yaw(q).z();
  return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
}

}  // namespace

StanceResult stance_force_control(const RobotModel& model, const dynamics::SimState& state,
                                  const std::array<bool, kNumLegs>& stance, double v_target,
                                  double mass, double friction, const StanceGains& g,
                                  double support_scale) {
  StanceResult out;
  std::vector<int> legs;
  for (int i = 0; i < kNumLegs; ++i)
    if (stance[static_cast<std::size_t>(i)]) legs.push_back(i);
  if (legs.empty()) return out;

  const Mat3 R = state.base_orientation.toRotationMatrix();
  const Vec3 rpy = roll_pitch_yaw(state.base_orientation);
  const Vec3 v_w = R * state.base_lin_vel;
  const Vec3 w_w = R * state.base_ang_vel;
  const Vec3 v_des = yaw_rotation(state.base_orientation) * Vec3(v_target, 0.0, 0.0);
  const double mass_ratio = mass / 12.0;

  Vec3 force;
  force.head<2>() = g.kv * mass_ratio * (v_des - v_w).head<2>();
  force.z() = support_scale * mass * kGravity + g.kp_z * mass_ratio * (g.height - state.base_position.z()) -
              g.kd_z * mass_ratio * v_w.z();
  const Vec3 moment = R * Vec3(-g.kp_att * rpy.x(), -g.kp_att * rpy.y(), -0.5 * g.kp_att * rpy.z()) -
                      g.kd_att * w_w;

  Eigen::Matrix<double, 6, 1> b;
  b << force, moment;
  Eigen::Matrix<double, 6, 1> w;
  w << 1.0, 1.0, 1.0, g.moment_weight, g.moment_weight, g.moment_weight;

  // Weighted least squares over the active feet; a foot asked to pull on the
  // ground is dropped and the rest re-solved.
  std::vector<Vec3> f_leg(legs.size(), Vec3::Zero());
  std::vector<bool> active(legs.size(), true);
  for (std::size_t pass = 0; pass < legs.size(); ++pass) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < legs.size(); ++k)
      if (active[k]) idx.push_back(k);
    if (idx.empty()) break;
    const auto n = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd A(6, 3 * n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const int i = legs[idx[static_cast<std::size_t>(k)]];
      const auto& leg = model.legs[static_cast<std::size_t>(i)];
      const Vec3 r = R * kinematics::foot_in_body(leg, kinematics::leg_joints(state.q, i));
      A.block<3, 3>(0, 3 * k).setIdentity();
      A.block<3, 3>(3, 3 * k) = skew(r);
    }
    const Eigen::MatrixXd WA = w.asDiagonal() * A;
    const Eigen::MatrixXd H =
        WA.transpose() * WA + g.regularization * Eigen::MatrixXd::Identity(3 * n, 3 * n);
    const Eigen::VectorXd f = H.ldlt().solve(WA.transpose() * (w.asDiagonal() * b));
    bool dropped = false;
    for (Eigen::Index k = 0; k < n; ++k) {
      const std::size_t slot = idx[static_cast<std::size_t>(k)];
      f_leg[slot] = f.segment<3>(3 * k);
      if (f_leg[slot].z() < 0.0 && n > 1) {
        active[slot] = false;
        f_leg[slot].setZero();
        dropped = true;
      }
    }
    if (!dropped) break;
  }

  const double mu = std::max(friction, 0.0);
  for (std::size_t k = 0; k < legs.size(); ++k) {
    const int i = legs[k];
    Vec3 fi = f_leg[k];
    fi.z() = std::clamp(fi.z(), 0.0, g.max_normal);
    const double cap = mu * fi.z();
    const double t = fi.head<2>().norm();
    if (t > cap) fi.head<2>() *= (t > 0.0 ? cap / t : 0.0);
    out.forces[static_cast<std::size_t>(i)] = fi;
    const LegVector ql = kinematics::leg_joints(state.q, i);
    const Mat3 J = kinematics::foot_jacobian(model.legs[static_cast<std::size_t>(i)], ql);
    if (Eigen::JacobiSVD<Mat3>(J).singularValues().minCoeff() < 0.02) out.near_singular = true;
    out.tau.segment<3>(3 * i) = -J.transpose() * (R.transpose() * fi);
  }
  return out;
}

Vec3 swing_trajectory(const RobotModel& model, int leg, double phase, double v_target,
                      double stance_duration, double ground_z, const SwingConfig& cfg,
                      const std::optional<Vec3>& lift_off) {
  if (leg < 0 || leg >= kNumLegs) throw std::out_of_range("swing_trajectory: bad leg index");
  const auto& g = model.legs[static_cast<std::size_t>(leg)];
  const double s = std::clamp(phase, 0.0, 1.0);
  const double half_step = 0.5 * v_target * stance_duration;
  const Vec3 land(g.hip.x() + half_step, g.hip.y() + g.abduction_offset, ground_z);
  const Vec3 start =
      lift_off ? *lift_off : Vec3(g.hip.x() - half_step, g.hip.y() + g.abduction_offset, ground_z);
  const double blend = s * s * (3.0 - 2.0 * s);
  Vec3 p = start + blend * (land - start);
  p.z() += 16.0 * s * s * (1.0 - s) * (1.0 - s) * cfg.step_height;
  return p;
}

ControllerConfig ControllerConfig::for_gait(const GaitScheduleConfig& gait) {
  ControllerConfig c;
  c.gait = gait;
  if (gait.name == "bounce") {
    c.stance.kd_att = 20.0;
    c.swing.raibert_gain = 0.0;
  } else {
    c.stance.kd_att = 40.0;
  }
  return c;
}

Controller::Controller(RobotModel model, ControllerConfig config, double mass)
    : model_(std::move(model)), config_(std::move(config)), mass_(mass) {
  config_.gait.validate();
  if (!(mass_ > 0.0)) throw std::invalid_argument("controller: mass must be > 0");
}

JointVector Controller::compute(const dynamics::SimState& state, double v_target, double t,
                                double friction) {
  const auto& gait = config_.gait;
  if (v_target != cached_v_) {
    support_scale_ = 1.0 / support_fraction(gait, v_target);
    cached_v_ = v_target;
  }
  const GaitPhaseState gs = schedule_state(gait, v_target, t);
  scheduled_ = gs.mode;
  std::array<bool, kNumLegs> stance{};
  for (int i = 0; i < kNumLegs; ++i)
    stance[static_cast<std::size_t>(i)] = gs.mode[static_cast<std::size_t>(i)] == LegMode::Stance;

  const StanceResult sr = stance_force_control(model_, state, stance, v_target, mass_, friction,
                                               config_.stance, support_scale_);
  near_singular_ = sr.near_singular;
  JointVector tau = sr.tau;

  // Level, yaw-aligned frame centred on the torso origin.
  const Mat3 R = state.base_orientation.toRotationMatrix();
  const Mat3 Ryaw = yaw_rotation(state.base_orientation);
  const Mat3 level_to_body = R.transpose() * Ryaw;
  const double ground_z = -state.base_position.z() + model_.foot_radius;
  const double stance_time = gait.stance_duration(v_target);
  const Vec3 v_level = Ryaw.transpose() * (R * state.base_lin_vel);

  for (int i = 0; i < kNumLegs; ++i) {
    const auto li = static_cast<std::size_t>(i);
    const auto& leg = model_.legs[li];
    const LegVector ql = kinematics::leg_joints(state.q, i);
    if (gs.mode[li] == LegMode::Stance) {
      const Vec3 foot_b = kinematics::foot_in_body(leg, ql);
      const Vec3 pull(0.0, config_.stance_lateral_kp * (leg.hip.y() + leg.abduction_offset - foot_b.y()), 0.0);
      tau.segment<3>(3 * i) += kinematics::foot_jacobian(leg, ql).transpose() * pull -
                               config_.stance_kd * state.q_dot.segment<3>(3 * i);
      lift_off_[li].reset();
      previous_[li] = LegMode::Stance;
      continue;
    }
    if (first_ || previous_[li] == LegMode::Stance || !lift_off_[li]) {
      const Vec3 foot_b = kinematics::foot_in_body(leg, ql);
      lift_off_[li] = level_to_body.transpose() * foot_b;
      lift_off_[li]->z() = ground_z;
    }
    previous_[li] = LegMode::Swing;
    Vec3 target = swing_trajectory(model_, i, gs.phase[li], v_target, stance_time, ground_z,
                                   config_.swing, lift_off_[li]);
    target.x() += config_.swing.raibert_gain * (v_level.x() - v_target) * gs.phase[li];
    target.y() += config_.swing.raibert_gain * v_level.y() * gs.phase[li];
    const Vec3 target_hip = level_to_body * target - leg.hip;
    const auto ik = kinematics::inverse(model_, i, target_hip, ql);
    if (ik.near_singular) near_singular_ = true;
    tau.segment<3>(3 * i) = config_.swing_kp * (ik.q - ql) -
                            config_.swing_kd * state.q_dot.segment<3>(3 * i);
  }
  first_ = false;
  return tau.cwiseMax(-model_.torque_limit).cwiseMin(model_.torque_limit);
}

BaselineRun run_baseline(const RobotModel& model, const GaitScheduleConfig& gait, double v_target,
                         const BaselineRunConfig& run, const ControllerConfig* overrides) {
  ControllerConfig cc = overrides ? *overrides : ControllerConfig::for_gait(gait);
  cc.gait = gait;
  dynamics::Simulator sim(model, dynamics::SimConfig{});
  const auto terrain = terrain::flat_field();
  const EnvParams params;  // nominal robot
  Controller ctrl(model, cc, model.torso_mass);
  dynamics::SimState s = sim.standing_state(terrain);

  BaselineRun out;
  out.gait = gait.name;
  out.v_target = v_target;
  const double dt = sim.config().dt;
  const int substeps = 4;
  const int total = static_cast<int>(std::lround(run.duration / dt));
  const int warm = static_cast<int>(std::lround(run.warmup / dt));
  Vec3 p_start = s.base_position;
  double e_raw = 0.0, e_pos = 0.0, p_acc = 0.0;
  int flight = 0, window_ticks = 0;
  for (int k = 0; k < total; ++k) {
    const double t = k * dt;
    if (k == warm) {
      p_start = s.base_position;
      e_raw = e_pos = 0.0;
    }
    JointVector tau = ctrl.compute(s, v_target, t, params.friction);
    try {
      s = sim.step(s, tau, terrain, params);
    } catch (const dynamics::SimulationDiverged&) {
      out.fell = true;
      break;
    }
    e_raw += s.last_power * dt;
    e_pos += dynamics::metered_power(tau, s.q_dot, dynamics::PowerMetering::PositiveOnly) * dt;
    p_acc += s.last_power;
    if ((k + 1) % substeps == 0) {
      ContactFlags sched{};
      for (int i = 0; i < kNumLegs; ++i)
        sched[static_cast<std::size_t>(i)] =
            ctrl.scheduled()[static_cast<std::size_t>(i)] == LegMode::Stance;
      out.scheduled.push_back(sched);
      out.realized.push_back(s.foot_contact);
      out.speeds.push_back((s.base_orientation.toRotationMatrix() * s.base_lin_vel).x());
      out.powers.push_back(p_acc / substeps);
      p_acc = 0.0;
      if (k >= warm) {
        ++window_ticks;
        if (std::none_of(s.foot_contact.begin(), s.foot_contact.end(), [](bool c) { return c; }))
          ++flight;
      }
    }
    const Vec3 rpy = roll_pitch_yaw(s.base_orientation);
    if (s.base_position.z() < run.fall_height || std::abs(rpy.x()) > run.fall_tilt ||
        std::abs(rpy.y()) > run.fall_tilt) {
      out.fell = true;
      break;
    }
  }
  const double window = std::max(run.duration - run.warmup, dt);
  const double dist = (s.base_position - p_start).head<2>().norm();
  out.realized_speed = out.fell ? 0.0 : dist / window;
  const double d = std::max(dist, 0.01);
  out.energy_per_meter_raw = e_raw / d;
  out.energy_per_meter_positive = e_pos / d;
  out.flight_fraction = window_ticks > 0 ? static_cast<double>(flight) / window_ticks : 0.0;
  return out;
}

}  // namespace gaitlab::mpc
