#include "gaitlab/env.hpp"

#include "gaitlab/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace gaitlab {

PerturbationProfile PerturbationProfile::normal() { return {}; }

PerturbationProfile PerturbationProfile::aggressive() {
  PerturbationProfile p;
  p.name = "aggressive";
  p.friction = {0.05, 4.5};
  p.payload = {0.0, 6.0};
  p.motor_strength = {0.90, 1.10};
  return p;
}

PerturbationProfile PerturbationProfile::none() {
  PerturbationProfile p;
  p.name = "none";
  p.friction = {0.8, 0.8};
  p.kp = {55.0, 55.0};
  p.kd = {0.8, 0.8};
  p.payload = {0.0, 0.0};
  p.com = {0.0, 0.0};
  p.motor_strength = {1.0, 1.0};
  p.resample_prob = 0.0;
  return p;
}

PerturbationProfile PerturbationProfile::by_name(const std::string& name) {
  if (name == "normal") return normal();
  if (name == "aggressive") return aggressive();
  if (name == "none") return none();
  throw std::invalid_argument("unknown perturbation profile '" + name + "'");
}

EnvParams EnvParams::sample(const PerturbationProfile& profile, Rng& rng) {
  EnvParams p;
  p.friction = profile.friction.sample(rng);
  p.gains.kp = profile.kp.sample(rng);
  p.gains.kd = profile.kd.sample(rng);
  p.payload = profile.payload.sample(rng);
  for (int k = 0; k < 3; ++k) p.com_offset[k] = profile.com.sample(rng);
  for (int j = 0; j < kNumJoints; ++j) p.motor_strength[j] = profile.motor_strength.sample(rng);
  p.resample_prob = profile.resample_prob;
  return p;
}

namespace env {

ObsVector Observation::to_vector() const {
  ObsVector v;
  v.segment<kNumJoints>(0) = q;
  v.segment<kNumJoints>(12) = q_dot;
  v[24] = roll;
  v[25] = pitch;
  for (int i = 0; i < kNumLegs; ++i) v[26 + i] = contacts[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  return v;
}

const JointVector& action_bounds() {
  static const JointVector bounds = [] {
    JointVector b;
    for (int leg = 0; leg < kNumLegs; ++leg) b.segment<3>(3 * leg) << 0.15, 0.4, 0.4;
    return b;
  }();
  return bounds;
}

Action clamp_action(const Action& a) {
  if (!a.delta_q_target.allFinite()) throw std::invalid_argument("action: non-finite entry");
  const auto& b = action_bounds();
  return {a.delta_q_target.cwiseMax(-b).cwiseMin(b)};
}

RewardTerms compute_reward(const RewardConfig& cfg, double v_x, double v_y, double yaw_rate,
                           double power) {
  RewardTerms r;
  r.forward = -cfg.alpha_forward * std::abs(v_x - cfg.v_target) - v_y * v_y - yaw_rate * yaw_rate;
  r.energy = -power;
  r.alive = cfg.alive_bonus();
  r.total = r.forward + cfg.alpha_energy * r.energy + r.alive;
  return r;
}

void EnvConfig::set_terrain_preset(const std::string& name) {
  terrain_preset = name;
  terrain = terrain::preset(name);
}

Env::Env(EnvConfig config)
    : config_(std::move(config)), sim_(config_.robot, config_.sim), terrain_(terrain::flat_field()) {
  if (config_.substeps < 1 || config_.substeps > 8)
    throw std::invalid_argument("env: substeps must be in [1, 8]");
  config_.terrain.validate();
}

Observation Env::reset(std::uint64_t seed, const std::string& terrain_preset,
                       const PerturbationProfile& profile) {
  config_.set_terrain_preset(terrain_preset);
  config_.perturbation = profile;
  return reset(seed);
}

Observation Env::reset(std::uint64_t seed) {
  const std::uint64_t tseed =
      config_.terrain_seed ? *config_.terrain_seed : mix_seed(seed, 0x7465727261696eull);
  const auto& tp = config_.terrain;
  const bool same = terrain_valid_ && terrain_.seed() == tseed &&
                    terrain_.params().amplitude == tp.amplitude &&
                    terrain_.params().base_frequency == tp.base_frequency &&
                    terrain_.params().octaves == tp.octaves &&
                    terrain_.params().gain == tp.gain && terrain_.params().lacunarity == tp.lacunarity;
  if (tp.amplitude == 0.0) {
    terrain_ = terrain::flat_field();
    terrain_valid_ = false;
  } else if (!same) {
    const double finest = tp.base_frequency * std::pow(tp.lacunarity, tp.octaves - 1);
    const double cell = std::min(config_.terrain_cell, 0.25 / finest);
    terrain_ = terrain::generate(tp, Vec2(config_.terrain_length, config_.terrain_width), cell, tseed,
                                 Vec2(-2.0, -0.5 * config_.terrain_width));
    terrain_valid_ = true;
  }
  param_rng_ = Rng(mix_seed(seed, 0x706172616d73ull));
  params_ = EnvParams::sample(config_.perturbation, param_rng_);

  state_ = sim_.standing_state(terrain_);
  if (config_.initial_jitter > 0.0) {
    Rng jitter(mix_seed(seed, 0x6a6974746572ull));
    for (int j = 0; j < kNumJoints; ++j)
      state_.q[j] += jitter.uniform(-config_.initial_jitter, config_.initial_jitter);
  }
  q_target_ = config_.robot.nominal_stand_q;
  for (int k = 0; k < config_.settle_substeps; ++k) {
    const JointVector tau = dynamics::pd_torque(q_target_, state_, params_.gains,
                                                params_.motor_strength, config_.robot.torque_limit);
    state_ = sim_.step(state_, tau, terrain_, params_);
  }
  state_.sim_time = 0.0;
  state_.energy_accum = 0.0;
  last_tau_ = state_.tau_applied;
  smoothed_.setZero();
  steps_ = 0;
  done_ = false;
  return observe();
}

Observation Env::observe() const {
  Observation o;
  o.q = state_.q;
  o.q_dot = state_.q_dot;
  const Vec3 rpy = roll_pitch_yaw(state_.base_orientation);
  o.roll = rpy.x();
  o.pitch = rpy.y();
  o.contacts = state_.foot_contact;
  return o;
}

double Env::height_above_terrain() const {
  return state_.base_position.z() -
         terrain_.height_at(state_.base_position.x(), state_.base_position.y());
}

FactorVector Env::factor_vector() const {
  namespace fi = factor_index;
  FactorVector e;
  e[fi::kPayload] = params_.payload;
  e[fi::kComX] = params_.com_offset.x();
  e[fi::kComY] = params_.com_offset.y();
  e.segment<kNumJoints>(fi::kMotorStrength) = params_.motor_strength;
  e[fi::kFriction] = params_.friction;
  e[fi::kVx] = smoothed_.x();
  e[fi::kVy] = smoothed_.y();
  e[fi::kYawRate] = smoothed_.z();
  return e;
}

StepResult Env::step(const Action& action) {
  if (done_) throw ContractViolation("env: step() called on a finished episode; call reset()");
  const Action a = clamp_action(action);
  q_target_ = config_.robot.nominal_stand_q + a.delta_q_target;

  StepResult out;
  auto& info = out.info;
  const ContactFlags before = state_.foot_contact;
  double power_sum = 0.0, positive_sum = 0.0;
  for (int k = 0; k < config_.substeps; ++k) {
    const JointVector tau = dynamics::pd_torque(q_target_, state_, params_.gains,
                                                params_.motor_strength, config_.robot.torque_limit);
    try {
      state_ = sim_.step(state_, tau, terrain_, params_);
    } catch (const dynamics::SimulationDiverged& e) {
      state_ = e.last_valid();
      info.diverged = true;
      break;
    }
    info.substep_power[static_cast<std::size_t>(k)] = state_.last_power;
    power_sum += state_.last_power;
    positive_sum += dynamics::metered_power(tau, state_.q_dot, dynamics::PowerMetering::PositiveOnly);
    info.torque_sq += tau.squaredNorm();
    ++info.substeps;
  }
  const int n = std::max(info.substeps, 1);
  info.power = config_.energy_average ? power_sum / n : power_sum;
  info.power_positive = config_.energy_average ? positive_sum / n : positive_sum;
  info.torque_sq /= n;

  info.v_x = state_.base_lin_vel.x();
  info.v_y = state_.base_lin_vel.y();
  info.yaw_rate = state_.base_ang_vel.z();
  info.reward = compute_reward(config_.reward, info.v_x, info.v_y, info.yaw_rate, info.power);

  // Telemetry.
  info.delta_torque_sq = (state_.tau_applied - last_tau_).squaredNorm();
  last_tau_ = state_.tau_applied;
  info.joint_speed_sq = state_.q_dot.squaredNorm();
  info.joint_speed_abs = state_.q_dot.cwiseAbs().mean();
  info.action_sq = a.delta_q_target.squaredNorm();
  {
    const Mat3 R = state_.base_orientation.toRotationMatrix();
    const Vec3 v_w = R * state_.base_lin_vel;
    const Vec3 w_w = R * state_.base_ang_vel;
    for (int i = 0; i < kNumLegs; ++i) {
      const auto li = static_cast<std::size_t>(i);
      if (state_.foot_contact[li] != before[li]) ++info.contact_switches;
      if (!state_.foot_contact[li]) continue;
      const auto& leg = config_.robot.legs[li];
      const LegVector ql = kinematics::leg_joints(state_.q, i);
      const Vec3 foot_b = kinematics::foot_in_body(leg, ql);
      const Vec3 v = v_w + w_w.cross(R * foot_b) +
                     R * (kinematics::foot_jacobian(leg, ql) * state_.q_dot.segment<3>(3 * i));
      info.foot_slip += v.head<2>().norm();
    }
  }
  if (config_.extra.enabled) {
    info.reward.extra = -(config_.extra.torque * info.torque_sq +
                          config_.extra.joint_speed * info.joint_speed_sq +
                          config_.extra.foot_slip * info.foot_slip);
    info.reward.total += info.reward.extra;
  }

  smoothed_ = config_.velocity_smoothing * Vec3(info.v_x, info.v_y, info.yaw_rate) +
              (1.0 - config_.velocity_smoothing) * smoothed_;

  ++steps_;
  const Vec3 rpy = roll_pitch_yaw(state_.base_orientation);
  const auto& term = config_.termination;
  info.terminated = info.diverged || height_above_terrain() < term.min_height ||
                    std::abs(rpy.x()) > term.max_roll || std::abs(rpy.y()) > term.max_pitch;
  info.truncated = !info.terminated && steps_ >= term.max_steps;
  done_ = info.terminated || info.truncated;

  if (params_.resample_prob > 0.0 && param_rng_.uniform() < params_.resample_prob)
    params_ = EnvParams::sample(config_.perturbation, param_rng_);

  out.obs = observe();
  out.reward = info.reward.total;
  out.done = done_;
  return out;
}

std::string trajectory_log_header() {
  std::string h = "t";
  for (const char* group : {"q", "qd", "tau"})
    for (int j = 0; j < kNumJoints; ++j) h += std::string(",") + group + std::to_string(j);
  h += ",x,y,z,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz";
  for (auto name : kLegNames) h += ",c_" + std::string(name);
  h += ",v_target,r_forward,r_energy,r_alive,r_extra,r_total,power,power_positive,energy";
  return h;
}

TrajectoryLog::TrajectoryLog(std::ostream& os) : os_(os) { os_ << trajectory_log_header() << '\n'; }

void TrajectoryLog::record(double t, const dynamics::SimState& s, double v_target,
                           const StepInfo& info) {
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.9g", v);
    os_ << buf;
  };
  std::snprintf(buf, sizeof buf, "%.6f", t);
  os_ << buf;
  for (int j = 0; j < kNumJoints; ++j) put(s.q[j]);
  for (int j = 0; j < kNumJoints; ++j) put(s.q_dot[j]);
  for (int j = 0; j < kNumJoints; ++j) put(s.tau_applied[j]);
  for (int k = 0; k < 3; ++k) put(s.base_position[k]);
  put(s.base_orientation.w());
  put(s.base_orientation.x());
  put(s.base_orientation.y());
  put(s.base_orientation.z());
  for (int k = 0; k < 3; ++k) put(s.base_lin_vel[k]);
  for (int k = 0; k < 3; ++k) put(s.base_ang_vel[k]);
  for (bool c : s.foot_contact) os_ << (c ? ",1" : ",0");
  put(v_target);
  put(info.reward.forward);
  put(info.reward.energy);
  put(info.reward.alive);
  put(info.reward.extra);
  put(info.reward.total);
  put(info.power);
  put(info.power_positive);
  put(s.energy_accum);
  os_ << '\n';
}

}  // namespace env
}  // namespace gaitlab
