#pragma once

#include "gaitlab/dynamics.hpp"
#include "gaitlab/terrain.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gaitlab::env {

inline constexpr int kObsDim = 30;
inline constexpr int kActionDim = 12;
inline constexpr int kFactorDim = 19;

using ObsVector = Eigen::Matrix<double, kObsDim, 1>;
using FactorVector = Eigen::Matrix<double, kFactorDim, 1>;

// Layout of the environment factor vector e_t.
namespace factor_index {
inline constexpr int kPayload = 0;
inline constexpr int kComX = 1;
inline constexpr int kComY = 2;
inline constexpr int kMotorStrength = 3;  // 12 entries
inline constexpr int kFriction = 15;
inline constexpr int kVx = 16;
inline constexpr int kVy = 17;
inline constexpr int kYawRate = 18;
}  // namespace factor_index

/// 12 joint angles, 12 joint velocities, roll, pitch, 4 contact bits.
struct Observation {
  JointVector q = JointVector::Zero();
  JointVector q_dot = JointVector::Zero();
  double roll = 0.0;
  double pitch = 0.0;
  ContactFlags contacts{};

  ObsVector to_vector() const;
};

/// Per-joint offsets from the nominal stance, in radians.
struct Action {
  JointVector delta_q_target = JointVector::Zero();
};

/// |delta| bounds: HAA 0.15, HFE 0.4, KFE 0.4.
const JointVector& action_bounds();
Action clamp_action(const Action& a);

struct RewardConfig {
  double v_target = 0.375;
  double alpha_energy = 0.04;    // alpha_1
  double alpha_forward = 20.0;   // alpha_2
  double alive_scale = 20.0;     // alive bonus c = alive_scale * v_target
  double alive_bonus() const { return alive_scale * v_target; }
};

/// Optional hardware-protection penalties (off by default).
struct ExtraPenalties {
  bool enabled = false;
  double torque = 1e-4;
  double joint_speed = 1e-3;
  double foot_slip = 0.1;
};

struct RewardTerms {
  double forward = 0.0;
  double energy = 0.0;  // -tau^T qdot (before the alpha_1 weight)
  double alive = 0.0;
  double extra = 0.0;
  double total = 0.0;
};

/// r = r_forward + alpha_1 * r_energy + r_alive (+ extra penalties when enabled)
RewardTerms compute_reward(const RewardConfig& cfg, double v_x, double v_y, double yaw_rate,
                           double power);

struct TerminationConfig {
  double min_height = 0.28;  // torso origin above the terrain beneath it
  double max_roll = 0.4;
  double max_pitch = 0.2;
  int max_steps = 1000;
};

struct EnvConfig {
  RobotModel robot = RobotModel::a1_like();
  dynamics::SimConfig sim{};
  int substeps = 4;  // 4 x 2.5 ms = one 100 Hz control tick
  std::string terrain_preset = "desk";
  terrain::FractalParams terrain = terrain::preset("desk");
  double terrain_length = 24.0;
  double terrain_width = 6.0;
  double terrain_cell = 0.05;
  // When set, every episode reuses the field generated from this seed (it is
  // generated once and cached); otherwise each reset seed draws a new field.
  std::optional<std::uint64_t> terrain_seed;
  PerturbationProfile perturbation = PerturbationProfile::normal();
  RewardConfig reward{};
  TerminationConfig termination{};
  ExtraPenalties extra{};
  double velocity_smoothing = 0.2;
  bool energy_average = true;  // average (not sum) tau^T qdot over substeps
  int settle_substeps = 100;
  double initial_jitter = 0.0;  // rad, uniform noise on the initial joint angles

  void set_terrain_preset(const std::string& name);
};

struct StepInfo {
  RewardTerms reward;
  double v_x = 0.0;
  double v_y = 0.0;
  double yaw_rate = 0.0;
  double power = 0.0;  // tau^T qdot averaged (or summed) over substeps
  std::array<double, 8> substep_power{};
  double power_positive = 0.0;  // per-joint negative power clamped to zero, averaged like `power`
  int substeps = 0;
  bool terminated = false;  // failure condition
  bool truncated = false;   // step limit
  bool diverged = false;
  // Auxiliary penalty telemetry; never part of the reward.
  double torque_sq = 0.0;
  double delta_torque_sq = 0.0;
  double foot_slip = 0.0;
  double joint_speed_sq = 0.0;
  double joint_speed_abs = 0.0;
  double action_sq = 0.0;
  int contact_switches = 0;
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// One quadruped episode runner. Exclusively owned by one worker at a time.
class Env {
 public:
  explicit Env(EnvConfig config);

  Observation reset(std::uint64_t seed);
  Observation reset(std::uint64_t seed, const std::string& terrain_preset,
                    const PerturbationProfile& profile);
  StepResult step(const Action& action);

  /// e_t: payload, com x/y, 12 motor strengths, friction, smoothed vx, vy, yaw rate.
  FactorVector factor_vector() const;

  Observation observe() const;
  double height_above_terrain() const;
  bool done() const { return done_; }
  int step_count() const { return steps_; }

  const EnvConfig& config() const { return config_; }
  const dynamics::SimState& state() const { return state_; }
  const EnvParams& params() const { return params_; }
  const terrain::TerrainField& terrain() const { return terrain_; }
  const dynamics::Simulator& simulator() const { return sim_; }
  const Vec3& smoothed_velocity() const { return smoothed_; }
  const JointVector& last_q_target() const { return q_target_; }

  void set_v_target(double v) { config_.reward.v_target = v; }
  void set_reward(const RewardConfig& r) { config_.reward = r; }

  // Test hooks.
  void set_state(const dynamics::SimState& s) { state_ = s; }
  void set_params(const EnvParams& p) { params_ = p; }

 private:
  EnvConfig config_;
  dynamics::Simulator sim_;
  terrain::TerrainField terrain_;
  bool terrain_valid_ = false;
  dynamics::SimState state_;
  EnvParams params_;
  Rng param_rng_{0};
  Vec3 smoothed_ = Vec3::Zero();
  JointVector q_target_ = JointVector::Zero();
  JointVector last_tau_ = JointVector::Zero();
  int steps_ = 0;
  bool done_ = true;
};

/// Per-control-step CSV trajectory log.
class TrajectoryLog {
 public:
  explicit TrajectoryLog(std::ostream& os);
  void record(double t, const dynamics::SimState& s, double v_target, const StepInfo& info);

 private:
  std::ostream& os_;
};

std::string trajectory_log_header();

}  // namespace gaitlab::env
