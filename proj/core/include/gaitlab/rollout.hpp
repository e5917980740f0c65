#pragma once

#include "gaitlab/learn.hpp"
#include "gaitlab/phase2.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace gaitlab::rollout {

/// Runs one agent on one environment, tracking the previous action and the
/// history window. With an adaptation module attached the extrinsics come from
/// the history instead of the encoder.
class PolicyRunner {
 public:
  explicit PolicyRunner(const learn::Agent& agent, const phase2::AdaptationModule* adapt = nullptr);

  void reset();
  /// Deterministic (mean) action unless `rng` is given.
  env::Action act(const env::Env& e, Rng* rng = nullptr,
                  const std::optional<Eigen::Vector3d>& vcode = std::nullopt);
  /// Must be called with the action actually applied, after env.step().
  void record(const env::Action& applied);

  const learn::Vector& last_step_raw() const { return last_step_; }
  const std::vector<learn::Vector>& history() const { return history_; }
  const learn::Vector& last_latent() const { return last_z_; }

 private:
  const learn::Agent* agent_;
  const phase2::AdaptationModule* adapt_;
  JointVector prev_action_ = JointVector::Zero();
  std::vector<learn::Vector> history_;
  learn::Vector last_step_;
  learn::Vector last_z_;
};

struct EpisodeResult {
  double episode_return = 0.0;
  int steps = 0;
  bool terminated = false;  // failure, not step limit
  double distance = 0.0;    // planar displacement of the torso, m
  double forward_distance = 0.0;  // displacement along world x, m
  double duration = 0.0;    // s
  double mean_speed = 0.0;  // distance / duration
  double forward_speed = 0.0;  // forward_distance / duration
  double mean_forward_velocity = 0.0;
  double energy_raw = 0.0;       // J, integral of sum tau*qdot
  double energy_positive = 0.0;  // J, per-joint negative power clamped to zero
  double mean_abs_joint_speed = 0.0;
  double contact_switch_rate = 0.0;  // switches per control step
  std::vector<ContactFlags> contacts;
  std::vector<double> speeds;   // forward velocity per step
  std::vector<double> powers;   // mean power per step
  std::vector<double> v_targets;
};

struct EpisodeOptions {
  int max_steps = 0;  // 0: env limit
  bool deterministic = true;
  std::uint64_t action_seed = 0;
  // Velocity schedule for conditioned agents: v_target as a function of time.
  std::function<double(double t)> v_schedule;
  std::function<Eigen::Vector3d(double v)> velocity_code;
  std::ostream* trajectory_log = nullptr;
  std::function<void(const env::Env&, const env::StepResult&)> on_step;
};

EpisodeResult run_episode(env::Env& e, const learn::Agent& agent, std::uint64_t seed,
                          const EpisodeOptions& options = {},
                          const phase2::AdaptationModule* adapt = nullptr);

struct EvalSummary {
  std::vector<EpisodeResult> episodes;
  double mean_return = 0.0;
  double mean_speed = 0.0;  // mean forward_speed
  int survived = 0;  // episodes without termination
  int survived_and_fast = 0;  // survived with mean forward speed above the threshold
};

/// Evaluates on seeds base_seed + k, k = 0..n-1.
EvalSummary evaluate(const env::EnvConfig& config, const learn::Agent& agent, int n,
                     std::uint64_t base_seed, double speed_threshold = 0.15,
                     const EpisodeOptions& options = {},
                     const phase2::AdaptationModule* adapt = nullptr);

}  // namespace gaitlab::rollout
