#pragma once

#include "gaitlab/learn.hpp"
#include "gaitlab/rollout.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace gaitlab::distill {

/// Expert speeds, m/s.
inline constexpr std::array<double, 3> kModes{0.375, 0.9, 1.5};

/// Linear interpolation weights over the two nearest modes; one-hot at a mode.
/// Rejects v outside [0.375, 1.5].
Eigen::Vector3d encode_velocity(double v);
/// Inverse of encode_velocity: the weighted mean of the mode speeds.
double decode_velocity(const Eigen::Vector3d& code);

/// Imitation weight at `epoch`: 1 at epoch 0, falling linearly to exactly 0 at
/// total_epochs / 2 and staying there.
double distill_weight(int epoch, int total_epochs);

enum class TargetStates { StudentVisited, ExpertVisited };
TargetStates target_states_from_string(const std::string& s);
std::string to_string(TargetStates t);

struct DistillConfig {
  learn::TrainConfig train{};  // iterations is the whole epoch budget
  learn::AgentConfig student = default_student();
  int resample_every = 200;       // control steps between v_target draws
  double mode_probability = 0.25;  // chance a draw lands exactly on a mode
  bool distill = true;             // false: naive multi-task baseline (RL only)
  TargetStates targets = TargetStates::StudentVisited;
  int expert_states = 512;  // per mode and iteration, ExpertVisited only

  static learn::AgentConfig default_student();
  void validate() const;
};

/// The three mode experts (phase-1 agents reading e_t), slow to fast.
struct Experts {
  std::array<learn::Agent, 3> agents;
  /// Throws std::runtime_error naming the first missing file.
  static Experts load(const std::array<std::string, 3>& paths);
  void validate() const;
  const learn::Agent& at_mode(int m) const { return agents[static_cast<std::size_t>(m)]; }
};

/// Index of the mode equal to v (within 1e-9), or -1.
int mode_index(double v);

/// Draws a target speed: a uniformly chosen mode with mode_probability,
/// otherwise uniform on [0.375, 1.5].
double sample_velocity(Rng& rng, double mode_probability);

/// Expert-visited supervision: raw student inputs with the expert's action mean.
struct ExpertStates {
  std::vector<learn::Vector> steps;                  // raw obs + previous action
  std::vector<std::vector<learn::Vector>> history;   // raw steps, most recent last
  std::vector<Eigen::Vector3d> vcodes;
  std::vector<JointVector> targets;
  std::size_t size() const { return targets.size(); }
  void append(const ExpertStates& o);
};

/// Rolls out the expert deterministically at v and records n states
/// (new episodes start on termination).
ExpertStates collect_expert_states(const learn::Agent& expert, const env::EnvConfig& env_config,
                                   double v, int n, std::uint64_t seed);

/// Student inputs for a set of expert states.
learn::Agent::Inputs student_inputs(const learn::Agent& student, const ExpertStates& s);

/// Mean squared L2 distance between the student's action means and the targets.
double imitation_error(const learn::Agent& student, const ExpertStates& s);

/// Supervised passes over the expert states (weighted L2 on action means).
/// Returns the mean loss of the last pass.
double imitation_update(learn::Agent& student, nn::Adam& opt, const ExpertStates& s, double weight,
                        int epochs, int minibatch, double max_grad_norm, Rng& rng);

struct DistillResult {
  learn::Agent initial;
  learn::Agent final;
  std::vector<learn::IterationStats> telemetry;
};

struct DistillOptions {
  std::string run_dir;
  std::function<void(const learn::IterationStats&)> on_iteration;
};

/// Annealed distillation from the experts plus PPO at sampled speeds.
DistillResult train_conditioned(const Experts& experts, const env::EnvConfig& env_config,
                                const DistillConfig& cfg, const DistillOptions& options = {});

/// Piecewise-constant v_target schedule: (t_start, v) pairs, sorted by time.
struct VelocitySchedule {
  std::vector<std::pair<double, double>> segments;
  double at(double t) const;
  double duration_hint() const;  // start of the last segment
  void validate() const;
  static VelocitySchedule constant(double v);
  static VelocitySchedule step(double v0, double v1, double t_switch);
  /// CSV with a header line, columns t_start_s,v_target. Errors carry line numbers.
  static VelocitySchedule read_csv(std::istream& is);
};

struct SegmentTracking {
  double t_start = 0.0;
  double t_end = 0.0;
  double v_target = 0.0;
  double realized = 0.0;  // x displacement / time over the segment after a settle time
  bool within(double tolerance) const;
};

struct TransitionResult {
  rollout::EpisodeResult episode;
  std::vector<SegmentTracking> segments;
};

/// Runs one episode while stepping v_target through the schedule.
TransitionResult eval_transition(const learn::Agent& policy, const env::EnvConfig& env_config,
                                 const VelocitySchedule& schedule, std::uint64_t seed,
                                 int max_steps = 0, double settle = 1.0,
                                 std::ostream* trajectory_log = nullptr);

}  // namespace gaitlab::distill
