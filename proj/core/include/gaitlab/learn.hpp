#pragma once

#include "gaitlab/env.hpp"
#include "gaitlab/nn.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gaitlab::learn {

using nn::Matrix;
using nn::Vector;

inline constexpr int kLatentDim = 8;
inline constexpr int kVelocityCodeDim = 3;
inline constexpr int kHistorySteps = 20;
// Observation plus previous action, the unit of both the policy input and the history.
inline constexpr int kStepDim = env::kObsDim + env::kActionDim;
inline constexpr int kHistoryDim = kHistorySteps * kStepDim;

/// Where the 8-dim extrinsics come from: the encoder over e_t (phase 1), or an
/// adaptation network over the state-action history.
enum class LatentSource { Factors, History };

struct AgentConfig {
  std::vector<int> hidden{128, 128, 128};
  std::vector<int> latent_hidden{64, 32};
  nn::Activation activation = nn::Activation::Elu;
  LatentSource latent = LatentSource::Factors;
  bool velocity_code = false;
  double init_std = 0.2;
  double min_std = 0.2;
};

/// Policy, critic and latent network with their input normalizers.
class Agent {
 public:
  struct Inputs {
    Matrix step;    // normalized obs + previous action, kStepDim x N
    Matrix latent;  // normalized e_t or history, latent_input_dim() x N
    Matrix vcode;   // kVelocityCodeDim x N, or 0 x N
  };

  struct Cache {
    nn::Mlp::Cache latent, policy, value;
    Matrix z;
  };

  Agent() = default;
  Agent(AgentConfig config, std::uint64_t seed);

  const AgentConfig& config() const { return config_; }
  int latent_input_dim() const;
  int policy_input_dim() const;

  Matrix latent(const Matrix& latent_in) const;
  Matrix action_mean(const Inputs& in) const;
  /// Action mean with externally supplied extrinsics (in.latent is ignored).
  Matrix action_mean_z(const Inputs& in, const Matrix& z) const;
  Vector value(const Inputs& in) const;
  /// Mean and value in one pass, caching intermediates for backward().
  void forward(const Inputs& in, Cache& cache, Matrix& mean, Vector& value) const;
  /// d_mean: 12 x N, d_value: N. Accumulates into a flat gradient laid out like flat_params().
  void backward(const Inputs& in, const Cache& cache, const Matrix& d_mean, const Vector& d_value,
                Vector& grad) const;

  Vector stddev() const { return log_std.array().exp().matrix(); }
  void project_std();

  Eigen::Index num_params() const;
  Vector flat_params() const;
  void set_flat_params(const Vector& p);

  /// Log-density of `actions` under N(mean, diag(std^2)), per column.
  Vector log_prob(const Matrix& mean, const Matrix& actions) const;

  nn::RunningNorm step_norm;
  nn::RunningNorm factor_norm;
  nn::Mlp latent_net;
  nn::Mlp policy;
  nn::Mlp value_net;
  Vector log_std;

 private:
  Matrix policy_input(const Inputs& in, const Matrix& z) const;
  AgentConfig config_{};
};

enum class ValueClip { Relative, Absolute, None };

ValueClip value_clip_from_string(const std::string& s);
std::string to_string(ValueClip v);

struct TrainConfig {
  int iterations = 15000;
  int num_envs = 8;
  int horizon = 12500;  // per env; batch = num_envs * horizon
  int minibatches = 4;
  int epochs = 4;
  nn::Adam::Config adam{};
  double ratio_clip = 0.2;  // ratio clipped to [1 - c, 1 + c]
  double value_clip = 0.2;
  ValueClip value_clip_mode = ValueClip::Relative;
  double value_clip_floor = 0.1;  // minimum half-width in relative mode
  double value_loss_weight = 0.5;
  double gamma = 0.998;
  double lambda = 0.95;
  double entropy_coef = 0.0;
  double max_grad_norm = 1.0;  // 0 disables
  double reward_scale = 0.02;  // applied to rewards seen by the critic only
  bool normalize_advantages = true;
  std::uint64_t seed = 1;
  int checkpoint_every = 0;  // 0: only initial and final
  int eval_every = 0;

  int batch_size() const { return num_envs * horizon; }
  void validate() const;
};

/// GAE over one contiguous sequence. `dones[t]` cuts the trace after step t;
/// `last_value` bootstraps the final step when it is not done.
void gae(const Vector& rewards, const Vector& values, const std::vector<bool>& dones,
         double last_value, double gamma, double lambda, Vector& advantages, Vector& returns);

struct RolloutBatch {
  Agent::Inputs inputs;
  Matrix actions;
  Vector log_probs;
  Vector values;  // critic output at collection time, in scaled reward units
  Vector rewards;  // scaled, timeouts already bootstrapped
  std::vector<bool> dones;
  Vector advantages;
  Vector returns;
  // Optional imitation targets (12 x N) with a per-sample weight mask.
  Matrix expert_actions;
  Vector expert_mask;
  // Unnormalized step vectors and e_t, for updating the input statistics.
  Matrix raw_steps;
  Matrix raw_factors;

  Eigen::Index size() const { return actions.cols(); }
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double imitation_loss = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double explained_variance = 0.0;
  double grad_norm = 0.0;
  int skipped = 0;  // minibatches dropped for a non-finite loss
};

struct PpoLossTerms {
  double surrogate = 0.0;
  double value = 0.0;
  double imitation = 0.0;
  double total = 0.0;
};

/// Loss and gradient of one minibatch; exposed for testing the clipping rules.
PpoLossTerms ppo_loss(const Agent& agent, const RolloutBatch& batch,
                      const std::vector<Eigen::Index>& idx, const TrainConfig& cfg,
                      double imitation_weight, Vector* grad, UpdateStats* stats = nullptr);

UpdateStats ppo_update(Agent& agent, nn::Adam& opt, const RolloutBatch& batch,
                       const TrainConfig& cfg, Rng& rng, double imitation_weight = 0.0);

/// Per-iteration telemetry; penalty series are diagnostics only.
struct IterationStats {
  int iteration = 0;
  long samples = 0;
  double mean_return = 0.0;  // completed episodes this iteration (running when none)
  double mean_length = 0.0;
  int episodes = 0;
  double reward_per_step = 0.0;
  double energy = 0.0;  // mean tau^T qdot per control step
  double torque = 0.0;
  double delta_torque = 0.0;
  double foot_slip = 0.0;
  double joint_speed = 0.0;
  double action = 0.0;
  double joint_speed_abs = 0.0;
  double contact_switch_rate = 0.0;  // per control step
  double forward_speed = 0.0;
  int diverged = 0;
  UpdateStats update;
  double std_mean = 0.0;
  double imitation_weight = 0.0;
};

std::string telemetry_header();
std::string telemetry_row(const IterationStats& s);

/// Interface between the collector and a training scheme (plain PPO, distillation).
struct CollectHooks {
  // Called at every episode start for env `i`; may set v_target on the env.
  std::function<void(int i, env::Env& e)> on_reset;
  // Called before each control step; may change v_target.
  std::function<void(int i, env::Env& e)> before_step;
  // Velocity code for env i (only when the agent is velocity conditioned).
  std::function<Eigen::Vector3d(int i, const env::Env& e)> velocity_code;
  // Imitation target for env i at the current state (empty optional = none).
  std::function<std::optional<JointVector>(int i, const env::Env& e, const Vector& step_raw)>
      expert_action;
};

/// Owns the environments and carries episodes across iterations.
class Collector {
 public:
  Collector(const env::EnvConfig& env_config, int num_envs, std::uint64_t seed);

  RolloutBatch collect(const Agent& agent, int horizon, const TrainConfig& cfg, Rng& rng,
                       IterationStats& stats, const CollectHooks& hooks = {});

  int num_envs() const { return static_cast<int>(envs_.size()); }
  env::Env& env(int i) { return envs_[static_cast<std::size_t>(i)]; }

 private:
  struct Slot {
    JointVector prev_action = JointVector::Zero();
    std::vector<Vector> history;  // raw step vectors, most recent last
    double episode_return = 0.0;
    int episode_length = 0;
    long episodes = 0;
  };
  void start_episode(int i, const CollectHooks& hooks);
  Vector step_raw(int i) const;
  Vector history_input(const Agent& agent, int i) const;

  std::vector<env::Env> envs_;
  std::vector<Slot> slots_;
  std::uint64_t seed_;
  double running_return_ = 0.0;
  bool have_return_ = false;
};

/// Builds the normalized latent input for one step: e_t or the zero-padded history.
Vector history_vector(const nn::RunningNorm& step_norm, const std::vector<Vector>& raw_history);

struct Phase1Result {
  Agent initial;
  Agent final;
  std::vector<IterationStats> telemetry;
};

struct Phase1Options {
  std::string run_dir;  // empty: nothing written
  std::function<void(const IterationStats&)> on_iteration;
};

Phase1Result train_phase1(const env::EnvConfig& env_config, const TrainConfig& cfg,
                          const AgentConfig& agent_config, const Phase1Options& options = {});

/// Agent checkpoint (versioned binary).
void save_agent(const Agent& agent, const std::string& path);
Agent load_agent(const std::string& path);
void write_agent(const Agent& agent, std::ostream& os);
Agent read_agent(std::istream& is);

}  // namespace gaitlab::learn
