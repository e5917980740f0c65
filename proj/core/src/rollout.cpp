#include "gaitlab/rollout.hpp"

#include <cmath>

namespace gaitlab::rollout {

using learn::Matrix;
using learn::Vector;

PolicyRunner::PolicyRunner(const learn::Agent& agent, const phase2::AdaptationModule* adapt)
    : agent_(&agent), adapt_(adapt) {}

void PolicyRunner::reset() {
  prev_action_.setZero();
  history_.clear();
  last_step_.resize(0);
  last_z_.resize(0);
}

env::Action PolicyRunner::act(const env::Env& e, Rng* rng,
                              const std::optional<Eigen::Vector3d>& vcode) {
  last_step_.resize(learn::kStepDim);
  last_step_ << e.observe().to_vector(), prev_action_;
  learn::Agent::Inputs in;
  in.step = agent_->step_norm.normalize(last_step_);
  Matrix z;
  if (agent_->config().latent == learn::LatentSource::History) {
    z = agent_->latent(learn::history_vector(agent_->step_norm, history_));
  } else if (adapt_) {
    z = adapt_->predict(Matrix(learn::history_vector(agent_->step_norm, history_)));
  } else {
    z = agent_->latent(agent_->factor_norm.normalize(Vector(e.factor_vector())));
  }
  last_z_ = z.col(0);
  if (agent_->config().velocity_code) {
    if (!vcode) throw std::invalid_argument("policy runner: velocity code required");
    in.vcode = *vcode;
  }
  Vector mean = agent_->action_mean_z(in, z).col(0);
  if (rng) {
    const Vector sd = agent_->stddev();
    for (int j = 0; j < env::kActionDim; ++j) mean[j] += sd[j] * rng->normal();
  }
  env::Action a;
  a.delta_q_target = mean;
  return a;
}

void PolicyRunner::record(const env::Action& applied) {
  history_.push_back(last_step_);
  if (history_.size() > static_cast<std::size_t>(learn::kHistorySteps))
    history_.erase(history_.begin());
  prev_action_ = applied.delta_q_target;
}

EpisodeResult run_episode(env::Env& e, const learn::Agent& agent, std::uint64_t seed,
                          const EpisodeOptions& options, const phase2::AdaptationModule* adapt) {
  EpisodeResult r;
  e.reset(seed);
  PolicyRunner runner(agent, adapt);
  Rng rng(options.action_seed);
  std::optional<env::TrajectoryLog> log;
  if (options.trajectory_log) log.emplace(*options.trajectory_log);

  const double control_dt = e.config().sim.dt * e.config().substeps;
  const double sim_dt = e.config().sim.dt;
  const Vec3 p0 = e.state().base_position;
  const int limit = options.max_steps > 0 ? options.max_steps : e.config().termination.max_steps;
  double abs_qd = 0.0, switches = 0.0, vx_sum = 0.0;
  while (!e.done() && r.steps < limit) {
    const double t = r.steps * control_dt;
    std::optional<Eigen::Vector3d> vcode;
    if (options.v_schedule) e.set_v_target(options.v_schedule(t));
    if (options.velocity_code) vcode = options.velocity_code(e.config().reward.v_target);
    const env::Action a =
        env::clamp_action(runner.act(e, options.deterministic ? nullptr : &rng, vcode));
    const env::StepResult s = e.step(a);
    runner.record(a);
    ++r.steps;
    r.episode_return += s.reward;
    for (int k = 0; k < s.info.substeps; ++k)
      r.energy_raw += s.info.substep_power[static_cast<std::size_t>(k)] * sim_dt;
    r.energy_positive +=
        s.info.power_positive * (e.config().energy_average ? s.info.substeps : 1) * sim_dt;
    abs_qd += s.info.joint_speed_abs;
    switches += s.info.contact_switches;
    vx_sum += s.info.v_x;
    r.contacts.push_back(s.obs.contacts);
    r.speeds.push_back(s.info.v_x);
    r.powers.push_back(s.info.power);
    r.v_targets.push_back(e.config().reward.v_target);
    if (log) log->record((r.steps) * control_dt, e.state(), e.config().reward.v_target, s.info);
    if (options.on_step) options.on_step(e, s);
    if (s.info.terminated) r.terminated = true;
  }
  const Vec3 d = e.state().base_position - p0;
  r.distance = d.head<2>().norm();
  r.forward_distance = d.x();
  r.duration = r.steps * control_dt;
  if (r.steps > 0) {
    r.mean_speed = r.distance / r.duration;
    r.forward_speed = r.forward_distance / r.duration;
    r.mean_forward_velocity = vx_sum / r.steps;
    r.mean_abs_joint_speed = abs_qd / r.steps;
    r.contact_switch_rate = switches / r.steps;
  }
  return r;
}

EvalSummary evaluate(const env::EnvConfig& config, const learn::Agent& agent, int n,
                     std::uint64_t base_seed, double speed_threshold,
                     const EpisodeOptions& options, const phase2::AdaptationModule* adapt) {
  if (n <= 0) throw std::invalid_argument("evaluate: need at least one episode");
  EvalSummary s;
  env::Env e(config);
  for (int k = 0; k < n; ++k) {
    EpisodeResult r = run_episode(e, agent, base_seed + static_cast<std::uint64_t>(k), options, adapt);
    s.mean_return += r.episode_return;
    s.mean_speed += r.forward_speed;
    if (!r.terminated) {
      ++s.survived;
      if (r.forward_speed > speed_threshold) ++s.survived_and_fast;
    }
    s.episodes.push_back(std::move(r));
  }
  s.mean_return /= n;
  s.mean_speed /= n;
  return s;
}

}  // namespace gaitlab::rollout
