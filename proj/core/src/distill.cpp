#include "gaitlab/distill.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gaitlab::distill {

using learn::Agent;
using learn::Matrix;
using learn::Vector;

Eigen::Vector3d encode_velocity(double v) {
  if (!(v >= kModes[0] && v <= kModes[2]))
    throw std::invalid_argument("encode_velocity: speed must lie in [0.375, 1.5] m/s");
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  const int k = v <= kModes[1] ? 0 : 1;
  const double lo = kModes[static_cast<std::size_t>(k)], hi = kModes[static_cast<std::size_t>(k + 1)];
  // Snapped to a 2^-40 grid so halfway points such as 1.2 m/s come out exact.
  const double a = std::ldexp(std::round(std::ldexp((v - lo) / (hi - lo), 40)), -40);
  c[k] = 1.0 - a;
  c[k + 1] = a;
  return c;
}

double decode_velocity(const Eigen::Vector3d& code) {
  if ((code.array() < 0.0).any()) throw std::invalid_argument("decode_velocity: negative weight");
  const double s = code.sum();
  if (std::abs(s - 1.0) > 1e-6) throw std::invalid_argument("decode_velocity: weights must sum to 1");
  return (code[0] * kModes[0] + code[1] * kModes[1] + code[2] * kModes[2]) / s;
}

double distill_weight(int epoch, int total_epochs) {
  if (total_epochs <= 0) throw std::invalid_argument("distill_weight: epoch budget must be > 0");
  if (epoch < 0) throw std::invalid_argument("distill_weight: negative epoch");
  const double half = total_epochs / 2.0;
  if (epoch >= half) return 0.0;
  return 1.0 - epoch / half;
}

TargetStates target_states_from_string(const std::string& s) {
  if (s == "student") return TargetStates::StudentVisited;
  if (s == "expert") return TargetStates::ExpertVisited;
  throw std::invalid_argument("unknown distillation state source '" + s + "' (student|expert)");
}

std::string to_string(TargetStates t) {
  return t == TargetStates::StudentVisited ? "student" : "expert";
}

learn::AgentConfig DistillConfig::default_student() {
  learn::AgentConfig c;
  c.latent = learn::LatentSource::History;
  c.velocity_code = true;
  return c;
}

void DistillConfig::validate() const {
  train.validate();
  if (!student.velocity_code) throw std::invalid_argument("distill: student must take a velocity code");
  if (student.latent != learn::LatentSource::History)
    throw std::invalid_argument("distill: student must read the state-action history");
  if (resample_every < 1) throw std::invalid_argument("distill: resample_every must be >= 1");
  if (!(mode_probability >= 0.0 && mode_probability <= 1.0))
    throw std::invalid_argument("distill: mode_probability must lie in [0, 1]");
  if (expert_states < 1) throw std::invalid_argument("distill: expert_states must be >= 1");
}

Experts Experts::load(const std::array<std::string, 3>& paths) {
  Experts e;
  for (std::size_t m = 0; m < 3; ++m) {
    if (!std::filesystem::exists(paths[m]))
      throw std::runtime_error("missing expert checkpoint: " + paths[m]);
    e.agents[m] = learn::load_agent(paths[m]);
  }
  e.validate();
  return e;
}

void Experts::validate() const {
  for (const auto& a : agents) {
    if (a.config().latent != learn::LatentSource::Factors || a.config().velocity_code)
      throw std::invalid_argument("distill: experts must be phase-1 agents reading e_t");
    if (a.policy.num_params() == 0) throw std::invalid_argument("distill: expert is not initialized");
  }
}

int mode_index(double v) {
  for (std::size_t m = 0; m < kModes.size(); ++m)
    if (std::abs(v - kModes[m]) < 1e-9) return static_cast<int>(m);
  return -1;
}

double sample_velocity(Rng& rng, double mode_probability) {
  if (rng.uniform() < mode_probability) return kModes[static_cast<std::size_t>(rng.uniform_int(0, 2))];
  return rng.uniform(kModes[0], kModes[2]);
}

void ExpertStates::append(const ExpertStates& o) {
  steps.insert(steps.end(), o.steps.begin(), o.steps.end());
  history.insert(history.end(), o.history.begin(), o.history.end());
  vcodes.insert(vcodes.end(), o.vcodes.begin(), o.vcodes.end());
  targets.insert(targets.end(), o.targets.begin(), o.targets.end());
}

ExpertStates collect_expert_states(const Agent& expert, const env::EnvConfig& env_config, double v,
                                   int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("collect_expert_states: n must be >= 1");
  env::EnvConfig c = env_config;
  c.reward.v_target = v;
  env::Env e(c);
  rollout::PolicyRunner runner(expert);
  ExpertStates out;
  const Eigen::Vector3d code = encode_velocity(v);
  std::uint64_t episode = 0;
  e.reset(mix_seed(seed, episode));
  while (static_cast<int>(out.size()) < n) {
    if (e.done()) {
      e.reset(mix_seed(seed, ++episode));
      runner.reset();
    }
    out.history.push_back(runner.history());
    const env::Action mean = runner.act(e);
    out.steps.push_back(runner.last_step_raw());
    out.vcodes.push_back(code);
    out.targets.push_back(mean.delta_q_target);
    const env::Action applied = env::clamp_action(mean);
    e.step(applied);
    runner.record(applied);
  }
  return out;
}

Agent::Inputs student_inputs(const Agent& student, const ExpertStates& s) {
  const auto n = static_cast<Eigen::Index>(s.size());
  Agent::Inputs in;
  Matrix raw(learn::kStepDim, n);
  in.latent.resize(student.latent_input_dim(), n);
  in.vcode.resize(learn::kVelocityCodeDim, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    raw.col(k) = s.steps[i];
    in.latent.col(k) = learn::history_vector(student.step_norm, s.history[i]);
    in.vcode.col(k) = s.vcodes[i];
  }
  in.step = student.step_norm.normalize(raw);
  return in;
}

namespace {

Matrix target_matrix(const ExpertStates& s) {
  Matrix t(env::kActionDim, static_cast<Eigen::Index>(s.size()));
  for (std::size_t k = 0; k < s.size(); ++k) t.col(static_cast<Eigen::Index>(k)) = s.targets[k];
  return t;
}

Agent::Inputs select(const Agent::Inputs& in, const std::vector<Eigen::Index>& idx) {
  Agent::Inputs out;
  const auto m = static_cast<Eigen::Index>(idx.size());
  out.step.resize(in.step.rows(), m);
  out.latent.resize(in.latent.rows(), m);
  out.vcode.resize(in.vcode.rows(), m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index j = idx[static_cast<std::size_t>(k)];
    out.step.col(k) = in.step.col(j);
    out.latent.col(k) = in.latent.col(j);
    if (in.vcode.rows() > 0) out.vcode.col(k) = in.vcode.col(j);
  }
  return out;
}

}  // namespace

double imitation_error(const Agent& student, const ExpertStates& s) {
  if (s.size() == 0) throw std::invalid_argument("imitation_error: no states");
  const Matrix mean = student.action_mean(student_inputs(student, s));
  return (mean - target_matrix(s)).colwise().squaredNorm().mean();
}

double imitation_update(Agent& student, nn::Adam& opt, const ExpertStates& s, double weight,
                        int epochs, int minibatch, double max_grad_norm, Rng& rng) {
  if (s.size() == 0 || weight <= 0.0) return 0.0;
  const Agent::Inputs all = student_inputs(student, s);
  const Matrix targets = target_matrix(s);
  const auto n = static_cast<Eigen::Index>(s.size());
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  const Eigen::Index mb = std::clamp<Eigen::Index>(minibatch, 1, n);
  double last = 0.0;
  for (int ep = 0; ep < epochs; ++ep) {
    for (std::size_t i = perm.size() - 1; i > 0; --i)
      std::swap(perm[i], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)))]);
    double sum = 0.0;
    int batches = 0;
    for (Eigen::Index b = 0; b < n; b += mb) {
      const std::vector<Eigen::Index> idx(perm.begin() + b, perm.begin() + std::min(n, b + mb));
      const Agent::Inputs in = select(all, idx);
      Matrix t(env::kActionDim, static_cast<Eigen::Index>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k) t.col(static_cast<Eigen::Index>(k)) = targets.col(idx[k]);
      Agent::Cache cache;
      Matrix mean;
      Vector value;
      student.forward(in, cache, mean, value);
      const auto m = static_cast<double>(idx.size());
      const Matrix diff = mean - t;
      const double loss = diff.colwise().squaredNorm().sum() / m;
      Vector grad = Vector::Zero(student.num_params());
      student.backward(in, cache, weight * 2.0 / m * diff, Vector::Zero(mean.cols()), grad);
      if (!std::isfinite(loss) || !grad.allFinite()) continue;
      const double gn = grad.norm();
      if (max_grad_norm > 0.0 && gn > max_grad_norm) grad *= max_grad_norm / gn;
      Vector p = student.flat_params();
      opt.step(p, grad);
      student.set_flat_params(p);
      student.project_std();
      sum += loss;
      ++batches;
    }
    last = batches > 0 ? sum / batches : 0.0;
  }
  return last;
}

DistillResult train_conditioned(const Experts& experts, const env::EnvConfig& env_config,
                                const DistillConfig& cfg, const DistillOptions& options) {
  cfg.validate();
  experts.validate();
  const auto& tc = cfg.train;
  DistillResult out;
  Agent student(cfg.student, mix_seed(tc.seed, 11));
  // Start from the slow expert's input statistics so early imitation targets
  // and student inputs share a scale.
  student.step_norm = experts.at_mode(0).step_norm;
  out.initial = student;
  nn::Adam opt(student.num_params(), tc.adam);
  Rng rng(mix_seed(tc.seed, 12));
  learn::Collector collector(env_config, tc.num_envs, mix_seed(tc.seed, 13));

  std::vector<Rng> vel_rng;
  std::vector<int> since_draw(static_cast<std::size_t>(tc.num_envs), 0);
  for (int i = 0; i < tc.num_envs; ++i) vel_rng.emplace_back(mix_seed(tc.seed, 0x2000 + static_cast<std::uint64_t>(i)));

  learn::CollectHooks hooks;
  hooks.on_reset = [&](int i, env::Env& e) {
    e.set_v_target(sample_velocity(vel_rng[static_cast<std::size_t>(i)], cfg.mode_probability));
    since_draw[static_cast<std::size_t>(i)] = 0;
  };
  hooks.before_step = [&](int i, env::Env& e) {
    auto& n = since_draw[static_cast<std::size_t>(i)];
    if (n >= cfg.resample_every) {
      e.set_v_target(sample_velocity(vel_rng[static_cast<std::size_t>(i)], cfg.mode_probability));
      n = 0;
    }
    ++n;
  };
  hooks.velocity_code = [](int, const env::Env& e) { return encode_velocity(e.config().reward.v_target); };
  const bool student_targets = cfg.distill && cfg.targets == TargetStates::StudentVisited;
  if (student_targets) {
    hooks.expert_action = [&](int, const env::Env& e, const Vector& step_raw) -> std::optional<JointVector> {
      const int m = mode_index(e.config().reward.v_target);
      if (m < 0) return std::nullopt;
      const Agent& x = experts.at_mode(m);
      Agent::Inputs in;
      in.step = x.step_norm.normalize(step_raw);
      in.latent = x.factor_norm.normalize(Vector(e.factor_vector()));
      in.vcode.resize(0, 1);
      return JointVector(x.action_mean(in).col(0));
    };
  }

  namespace fs = std::filesystem;
  std::ofstream telemetry;
  if (!options.run_dir.empty()) {
    fs::create_directories(fs::path(options.run_dir) / "checkpoints");
    telemetry.open(fs::path(options.run_dir) / "telemetry.csv");
    telemetry << learn::telemetry_header() << '\n';
    learn::save_agent(student, (fs::path(options.run_dir) / "checkpoints" / "initial.ckpt").string());
  }

  for (int it = 0; it < tc.iterations; ++it) {
    learn::IterationStats s;
    s.iteration = it;
    const double w = cfg.distill ? distill_weight(it, tc.iterations) : 0.0;
    s.imitation_weight = w;
    learn::RolloutBatch batch = collector.collect(student, tc.horizon, tc, rng, s, hooks);
    s.update = learn::ppo_update(student, opt, batch, tc, rng, student_targets ? w : 0.0);
    if (!student_targets && cfg.distill && w > 0.0) {
      ExpertStates data;
      for (int m = 0; m < 3; ++m)
        data.append(collect_expert_states(experts.at_mode(m), env_config, kModes[static_cast<std::size_t>(m)],
                                          cfg.expert_states,
                                          mix_seed(tc.seed, (static_cast<std::uint64_t>(it) << 2) + static_cast<std::uint64_t>(m))));
      s.update.imitation_loss = imitation_update(student, opt, data, w, tc.epochs,
                                                 static_cast<int>(data.size()) / tc.minibatches,
                                                 tc.max_grad_norm, rng);
    }
    student.step_norm.update(batch.raw_steps);
    student.factor_norm.update(batch.raw_factors);
    s.std_mean = student.stddev().mean();
    out.telemetry.push_back(s);
    if (telemetry.is_open()) telemetry << learn::telemetry_row(s) << std::endl;
    if (options.on_iteration) options.on_iteration(s);
    if (!options.run_dir.empty() && tc.checkpoint_every > 0 && (it + 1) % tc.checkpoint_every == 0 &&
        it + 1 < tc.iterations) {
      char name[64];
      std::snprintf(name, sizeof name, "iter_%06d.ckpt", it + 1);
      learn::save_agent(student, (fs::path(options.run_dir) / "checkpoints" / name).string());
    }
  }
  if (!options.run_dir.empty())
    learn::save_agent(student, (fs::path(options.run_dir) / "checkpoints" / "final.ckpt").string());
  out.final = std::move(student);
  return out;
}

double VelocitySchedule::at(double t) const {
  validate();
  double v = segments.front().second;
  for (const auto& [t0, vs] : segments)
    if (t >= t0) v = vs;
  return v;
}

double VelocitySchedule::duration_hint() const { return segments.empty() ? 0.0 : segments.back().first; }

void VelocitySchedule::validate() const {
  if (segments.empty()) throw std::invalid_argument("velocity schedule: no segments");
  if (segments.front().first != 0.0) throw std::invalid_argument("velocity schedule: must start at t = 0");
  for (std::size_t k = 0; k < segments.size(); ++k) {
    if (k > 0 && !(segments[k].first > segments[k - 1].first))
      throw std::invalid_argument("velocity schedule: start times must increase");
    const double v = segments[k].second;
    if (!(v >= kModes[0] && v <= kModes[2]))
      throw std::invalid_argument("velocity schedule: v_target outside [0.375, 1.5] m/s");
  }
}

VelocitySchedule VelocitySchedule::constant(double v) {
  VelocitySchedule s;
  s.segments = {{0.0, v}};
  s.validate();
  return s;
}

VelocitySchedule VelocitySchedule::step(double v0, double v1, double t_switch) {
  VelocitySchedule s;
  s.segments = {{0.0, v0}, {t_switch, v1}};
  s.validate();
  return s;
}

VelocitySchedule VelocitySchedule::read_csv(std::istream& is) {
  VelocitySchedule s;
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "t_start_s,v_target")
        throw std::invalid_argument("velocity schedule line " + std::to_string(lineno) +
                                    ": expected header 't_start_s,v_target'");
      header = true;
      continue;
    }
    std::stringstream ss(line);
    std::string a, b, extra;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || std::getline(ss, extra, ','))
      throw std::invalid_argument("velocity schedule line " + std::to_string(lineno) + ": expected 2 columns");
    try {
      std::size_t ua = 0, ub = 0;
      const double t = std::stod(a, &ua), v = std::stod(b, &ub);
      if (ua != a.size() || ub != b.size()) throw std::invalid_argument("trailing");
      s.segments.emplace_back(t, v);
    } catch (const std::exception&) {
      throw std::invalid_argument("velocity schedule line " + std::to_string(lineno) + ": not a number");
    }
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string(e.what()) + " (line " + std::to_string(lineno) + ")");
  }
  return s;
}

bool SegmentTracking::within(double tolerance) const {
  return std::abs(realized - v_target) <= tolerance * v_target;
}

TransitionResult eval_transition(const Agent& policy, const env::EnvConfig& env_config,
                                 const VelocitySchedule& schedule, std::uint64_t seed, int max_steps,
                                 double settle, std::ostream* trajectory_log) {
  schedule.validate();
  if (!policy.config().velocity_code)
    throw std::invalid_argument("eval_transition: policy is not velocity conditioned");
  env::Env e(env_config);
  std::vector<double> xs;
  rollout::EpisodeOptions opt;
  opt.max_steps = max_steps;
  opt.v_schedule = [&](double t) { return schedule.at(t); };
  opt.velocity_code = encode_velocity;
  opt.trajectory_log = trajectory_log;
  opt.on_step = [&](const env::Env& env, const env::StepResult&) { xs.push_back(env.state().base_position.x()); };
  TransitionResult out;
  out.episode = rollout::run_episode(e, policy, seed, opt);
  const double dt = env_config.sim.dt * env_config.substeps;
  const double t_end = static_cast<double>(xs.size()) * dt;
  for (std::size_t k = 0; k < schedule.segments.size(); ++k) {
    SegmentTracking seg;
    seg.v_target = schedule.segments[k].second;
    seg.t_start = schedule.segments[k].first;
    seg.t_end = k + 1 < schedule.segments.size() ? schedule.segments[k + 1].first : t_end;
    seg.t_end = std::min(seg.t_end, t_end);
    // Step index i holds the position at time (i + 1) * dt.
    const double a = seg.t_start + settle;
    if (seg.t_end - a > dt) {
      const auto ia = static_cast<std::size_t>(std::max(1L, std::lround(a / dt))) - 1;
      const auto ib = static_cast<std::size_t>(std::lround(seg.t_end / dt)) - 1;
      seg.realized = (xs[ib] - xs[ia]) / ((ib - ia) * dt);
    }
    out.segments.push_back(seg);
  }
  return out;
}

}  // namespace gaitlab::distill
