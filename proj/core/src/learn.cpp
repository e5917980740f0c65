#include "gaitlab/learn.hpp"

#include "gaitlab/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gaitlab::learn {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Agent

Agent::Agent(AgentConfig config, std::uint64_t seed) : config_(std::move(config)) {
  if (!(config_.min_std > 0.0) || !(config_.init_std >= config_.min_std))
    throw std::invalid_argument("agent: need init_std >= min_std > 0");
  step_norm = nn::RunningNorm(kStepDim);
  factor_norm = nn::RunningNorm(env::kFactorDim);
  latent_net = nn::Mlp(layer_sizes(latent_input_dim(), config_.latent_hidden, kLatentDim),
                       config_.activation);
  policy = nn::Mlp(layer_sizes(policy_input_dim(), config_.hidden, env::kActionDim),
                   config_.activation);
  value_net = nn::Mlp(layer_sizes(policy_input_dim(), config_.hidden, 1), config_.activation);
  Rng rng(seed);
  latent_net.init(rng, 1.0);
  policy.init(rng, 0.01);
  value_net.init(rng, 1.0);
  log_std = Vector::Constant(env::kActionDim, std::log(config_.init_std));
}

int Agent::latent_input_dim() const {
  return config_.latent == LatentSource::Factors ? env::kFactorDim : kHistoryDim;
}

int Agent::policy_input_dim() const {
  return kStepDim + kLatentDim + (config_.velocity_code ? kVelocityCodeDim : 0);
}

Matrix Agent::latent(const Matrix& latent_in) const { return latent_net.forward(latent_in); }

Matrix Agent::policy_input(const Inputs& in, const Matrix& z) const {
  const Eigen::Index n = in.step.cols();
  if (in.step.rows() != kStepDim || z.cols() != n)
    throw std::invalid_argument("agent: inconsistent input shapes");
  Matrix x(policy_input_dim(), n);
  x.topRows(kStepDim) = in.step;
  x.middleRows(kStepDim, kLatentDim) = z;
  if (config_.velocity_code) {
    if (in.vcode.rows() != kVelocityCodeDim || in.vcode.cols() != n)
      throw std::invalid_argument("agent: velocity code required");
    x.bottomRows(kVelocityCodeDim) = in.vcode;
  }
  return x;
}

Matrix Agent::action_mean(const Inputs& in) const {
  return policy.forward(policy_input(in, latent(in.latent)));
}

Matrix Agent::action_mean_z(const Inputs& in, const Matrix& z) const {
  if (z.rows() != kLatentDim) throw std::invalid_argument("agent: latent must have 8 rows");
  return policy.forward(policy_input(in, z));
}

Vector Agent::value(const Inputs& in) const {
  return value_net.forward(policy_input(in, latent(in.latent))).row(0).transpose();
}

void Agent::forward(const Inputs& in, Cache& cache, Matrix& mean, Vector& value) const {
  cache.z = latent_net.forward(in.latent, cache.latent);
  const Matrix x = policy_input(in, cache.z);
  mean = policy.forward(x, cache.policy);
  value = value_net.forward(x, cache.value).row(0).transpose();
}

void Agent::backward(const Inputs&, const Cache& cache, const Matrix& d_mean,
                     const Vector& d_value, Vector& grad) const {
  const Eigen::Index nl = latent_net.num_params(), np = policy.num_params(),
                     nv = value_net.num_params();
  if (grad.size() != num_params()) grad = Vector::Zero(num_params());
  const Matrix dxp = policy.backward(cache.policy, d_mean, grad.segment(nl, np));
  const Matrix dxv = value_net.backward(cache.value, d_value.transpose(), grad.segment(nl + np, nv));
  const Matrix dz = dxp.middleRows(kStepDim, kLatentDim) + dxv.middleRows(kStepDim, kLatentDim);
  latent_net.backward(cache.latent, dz, grad.segment(0, nl));
}

void Agent::project_std() { log_std = log_std.cwiseMax(std::log(config_.min_std)); }

Eigen::Index Agent::num_params() const {
  return latent_net.num_params() + policy.num_params() + value_net.num_params() + log_std.size();
}

Vector Agent::flat_params() const {
  Vector p(num_params());
  p << latent_net.params(), policy.params(), value_net.params(), log_std;
  return p;
}

void Agent::set_flat_params(const Vector& p) {
  if (p.size() != num_params()) throw std::invalid_argument("agent: parameter size mismatch");
  Eigen::Index o = 0;
  for (nn::Mlp* net : {&latent_net, &policy, &value_net}) {
    net->params() = p.segment(o, net->num_params());
    o += net->num_params();
  }
  log_std = p.tail(log_std.size());
}

Vector Agent::log_prob(const Matrix& mean, const Matrix& actions) const {
  const Vector inv_var = (-2.0 * log_std).array().exp().matrix();
  const double norm = log_std.sum() + env::kActionDim * kLogSqrt2Pi;
  const Matrix diff = actions - mean;
  Vector out(mean.cols());
  for (Eigen::Index i = 0; i < mean.cols(); ++i)
    out[i] = -0.5 * diff.col(i).cwiseAbs2().dot(inv_var) - norm;
  return out;
}

// ---------------------------------------------------------------------------
// Config

ValueClip value_clip_from_string(const std::string& s) {
  if (s == "relative") return ValueClip::Relative;
  if (s == "absolute") return ValueClip::Absolute;
  if (s == "none") return ValueClip::None;
  throw std::invalid_argument("unknown value clip mode '" + s + "'");
}

std::string to_string(ValueClip v) {
  switch (v) {
    case ValueClip::Relative: return "relative";
    case ValueClip::Absolute: return "absolute";
    case ValueClip::None: return "none";
  }
  return "relative";
}

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("train config: ") + what);
  };
  need(iterations > 0, "iterations must be > 0");
  need(num_envs > 0, "num_envs must be > 0");
  need(horizon > 0, "horizon must be > 0");
  need(minibatches > 0 && minibatches <= batch_size(), "minibatches must be in [1, batch]");
  need(epochs > 0, "epochs must be > 0");
  need(adam.lr > 0.0, "lr must be > 0");
  need(ratio_clip > 0.0 && ratio_clip < 1.0, "ratio_clip must be in (0, 1)");
  need(value_clip > 0.0, "value_clip must be > 0");
  need(value_clip_floor >= 0.0, "value_clip_floor must be >= 0");
  need(value_loss_weight > 0.0, "value_loss_weight must be > 0");
  need(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
  need(lambda > 0.0 && lambda <= 1.0, "lambda must be in (0, 1]");
  need(entropy_coef >= 0.0, "entropy_coef must be >= 0");
  need(max_grad_norm >= 0.0, "max_grad_norm must be >= 0");
  need(reward_scale > 0.0, "reward_scale must be > 0");
}

// ---------------------------------------------------------------------------
// GAE

void gae(const Vector& rewards, const Vector& values, const std::vector<bool>& dones,
         double last_value, double gamma, double lambda, Vector& advantages, Vector& returns) {
  const Eigen::Index n = rewards.size();
  if (values.size() != n || static_cast<Eigen::Index>(dones.size()) != n)
    throw std::invalid_argument("gae: length mismatch");
  advantages.resize(n);
  returns.resize(n);
  double next_adv = 0.0;
  double next_value = last_value;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const bool done = dones[static_cast<std::size_t>(t)];
    const double v_next = done ? 0.0 : next_value;
    const double delta = rewards[t] + gamma * v_next - values[t];
    const double adv = delta + (done ? 0.0 : gamma * lambda * next_adv);
    advantages[t] = adv;
    returns[t] = adv + values[t];
    next_adv = adv;
    next_value = values[t];
  }
}

// ---------------------------------------------------------------------------
// PPO

PpoLossTerms ppo_loss(const Agent& agent, const RolloutBatch& b,
                      const std::vector<Eigen::Index>& idx, const TrainConfig& cfg,
                      double imitation_weight, Vector* grad, UpdateStats* stats) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  if (n == 0) throw std::invalid_argument("ppo_loss: empty minibatch");
  Agent::Inputs in;
  in.step = b.inputs.step(Eigen::all, idx);
  in.latent = b.inputs.latent(Eigen::all, idx);
  if (b.inputs.vcode.rows() > 0) in.vcode = b.inputs.vcode(Eigen::all, idx);
  const Matrix actions = b.actions(Eigen::all, idx);
  const Vector old_logp = b.log_probs(idx);
  const Vector adv = b.advantages(idx);
  const Vector ret = b.returns(idx);
  const Vector old_v = b.values(idx);

  Agent::Cache cache;
  Matrix mean;
  Vector v;
  agent.forward(in, cache, mean, v);
  const Vector logp = agent.log_prob(mean, actions);
  const Vector inv_var = (-2.0 * agent.log_std).array().exp().matrix();

  PpoLossTerms L;
  Vector d_logp(n);
  double kl = 0.0, clipped = 0.0;
  const double lo = 1.0 - cfg.ratio_clip, hi = 1.0 + cfg.ratio_clip;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double log_r = logp[i] - old_logp[i];
    const double r = std::exp(log_r);
    const double unclipped = r * adv[i];
    const double clip_r = std::clamp(r, lo, hi);
    const double clipped_obj = clip_r * adv[i];
    // The gradient flows through the ratio only when the unclipped term is the minimum.
    if (unclipped <= clipped_obj) {
      L.surrogate -= unclipped;
      d_logp[i] = -unclipped;
    } else {
      L.surrogate -= clipped_obj;
      d_logp[i] = 0.0;
    }
    kl += (r - 1.0) - log_r;
    if (r < lo || r > hi) clipped += 1.0;
  }
  L.surrogate /= static_cast<double>(n);
  d_logp /= static_cast<double>(n);

  Vector d_v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e1 = v[i] - ret[i];
    double width = std::numeric_limits<double>::infinity();
    if (cfg.value_clip_mode == ValueClip::Relative)
      width = cfg.value_clip * std::max(std::abs(old_v[i]), cfg.value_clip_floor);
    else if (cfg.value_clip_mode == ValueClip::Absolute)
      width = cfg.value_clip;
    const double dv = v[i] - old_v[i];
    const double dv_c = std::clamp(dv, -width, width);
    const double e2 = old_v[i] + dv_c - ret[i];
    if (e1 * e1 >= e2 * e2) {
      L.value += e1 * e1;
      d_v[i] = 2.0 * e1;
    } else {
      L.value += e2 * e2;
      d_v[i] = (dv == dv_c) ? 2.0 * e2 : 0.0;
    }
  }
  L.value /= static_cast<double>(n);
  d_v *= cfg.value_loss_weight / static_cast<double>(n);

  Matrix d_mean = (actions - mean).array().colwise() * inv_var.array();
  Vector d_log_std = Vector::Zero(agent.log_std.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (d_logp[i] == 0.0) {
      d_mean.col(i).setZero();
      continue;
    }
    const Vector z2 = (actions.col(i) - mean.col(i)).cwiseAbs2().cwiseProduct(inv_var);
    d_log_std += d_logp[i] * (z2.array() - 1.0).matrix();
    d_mean.col(i) *= d_logp[i];
  }
  if (cfg.entropy_coef > 0.0) d_log_std.array() -= cfg.entropy_coef;

  if (imitation_weight > 0.0 && b.expert_actions.cols() > 0) {
    const Matrix target = b.expert_actions(Eigen::all, idx);
    const Vector mask = b.expert_mask(idx);
    const double m = std::max(mask.sum(), 1.0);
    const Matrix diff = mean - target;
    L.imitation = diff.colwise().squaredNorm().dot(mask) / m;
    d_mean += imitation_weight * 2.0 / m * (diff.array().rowwise() * mask.transpose().array()).matrix();
  }

  const double entropy = agent.log_std.sum() + env::kActionDim * (0.5 + kLogSqrt2Pi);
  L.total = L.surrogate + cfg.value_loss_weight * L.value + imitation_weight * L.imitation -
            cfg.entropy_coef * entropy;

  if (grad) {
    grad->setZero(agent.num_params());
    agent.backward(in, cache, d_mean, d_v, *grad);
    grad->tail(agent.log_std.size()) += d_log_std;
  }
  if (stats) {
    stats->approx_kl += kl / static_cast<double>(n);
    stats->clip_fraction += clipped / static_cast<double>(n);
  }
  return L;
}

UpdateStats ppo_update(Agent& agent, nn::Adam& opt, const RolloutBatch& batch,
                       const TrainConfig& cfg, Rng& rng, double imitation_weight) {
  const Eigen::Index n = batch.size();
  UpdateStats s;
  if (n == 0) return s;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  const Eigen::Index mb = std::max<Eigen::Index>(1, n / cfg.minibatches);
  int count = 0;
  Vector grad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = perm.size() - 1; i > 0; --i)
      std::swap(perm[i], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)))]);
    for (int k = 0; k < cfg.minibatches; ++k) {
      const Eigen::Index begin = k * mb;
      const Eigen::Index end = (k + 1 == cfg.minibatches) ? n : std::min(n, begin + mb);
      if (begin >= end) continue;
      const std::vector<Eigen::Index> idx(perm.begin() + begin, perm.begin() + end);
      UpdateStats mb_stats;
      const PpoLossTerms L = ppo_loss(agent, batch, idx, cfg, imitation_weight, &grad, &mb_stats);
      if (!std::isfinite(L.total) || !grad.allFinite()) {
        ++s.skipped;
        continue;
      }
      const double gn = grad.norm();
      if (cfg.max_grad_norm > 0.0 && gn > cfg.max_grad_norm) grad *= cfg.max_grad_norm / gn;
      Vector p = agent.flat_params();
      opt.step(p, grad);
      agent.set_flat_params(p);
      agent.project_std();
      s.policy_loss += L.surrogate;
      s.value_loss += L.value;
      s.imitation_loss += L.imitation;
      s.approx_kl += mb_stats.approx_kl;
      s.clip_fraction += mb_stats.clip_fraction;
      s.grad_norm += gn;
      ++count;
    }
  }
  if (count > 0) {
    const double c = count;
    s.policy_loss /= c;
    s.value_loss /= c;
    s.imitation_loss /= c;
    s.approx_kl /= c;
    s.clip_fraction /= c;
    s.grad_norm /= c;
  }
  const Vector resid = batch.returns - batch.values;
  const double var_r = (batch.returns.array() - batch.returns.mean()).square().mean();
  const double var_e = (resid.array() - resid.mean()).square().mean();
  s.explained_variance = var_r > 0.0 ? 1.0 - var_e / var_r : 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// Collection

Vector history_vector(const nn::RunningNorm& step_norm, const std::vector<Vector>& raw_history) {
  Vector h = Vector::Zero(kHistoryDim);
  // Slot k holds step t-1-k; missing steps at episode start stay zero.
  const int have = std::min<int>(kHistorySteps, static_cast<int>(raw_history.size()));
  for (int k = 0; k < have; ++k)
    h.segment(k * kStepDim, kStepDim) =
        step_norm.normalize(raw_history[raw_history.size() - 1 - static_cast<std::size_t>(k)]);
  return h;
}

Collector::Collector(const env::EnvConfig& env_config, int num_envs, std::uint64_t seed)
    : seed_(seed) {
  if (num_envs <= 0) throw std::invalid_argument("collector: num_envs must be > 0");
  for (int i = 0; i < num_envs; ++i) {
    env::EnvConfig c = env_config;
    // One persistent field per worker keeps resets cheap.
    if (!c.terrain_seed) c.terrain_seed = mix_seed(seed, 0x1000 + static_cast<std::uint64_t>(i));
    envs_.emplace_back(std::move(c));
  }
  slots_.resize(static_cast<std::size_t>(num_envs));
  for (auto& s : slots_) s.episodes = -1;
}

void Collector::start_episode(int i, const CollectHooks& hooks) {
  auto& slot = slots_[static_cast<std::size_t>(i)];
  ++slot.episodes;
  auto& e = envs_[static_cast<std::size_t>(i)];
  e.reset(mix_seed(seed_, (static_cast<std::uint64_t>(i) << 32) +
                              static_cast<std::uint64_t>(slot.episodes)));
  if (hooks.on_reset) hooks.on_reset(i, e);
  slot.prev_action.setZero();
  slot.history.clear();
  slot.episode_return = 0.0;
  slot.episode_length = 0;
}

Vector Collector::step_raw(int i) const {
  Vector v(kStepDim);
  v << envs_[static_cast<std::size_t>(i)].observe().to_vector(),
      slots_[static_cast<std::size_t>(i)].prev_action;
  return v;
}

Vector Collector::history_input(const Agent& agent, int i) const {
  return history_vector(agent.step_norm, slots_[static_cast<std::size_t>(i)].history);
}

RolloutBatch Collector::collect(const Agent& agent, int horizon, const TrainConfig& cfg, Rng& rng,
                                IterationStats& stats, const CollectHooks& hooks) {
  const int ne = num_envs();
  for (int i = 0; i < ne; ++i)
    if (slots_[static_cast<std::size_t>(i)].episodes < 0) start_episode(i, hooks);
  const bool use_history = agent.config().latent == LatentSource::History;
  const bool use_vcode = agent.config().velocity_code;
  const bool use_expert = static_cast<bool>(hooks.expert_action);
  const Eigen::Index total = static_cast<Eigen::Index>(horizon) * ne;

  RolloutBatch b;
  b.inputs.step.resize(kStepDim, total);
  b.inputs.latent.resize(agent.latent_input_dim(), total);
  b.inputs.vcode.resize(use_vcode ? kVelocityCodeDim : 0, total);
  b.actions.resize(env::kActionDim, total);
  b.log_probs.resize(total);
  b.values.resize(total);
  b.rewards.resize(total);
  b.dones.assign(static_cast<std::size_t>(total), false);
  if (use_expert) {
    b.expert_actions = Matrix::Zero(env::kActionDim, total);
    b.expert_mask = Vector::Zero(total);
  }
  Matrix& raw_steps = b.raw_steps;
  Matrix& raw_factors = b.raw_factors;
  raw_steps.resize(kStepDim, total);
  raw_factors.resize(env::kFactorDim, total);

  auto build_inputs = [&](const std::vector<int>& which, Matrix& raw_s, Matrix& raw_f) {
    const auto n = static_cast<Eigen::Index>(which.size());
    Agent::Inputs in;
    raw_s.resize(kStepDim, n);
    raw_f.resize(env::kFactorDim, n);
    in.latent.resize(agent.latent_input_dim(), n);
    in.vcode.resize(use_vcode ? kVelocityCodeDim : 0, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const int i = which[static_cast<std::size_t>(k)];
      raw_s.col(k) = step_raw(i);
      raw_f.col(k) = envs_[static_cast<std::size_t>(i)].factor_vector();
      if (use_history) in.latent.col(k) = history_input(agent, i);
      if (use_vcode) in.vcode.col(k) = hooks.velocity_code(i, envs_[static_cast<std::size_t>(i)]);
    }
    in.step = agent.step_norm.normalize(raw_s);
    if (!use_history) in.latent = agent.factor_norm.normalize(raw_f);
    return in;
  };

  std::vector<int> all(static_cast<std::size_t>(ne));
  std::iota(all.begin(), all.end(), 0);
  const Vector stdv = agent.stddev();
  double ret_sum = 0.0, len_sum = 0.0, partial = 0.0;
  int finished = 0;
  IterationStats acc;

  for (int t = 0; t < horizon; ++t) {
    for (int i = 0; i < ne; ++i)
      if (hooks.before_step) hooks.before_step(i, envs_[static_cast<std::size_t>(i)]);
    Matrix rs, rf;
    const Agent::Inputs in = build_inputs(all, rs, rf);
    const Matrix mean = agent.action_mean(in);
    const Vector value = agent.value(in);
    Matrix act = mean;
    for (Eigen::Index c = 0; c < act.cols(); ++c)
      for (int j = 0; j < env::kActionDim; ++j) act(j, c) += stdv[j] * rng.normal();
    const Vector logp = agent.log_prob(mean, act);

    for (int i = 0; i < ne; ++i) {
      const Eigen::Index col = static_cast<Eigen::Index>(t) * ne + i;
      auto& slot = slots_[static_cast<std::size_t>(i)];
      auto& e = envs_[static_cast<std::size_t>(i)];
      b.inputs.step.col(col) = in.step.col(i);
      b.inputs.latent.col(col) = in.latent.col(i);
      if (use_vcode) b.inputs.vcode.col(col) = in.vcode.col(i);
      b.actions.col(col) = act.col(i);
      b.log_probs[col] = logp[i];
      b.values[col] = value[i];
      raw_steps.col(col) = rs.col(i);
      raw_factors.col(col) = rf.col(i);
      if (use_expert) {
        if (auto target = hooks.expert_action(i, e, rs.col(i))) {
          b.expert_actions.col(col) = *target;
          b.expert_mask[col] = 1.0;
        }
      }

      env::Action a;
      a.delta_q_target = act.col(i);
      a = env::clamp_action(a);
      const env::StepResult r = e.step(a);
      const auto& info = r.info;
      slot.history.push_back(rs.col(i));
      if (slot.history.size() > static_cast<std::size_t>(kHistorySteps))
        slot.history.erase(slot.history.begin());
      slot.prev_action = a.delta_q_target;
      slot.episode_return += r.reward;
      ++slot.episode_length;

      acc.reward_per_step += r.reward;
      acc.energy += info.power;
      acc.torque += info.torque_sq;
      acc.delta_torque += info.delta_torque_sq;
      acc.foot_slip += info.foot_slip;
      acc.joint_speed += info.joint_speed_sq;
      acc.action += info.action_sq;
      acc.joint_speed_abs += info.joint_speed_abs;
      acc.contact_switch_rate += info.contact_switches;
      acc.forward_speed += info.v_x;
      if (info.diverged) ++acc.diverged;

      double reward = cfg.reward_scale * r.reward;
      if (r.done) {
        const bool timeout = info.truncated || info.diverged;
        if (timeout) {
          Matrix s1, f1;
          const Agent::Inputs next = build_inputs({i}, s1, f1);
          reward += cfg.gamma * agent.value(next)[0];
        }
        b.dones[static_cast<std::size_t>(col)] = true;
        ret_sum += slot.episode_return;
        len_sum += slot.episode_length;
        ++finished;
        start_episode(i, hooks);
      }
      b.rewards[col] = reward;
    }
  }

  // Advantages per environment sequence, bootstrapped from the current states.
  Matrix rs, rf;
  const Vector last_v = agent.value(build_inputs(all, rs, rf));
  b.advantages.resize(total);
  b.returns.resize(total);
  for (int i = 0; i < ne; ++i) {
    Vector r(horizon), v(horizon), a, ret;
    std::vector<bool> d(static_cast<std::size_t>(horizon));
    for (int t = 0; t < horizon; ++t) {
      const Eigen::Index col = static_cast<Eigen::Index>(t) * ne + i;
      r[t] = b.rewards[col];
      v[t] = b.values[col];
      d[static_cast<std::size_t>(t)] = b.dones[static_cast<std::size_t>(col)];
    }
    gae(r, v, d, last_v[i], cfg.gamma, cfg.lambda, a, ret);
    for (int t = 0; t < horizon; ++t) {
      const Eigen::Index col = static_cast<Eigen::Index>(t) * ne + i;
      b.advantages[col] = a[t];
      b.returns[col] = ret[t];
    }
  }
  if (cfg.normalize_advantages && total > 1) {
    const double m = b.advantages.mean();
    const double sd = std::sqrt((b.advantages.array() - m).square().mean());
    b.advantages = ((b.advantages.array() - m) / (sd + 1e-8)).matrix();
  }

  for (const auto& slot : slots_) partial += slot.episode_return;
  const double steps = static_cast<double>(total);
  stats.samples = total;
  stats.episodes = finished;
  if (finished > 0) {
    stats.mean_return = ret_sum / finished;
    stats.mean_length = len_sum / finished;
    running_return_ = stats.mean_return;
    have_return_ = true;
  } else {
    stats.mean_return = have_return_ ? running_return_ : partial / ne;
    stats.mean_length = static_cast<double>(horizon);
  }
  stats.reward_per_step = acc.reward_per_step / steps;
  stats.energy = acc.energy / steps;
  stats.torque = acc.torque / steps;
  stats.delta_torque = acc.delta_torque / steps;
  stats.foot_slip = acc.foot_slip / steps;
  stats.joint_speed = acc.joint_speed / steps;
  stats.action = acc.action / steps;
  stats.joint_speed_abs = acc.joint_speed_abs / steps;
  stats.contact_switch_rate = acc.contact_switch_rate / steps;
  stats.forward_speed = acc.forward_speed / steps;
  stats.diverged = acc.diverged;
  return b;
}

// ---------------------------------------------------------------------------
// Telemetry

std::string telemetry_header() {
  return "iteration,samples,mean_return,mean_length,episodes,reward_per_step,energy,torque,"
         "delta_torque,foot_slip,joint_speed,action,joint_speed_abs,contact_switch_rate,"
         "forward_speed,diverged,policy_loss,value_loss,imitation_loss,approx_kl,clip_fraction,"
         "explained_variance,grad_norm,skipped,std_mean,imitation_weight";
}

std::string telemetry_row(const IterationStats& s) {
  std::ostringstream os;
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.9g", v);
    os << buf;
  };
  os << s.iteration << ',' << s.samples;
  put(s.mean_return);
  put(s.mean_length);
  os << ',' << s.episodes;
  put(s.reward_per_step);
  put(s.energy);
  put(s.torque);
  put(s.delta_torque);
  put(s.foot_slip);
  put(s.joint_speed);
  put(s.action);
  put(s.joint_speed_abs);
  put(s.contact_switch_rate);
  put(s.forward_speed);
  os << ',' << s.diverged;
  put(s.update.policy_loss);
  put(s.update.value_loss);
  put(s.update.imitation_loss);
  put(s.update.approx_kl);
  put(s.update.clip_fraction);
  put(s.update.explained_variance);
  put(s.update.grad_norm);
  os << ',' << s.update.skipped;
  put(s.std_mean);
  put(s.imitation_weight);
  return os.str();
}

// ---------------------------------------------------------------------------
// Phase 1

Phase1Result train_phase1(const env::EnvConfig& env_config, const TrainConfig& cfg,
                          const AgentConfig& agent_config, const Phase1Options& options) {
  cfg.validate();
  Phase1Result out;
  Agent agent(agent_config, mix_seed(cfg.seed, 1));
  out.initial = agent;
  nn::Adam opt(agent.num_params(), cfg.adam);
  Rng rng(mix_seed(cfg.seed, 2));
  Collector collector(env_config, cfg.num_envs, mix_seed(cfg.seed, 3));

  std::ofstream telemetry;
  namespace fs = std::filesystem;
  if (!options.run_dir.empty()) {
    fs::create_directories(fs::path(options.run_dir) / "checkpoints");
    telemetry.open(fs::path(options.run_dir) / "telemetry.csv");
    telemetry << telemetry_header() << '\n';
    save_agent(agent, (fs::path(options.run_dir) / "checkpoints" / "initial.ckpt").string());
  }

  for (int it = 0; it < cfg.iterations; ++it) {
    IterationStats s;
    s.iteration = it;
    RolloutBatch batch = collector.collect(agent, cfg.horizon, cfg, rng, s);
    s.update = ppo_update(agent, opt, batch, cfg, rng);
    // Statistics move after the update so stored inputs and log-probs stay consistent.
    agent.step_norm.update(batch.raw_steps);
    agent.factor_norm.update(batch.raw_factors);
    s.std_mean = agent.stddev().mean();
    out.telemetry.push_back(s);
    if (telemetry.is_open()) telemetry << telemetry_row(s) << std::endl;
    if (options.on_iteration) options.on_iteration(s);
    if (!options.run_dir.empty() && cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 &&
        it + 1 < cfg.iterations) {
      char name[64];
      std::snprintf(name, sizeof name, "iter_%06d.ckpt", it + 1);
      save_agent(agent, (fs::path(options.run_dir) / "checkpoints" / name).string());
    }
  }
  if (!options.run_dir.empty())
    save_agent(agent, (fs::path(options.run_dir) / "checkpoints" / "final.ckpt").string());
  out.final = std::move(agent);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

Vector sizes_vector(const nn::Mlp& m) {
  Vector v(static_cast<Eigen::Index>(m.sizes().size()));
  for (std::size_t i = 0; i < m.sizes().size(); ++i) v[static_cast<Eigen::Index>(i)] = m.sizes()[i];
  return v;
}

std::vector<int> hidden_of(const Vector& sizes) {
  std::vector<int> h;
  for (Eigen::Index i = 1; i + 1 < sizes.size(); ++i) h.push_back(static_cast<int>(sizes[i]));
  return h;
}

}  // namespace

void write_agent(const Agent& agent, std::ostream& os) {
  checkpoint::Archive a;
  a.kind = "agent";
  const auto& c = agent.config();
  a.meta["activation"] = nn::to_string(c.activation);
  a.meta["latent"] = c.latent == LatentSource::Factors ? "factors" : "history";
  a.meta["velocity_code"] = c.velocity_code ? "1" : "0";
  a.meta["obs_dim"] = std::to_string(env::kObsDim);
  a.meta["action_dim"] = std::to_string(env::kActionDim);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", c.min_std);
  a.meta["min_std"] = buf;
  std::snprintf(buf, sizeof buf, "%.17g", c.init_std);
  a.meta["init_std"] = buf;
  a.add("latent.sizes", sizes_vector(agent.latent_net));
  a.add("latent.params", agent.latent_net.params());
  a.add("policy.sizes", sizes_vector(agent.policy));
  a.add("policy.params", agent.policy.params());
  a.add("value.sizes", sizes_vector(agent.value_net));
  a.add("value.params", agent.value_net.params());
  a.add("log_std", agent.log_std);
  for (const auto& [name, norm] : {std::pair<const char*, const nn::RunningNorm*>{"step_norm", &agent.step_norm},
                                   {"factor_norm", &agent.factor_norm}}) {
    a.add(std::string(name) + ".mean", norm->mean());
    a.add(std::string(name) + ".var", norm->var());
    a.add(std::string(name) + ".count", Vector::Constant(1, norm->count()));
  }
  checkpoint::write(a, os);
}

Agent read_agent(std::istream& is) {
  const checkpoint::Archive a = checkpoint::read(is);
  if (a.kind != "agent") throw checkpoint::FormatError("checkpoint: expected an agent, found '" + a.kind + "'");
  if (a.get_meta("obs_dim") != std::to_string(env::kObsDim) ||
      a.get_meta("action_dim") != std::to_string(env::kActionDim))
    throw checkpoint::FormatError("checkpoint: observation/action dimensions do not match");
  AgentConfig c;
  c.activation = nn::activation_from_string(a.get_meta("activation"));
  c.latent = a.get_meta("latent") == "history" ? LatentSource::History : LatentSource::Factors;
  c.velocity_code = a.get_meta("velocity_code") == "1";
  c.min_std = std::stod(a.get_meta("min_std"));
  c.init_std = std::stod(a.get_meta("init_std"));
  c.hidden = hidden_of(a.array("policy.sizes"));
  c.latent_hidden = hidden_of(a.array("latent.sizes"));
  Agent agent(c, 0);
  auto fill = [&](nn::Mlp& net, const std::string& name) {
    const Vector& p = a.array(name + ".params");
    if (p.size() != net.num_params() || a.array(name + ".sizes") != sizes_vector(net))
      throw checkpoint::FormatError("checkpoint: layer shapes of '" + name + "' do not match");
    net.params() = p;
  };
  fill(agent.latent_net, "latent");
  fill(agent.policy, "policy");
  fill(agent.value_net, "value");
  if (a.array("log_std").size() != env::kActionDim)
    throw checkpoint::FormatError("checkpoint: log_std size mismatch");
  agent.log_std = a.array("log_std");
  for (const auto& [name, norm] : {std::pair<const char*, nn::RunningNorm*>{"step_norm", &agent.step_norm},
                                   {"factor_norm", &agent.factor_norm}}) {
    const Vector& m = a.array(std::string(name) + ".mean");
    if (m.size() != norm->dim()) throw checkpoint::FormatError("checkpoint: normalizer size mismatch");
    norm->set(m, a.array(std::string(name) + ".var"), a.array(std::string(name) + ".count")[0]);
  }
  return agent;
}

void save_agent(const Agent& agent, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_agent(agent, os);
}

Agent load_agent(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw checkpoint::FormatError("checkpoint: cannot open '" + path + "'");
  return read_agent(is);
}

}  // namespace gaitlab::learn
