#include "gaitlab/learn.hpp"
#include "gaitlab/phase2.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace gaitlab;
using namespace gaitlab::learn;

namespace {

AgentConfig small_agent() {
  AgentConfig c;
  c.hidden = {16, 16};
  c.latent_hidden = {8};
  c.init_std = 0.3;
  c.min_std = 0.05;
  return c;
}

RolloutBatch random_batch(const Agent& agent, int n, Rng& rng) {
  RolloutBatch b;
  b.inputs.step = Matrix(kStepDim, n);
  b.inputs.latent = Matrix(agent.latent_input_dim(), n);
  for (Eigen::Index i = 0; i < b.inputs.step.size(); ++i) b.inputs.step.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < b.inputs.latent.size(); ++i) b.inputs.latent.data()[i] = rng.normal();
  const Matrix mean = agent.action_mean(b.inputs);
  b.actions = mean;
  for (Eigen::Index i = 0; i < b.actions.size(); ++i) b.actions.data()[i] += 0.3 * rng.normal();
  b.log_probs = agent.log_prob(mean, b.actions);
  b.values = agent.value(b.inputs);
  b.advantages = Vector(n);
  b.returns = Vector(n);
  for (int i = 0; i < n; ++i) {
    b.advantages[i] = rng.normal();
    b.returns[i] = b.values[i] + 0.5 * rng.normal();
  }
  b.rewards = Vector::Zero(n);
  b.dones.assign(static_cast<std::size_t>(n), false);
  return b;
}

std::vector<Eigen::Index> all_indices(Eigen::Index n) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  return idx;
}

}  // namespace

TEST(Gae, HandComputedThreeSteps) {
  // delta = (0.95, 1.95, 3.4); A2 = 3.4, A1 = 1.95 + 0.72 * 3.4, A0 = 0.95 + 0.72 * A1.
  const Vector r = (Vector(3) << 1.0, 2.0, 3.0).finished();
  const Vector v = Vector::Constant(3, 0.5);
  Vector adv, ret;
  gae(r, v, {false, false, false}, 1.0, 0.9, 0.8, adv, ret);
  EXPECT_NEAR(adv[2], 3.4, 1e-12);
  EXPECT_NEAR(adv[1], 4.398, 1e-12);
  EXPECT_NEAR(adv[0], 4.11656, 1e-12);
  EXPECT_NEAR(ret[0], 4.61656, 1e-12);
}

TEST(Gae, TwoUnitRewardsWithZeroCritic) {
  // A1 = 1, A0 = 1 + 0.998 * 0.95 = 1.9481.
  Vector adv, ret;
  gae(Vector::Ones(2), Vector::Zero(2), {false, false}, 0.0, 0.998, 0.95, adv, ret);
  EXPECT_NEAR(adv[1], 1.0, 1e-12);
  EXPECT_NEAR(adv[0], 1.9481, 1e-12);
}

TEST(Gae, BaseCasesFromZeroCritic) {
  Vector adv, ret;
  gae(Vector::Zero(5), Vector::Zero(5), std::vector<bool>(5, false), 0.0, 0.998, 0.95, adv, ret);
  EXPECT_TRUE(adv.isZero());
  gae(Vector::Ones(1), Vector::Zero(1), {true}, 3.0, 0.998, 0.95, adv, ret);
  EXPECT_DOUBLE_EQ(adv[0], 1.0);
  EXPECT_DOUBLE_EQ(ret[0], 1.0);
}

TEST(Gae, TerminalCutsBootstrap) {
  const Vector r = (Vector(3) << 1.0, 1.0, 1.0).finished();
  const Vector v = Vector::Constant(3, 2.0);
  Vector adv, ret;
  gae(r, v, {false, true, false}, 10.0, 0.5, 1.0, adv, ret);
  EXPECT_NEAR(adv[1], 1.0 - 2.0, 1e-12);                // no bootstrap past the terminal
  EXPECT_NEAR(adv[0], (1.0 + 0.5 * 2.0 - 2.0) + 0.5 * adv[1], 1e-12);
  EXPECT_NEAR(adv[2], 1.0 + 0.5 * 10.0 - 2.0, 1e-12);  // fresh episode bootstraps last_value
}

TEST(Gae, MatchesBruteForceOnRandomSequences) {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 50;
    Vector r(n), v(n);
    std::vector<bool> d(n);
    for (int t = 0; t < n; ++t) {
      r[t] = rng.normal();
      v[t] = rng.normal();
      d[static_cast<std::size_t>(t)] = rng.uniform() < 0.05;
    }
    const double last = rng.normal();
    const double gamma = rng.uniform(0.9, 1.0), lambda = rng.uniform(0.8, 1.0);
    Vector adv, ret, ref;
    gae(r, v, d, last, gamma, lambda, adv, ret);
    oracles::gae(r, v, d, last, gamma, lambda, ref);
    ASSERT_LT((adv - ref).cwiseAbs().maxCoeff(), 1e-10) << "trial " << trial;
    ASSERT_LT((ret - (ref + v)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Gae, LambdaOneGivesDiscountedReturn) {
  Rng rng(1);
  const int n = 30;
  Vector r(n), v(n);
  for (int t = 0; t < n; ++t) {
    r[t] = rng.normal();
    v[t] = rng.normal();
  }
  Vector adv, ret;
  gae(r, v, std::vector<bool>(n, false), 0.7, 0.95, 1.0, adv, ret);
  double g = 0.7;
  for (int t = n - 1; t >= 0; --t) {
    g = r[t] + 0.95 * g;
    EXPECT_NEAR(ret[t], g, 1e-10);
  }
}

TEST(Gae, RejectsLengthMismatch) {
  Vector adv, ret;
  EXPECT_THROW(gae(Vector::Zero(3), Vector::Zero(2), {false, false, false}, 0, 0.9, 0.9, adv, ret),
               std::invalid_argument);
}

TEST(Agent, LogProbIsDiagonalGaussian) {
  Agent a(small_agent(), 3);
  Rng rng(4);
  Matrix mean(12, 1), act(12, 1);
  for (int j = 0; j < 12; ++j) {
    mean(j, 0) = rng.normal();
    act(j, 0) = rng.normal();
  }
  double ref = 0.0;
  const Vector sd = a.stddev();
  for (int j = 0; j < 12; ++j) {
    const double z = (act(j, 0) - mean(j, 0)) / sd[j];
    ref += -0.5 * z * z - std::log(sd[j]) - 0.5 * std::log(2 * std::numbers::pi);
  }
  EXPECT_NEAR(a.log_prob(mean, act)[0], ref, 1e-12);
}

TEST(Agent, InitialStdAndProjection) {
  Agent a(small_agent(), 1);
  EXPECT_NEAR(a.stddev().mean(), 0.3, 1e-12);
  a.log_std.setConstant(std::log(0.01));
  a.project_std();
  EXPECT_NEAR(a.stddev().minCoeff(), 0.05, 1e-12);
}

TEST(Agent, FlatParamsRoundTrip) {
  Agent a(small_agent(), 1);
  Vector p = a.flat_params();
  EXPECT_EQ(p.size(), a.num_params());
  p.array() += 0.01;
  a.set_flat_params(p);
  EXPECT_TRUE(a.flat_params().isApprox(p));
}

TEST(Ppo, GradientMatchesFiniteDifferences) {
  Agent agent(small_agent(), 7);
  Rng rng(8);
  RolloutBatch b = random_batch(agent, 24, rng);
  // Move away from the ratio-one point without reaching the clip edges.
  Vector p = agent.flat_params();
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += 1e-3 * rng.normal();
  agent.set_flat_params(p);
  TrainConfig cfg;
  cfg.value_clip_mode = ValueClip::None;
  const auto idx = all_indices(b.size());
  Vector grad;
  ppo_loss(agent, b, idx, cfg, 0.0, &grad);
  Rng pick(9);
  for (int k = 0; k < 60; ++k) {
    const auto i = static_cast<Eigen::Index>(pick.uniform_int(0, static_cast<int>(p.size()) - 1));
    const double h = 1e-6;
    Vector pp = p, pm = p;
    pp[i] += h;
    pm[i] -= h;
    agent.set_flat_params(pp);
    const double lp = ppo_loss(agent, b, idx, cfg, 0.0, nullptr).total;
    agent.set_flat_params(pm);
    const double lm = ppo_loss(agent, b, idx, cfg, 0.0, nullptr).total;
    const double fd = (lp - lm) / (2 * h);
    EXPECT_NEAR(grad[i], fd, 1e-5 + 1e-4 * std::abs(fd)) << "param " << i;
  }
}

TEST(Ppo, ImitationGradientMatchesFiniteDifferences) {
  Agent agent(small_agent(), 2);
  Rng rng(3);
  RolloutBatch b = random_batch(agent, 10, rng);
  b.expert_actions = Matrix::Random(12, 10);
  b.expert_mask = Vector::Ones(10);
  b.expert_mask[3] = 0.0;
  TrainConfig cfg;
  const auto idx = all_indices(b.size());
  Vector grad;
  const Vector p = agent.flat_params();
  const auto L = ppo_loss(agent, b, idx, cfg, 0.7, &grad);
  EXPECT_GT(L.imitation, 0.0);
  for (Eigen::Index i = 0; i < p.size(); i += p.size() / 40) {
    const double h = 1e-6;
    Vector pp = p, pm = p;
    pp[i] += h;
    pm[i] -= h;
    agent.set_flat_params(pp);
    const double lp = ppo_loss(agent, b, idx, cfg, 0.7, nullptr).total;
    agent.set_flat_params(pm);
    const double lm = ppo_loss(agent, b, idx, cfg, 0.7, nullptr).total;
    EXPECT_NEAR(grad[i], (lp - lm) / (2 * h), 1e-5 + 1e-4 * std::abs(grad[i]));
  }
}

TEST(Ppo, ClippedRatioStopsPolicyGradient) {
  Agent agent(small_agent(), 5);
  Rng rng(6);
  RolloutBatch b = random_batch(agent, 1, rng);
  TrainConfig cfg;
  cfg.value_clip_mode = ValueClip::None;
  cfg.value_loss_weight = 0.0;  // the critic also reads z; keep its gradient out of the latent net
  const auto idx = all_indices(1);
  const Eigen::Index policy_end = agent.latent_net.num_params() + agent.policy.num_params();

  // Ratio 1.5 with a positive advantage: the clipped branch is the minimum.
  b.log_probs[0] -= std::log(1.5);
  b.advantages[0] = 2.0;
  Vector grad;
  auto L = ppo_loss(agent, b, idx, cfg, 0.0, &grad);
  EXPECT_NEAR(L.surrogate, -1.2 * 2.0, 1e-12);
  EXPECT_EQ(grad.head(policy_end).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(grad.tail(12).cwiseAbs().maxCoeff(), 0.0);

  // Same ratio with a negative advantage: the unclipped term is the minimum.
  b.advantages[0] = -2.0;
  L = ppo_loss(agent, b, idx, cfg, 0.0, &grad);
  EXPECT_NEAR(L.surrogate, 1.5 * 2.0, 1e-12);
  EXPECT_GT(grad.head(policy_end).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Ppo, RelativeValueClip) {
  Agent agent(small_agent(), 5);
  Rng rng(6);
  RolloutBatch b = random_batch(agent, 1, rng);
  TrainConfig cfg;
  const double v = b.values[0];
  // Pretend collection saw a value far from the current one; the clipped
  // estimate sits at old +- 0.2 max(|old|, 0.1).
  b.values[0] = v + 5.0;
  b.returns[0] = v + 100.0;
  const auto L = ppo_loss(agent, b, all_indices(1), cfg, 0.0, nullptr);
  const double e1 = v - b.returns[0];
  const double width = 0.2 * std::max(std::abs(b.values[0]), 0.1);
  const double e2 = b.values[0] - width - b.returns[0];
  EXPECT_NEAR(L.value, std::max(e1 * e1, e2 * e2), 1e-9);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.ratio_clip = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.minibatches = c.batch_size() + 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(value_clip_from_string("relative"), ValueClip::Relative);
  EXPECT_THROW(value_clip_from_string("loose"), std::invalid_argument);
}

TEST(History, ZeroPaddedMostRecentFirst) {
  nn::RunningNorm norm(kStepDim);
  EXPECT_TRUE(history_vector(norm, {}).isZero());
  std::vector<Vector> h;
  for (int k = 0; k < 3; ++k) h.push_back(Vector::Constant(kStepDim, k + 1.0));
  const Vector v = history_vector(norm, h);
  const double sd = norm.stddev()[0];
  EXPECT_DOUBLE_EQ(v[0], 3.0 / sd);
  EXPECT_DOUBLE_EQ(v[kStepDim], 2.0 / sd);
  EXPECT_DOUBLE_EQ(v[2 * kStepDim], 1.0 / sd);
  EXPECT_TRUE(v.tail(kHistoryDim - 3 * kStepDim).isZero());
}

TEST(Phase1, TinyRunIsDeterministicAndWritesTelemetry) {
  env::EnvConfig ec;
  ec.termination.max_steps = 60;
  TrainConfig tc;
  tc.iterations = 2;
  tc.num_envs = 2;
  tc.horizon = 64;
  tc.minibatches = 2;
  tc.epochs = 2;
  tc.seed = 5;
  const auto dir = std::filesystem::temp_directory_path() / "gaitlab_phase1_test";
  std::filesystem::remove_all(dir);
  Phase1Options o1;
  o1.run_dir = (dir / "a").string();
  Phase1Options o2;
  o2.run_dir = (dir / "b").string();
  const auto r1 = train_phase1(ec, tc, small_agent(), o1);
  const auto r2 = train_phase1(ec, tc, small_agent(), o2);
  ASSERT_EQ(r1.telemetry.size(), 2u);
  EXPECT_EQ(r1.final.flat_params(), r2.final.flat_params());
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string t1 = slurp(dir / "a" / "telemetry.csv");
  EXPECT_FALSE(t1.empty());
  EXPECT_EQ(t1, slurp(dir / "b" / "telemetry.csv"));
  EXPECT_EQ(t1.substr(0, t1.find('\n')), telemetry_header());
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "checkpoints" / "final.ckpt"));
  std::filesystem::remove_all(dir);
}

namespace {

// Environments whose factors stay fixed for a whole episode, on flat ground.
env::EnvConfig fixed_factor_env() {
  env::EnvConfig ec;
  ec.set_terrain_preset("flat");
  ec.perturbation.resample_prob = 0.0;
  ec.termination.max_steps = 300;
  return ec;
}

phase2::Phase2Config small_phase2() {
  phase2::Phase2Config pc;
  pc.hidden = {64, 32};
  pc.iterations = 6;
  pc.num_envs = 8;
  pc.horizon = 300;
  pc.episode_steps = 300;
  pc.validation_envs = 2;
  pc.epochs = 8;
  pc.patience = 6;
  pc.seed = 3;
  return pc;
}

Vector variance(const std::vector<Vector>& xs) {
  Vector mean = Vector::Zero(xs.front().size());
  for (const auto& x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  Vector var = Vector::Zero(mean.size());
  for (const auto& x : xs) var += (x - mean).cwiseAbs2();
  return var / static_cast<double>(xs.size());
}

}  // namespace

TEST(Phase2, UninformativeHistoryConvergesToMeanLatent) {
  const Agent agent(AgentConfig{}, 8);
  auto pc = small_phase2();
  pc.zero_history = true;
  const auto r = phase2::train_phase2(agent, fixed_factor_env(), pc);
  const Vector pred = r.module.predict(Vector(Vector::Zero(kHistoryDim)));
  // The regression optimum for a constant input is the training mean of z.
  EXPECT_LT((pred - r.z_mean).norm(), 0.05 * std::max(1.0, r.z_mean.norm())) << pred.transpose() << "\n"
                                                                              << r.z_mean.transpose();
  EXPECT_NEAR(r.val_mse / r.baseline_mse, 1.0, 0.05);
}

TEST(Phase2, ConstantFactorsGiveSteadyEstimate) {
  const Agent agent(AgentConfig{}, 8);
  const auto ec = fixed_factor_env();
  const auto r = phase2::train_phase2(agent, ec, small_phase2());

  // Spread of the true latent across environments.
  std::vector<Vector> across;
  for (std::uint64_t s = 0; s < 32; ++s) {
    env::Env e(ec);
    e.reset(900 + s);
    across.push_back(agent.latent(agent.factor_norm.normalize(Vector(e.factor_vector()))).col(0));
  }
  const double across_var = variance(across).sum();
  ASSERT_GT(across_var, 0.0);

  // Spread of the estimate within one rollout once the window is full.
  env::Env e(ec);
  e.reset(77);
  std::vector<Vector> history, zhat;
  JointVector prev = JointVector::Zero();
  for (int t = 0; t < 200 && !e.done(); ++t) {
    Vector step(kStepDim);
    step << e.observe().to_vector(), prev;
    const Vector h = history_vector(agent.step_norm, history);
    if (t >= kHistorySteps) zhat.push_back(r.module.predict(h));
    Agent::Inputs in;
    in.step = agent.step_norm.normalize(step);
    env::Action a;
    a.delta_q_target = agent.action_mean_z(in, r.module.predict(Matrix(h))).col(0);
    a = env::clamp_action(a);
    e.step(a);
    history.push_back(step);
    if (history.size() > static_cast<std::size_t>(kHistorySteps)) history.erase(history.begin());
    prev = a.delta_q_target;
  }
  ASSERT_GT(zhat.size(), 100u);
  EXPECT_LT(variance(zhat).sum(), 0.1 * across_var);
}

TEST(Phase2, RejectsAgentWithoutFactorEncoder) {
  AgentConfig cfg;
  cfg.latent = LatentSource::History;
  EXPECT_THROW(phase2::train_phase2(Agent(cfg, 1), env::EnvConfig{}, small_phase2()), std::invalid_argument);
  auto pc = small_phase2();
  pc.episode_steps = 0;
  EXPECT_THROW(phase2::train_phase2(Agent(AgentConfig{}, 1), env::EnvConfig{}, pc), std::invalid_argument);
}
