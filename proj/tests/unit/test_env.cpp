#include "gaitlab/env.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace gaitlab;
using namespace gaitlab::env;

namespace {

Action random_action(Rng& rng, double scale = 1.0) {
  Action a;
  for (int j = 0; j < kNumJoints; ++j) a.delta_q_target[j] = scale * rng.uniform(-1.0, 1.0) * action_bounds()[j];
  return a;
}

}  // namespace

TEST(Reward, DefaultsMatchConstants) {
  const RewardConfig r;
  EXPECT_DOUBLE_EQ(r.alpha_energy, 0.04);
  EXPECT_DOUBLE_EQ(r.alpha_forward, 20.0);
  EXPECT_DOUBLE_EQ(r.alive_bonus(), 20.0 * r.v_target);
}

TEST(Reward, TermsSumToTotal) {
  RewardConfig c;
  c.v_target = 0.9;
  const auto t = compute_reward(c, 0.7, 0.1, -0.2, 55.0);
  EXPECT_DOUBLE_EQ(t.forward, -20.0 * 0.2 - 0.01 - 0.04);
  EXPECT_DOUBLE_EQ(t.energy, -55.0);
  EXPECT_DOUBLE_EQ(t.alive, 18.0);
  EXPECT_NEAR(t.total, oracles::reward(0.9, 0.7, 0.1, -0.2, 55.0), 1e-12);
}

TEST(Env, StepRewardReconstructsFromState) {
  EnvConfig cfg;
  cfg.reward.v_target = 0.9;
  Env e(cfg);
  Rng rng(11);
  e.reset(3);
  for (int k = 0; k < 600; ++k) {
    const auto r = e.step(random_action(rng, 0.3));
    double p = 0.0;
    for (int s = 0; s < r.info.substeps; ++s) p += r.info.substep_power[static_cast<std::size_t>(s)];
    p /= r.info.substeps;
    const auto& st = e.state();
    EXPECT_NEAR(r.reward, oracles::reward(0.9, st.base_lin_vel.x(), st.base_lin_vel.y(), st.base_ang_vel.z(), p),
                1e-9);
    if (r.done) e.reset(static_cast<std::uint64_t>(k));
  }
}

TEST(Env, ExtraPenaltiesOnlyWhenEnabled) {
  EnvConfig cfg;
  cfg.extra.enabled = true;
  Env e(cfg);
  e.reset(1);
  Rng rng(2);
  const auto r = e.step(random_action(rng));
  const auto& i = r.info;
  const double extra = -(1e-4 * i.torque_sq + 1e-3 * i.joint_speed_sq + 0.1 * i.foot_slip);
  EXPECT_NEAR(i.reward.extra, extra, 1e-12);
  EXPECT_NEAR(r.reward, i.reward.forward + 0.04 * i.reward.energy + i.reward.alive + extra, 1e-12);

  Env plain{EnvConfig{}};
  plain.reset(1);
  Rng rng2(2);
  EXPECT_DOUBLE_EQ(plain.step(random_action(rng2)).info.reward.extra, 0.0);
}

TEST(Env, ObservationLayout) {
  Env e{EnvConfig{}};
  const Observation o = e.reset(4);
  const ObsVector v = o.to_vector();
  EXPECT_EQ(v.size(), 30);
  EXPECT_TRUE(v.segment<12>(0).isApprox(o.q));
  EXPECT_TRUE(v.segment<12>(12).isApprox(o.q_dot));
  EXPECT_DOUBLE_EQ(v[24], o.roll);
  EXPECT_DOUBLE_EQ(v[25], o.pitch);
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(v[26 + i], o.contacts[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
  // After settling every foot is down.
  for (bool c : o.contacts) EXPECT_TRUE(c);
}

TEST(Env, FactorVectorLayout) {
  Env e{EnvConfig{}};
  e.reset(5);
  const auto f = e.factor_vector();
  const auto& p = e.params();
  namespace fi = factor_index;
  EXPECT_DOUBLE_EQ(f[fi::kPayload], p.payload);
  EXPECT_DOUBLE_EQ(f[fi::kComX], p.com_offset.x());
  EXPECT_DOUBLE_EQ(f[fi::kComY], p.com_offset.y());
  EXPECT_TRUE(f.segment<12>(fi::kMotorStrength).isApprox(p.motor_strength));
  EXPECT_DOUBLE_EQ(f[fi::kFriction], p.friction);
  EXPECT_DOUBLE_EQ(f[fi::kVx], 0.0);
  e.step(Action{});
  const auto g = e.factor_vector();
  EXPECT_NEAR(g[fi::kVx], 0.2 * e.state().base_lin_vel.x(), 1e-12);
}

TEST(Env, ActionsAreClampedPerJointType) {
  Action a;
  a.delta_q_target.setConstant(5.0);
  const Action c = clamp_action(a);
  for (int leg = 0; leg < 4; ++leg) {
    EXPECT_DOUBLE_EQ(c.delta_q_target[3 * leg + 0], 0.15);
    EXPECT_DOUBLE_EQ(c.delta_q_target[3 * leg + 1], 0.4);
    EXPECT_DOUBLE_EQ(c.delta_q_target[3 * leg + 2], 0.4);
  }
  Env e{EnvConfig{}};
  e.reset(1);
  e.step(a);
  EXPECT_TRUE(e.last_q_target().isApprox(e.config().robot.nominal_stand_q + c.delta_q_target));
}

TEST(Env, SameSeedSameTrajectory) {
  EnvConfig cfg;
  Env a(cfg), b(cfg);
  a.reset(77);
  b.reset(77);
  Rng r1(5), r2(5);
  for (int k = 0; k < 200 && !a.done(); ++k) {
    const auto sa = a.step(random_action(r1, 0.5));
    const auto sb = b.step(random_action(r2, 0.5));
    ASSERT_EQ(sa.reward, sb.reward);
    ASSERT_EQ(a.state().base_position, b.state().base_position);
  }
}

TEST(Env, DifferentSeedsDrawDifferentParams) {
  Env e{EnvConfig{}};
  e.reset(1);
  const double f1 = e.params().friction;
  e.reset(2);
  EXPECT_NE(e.params().friction, f1);
  const auto& prof = e.config().perturbation;
  EXPECT_TRUE(prof.friction.contains(e.params().friction));
  EXPECT_TRUE(prof.payload.contains(e.params().payload));
}

TEST(Env, StepAfterDoneIsContractViolation) {
  EnvConfig cfg;
  cfg.termination.max_steps = 3;
  Env e(cfg);
  EXPECT_THROW(e.step(Action{}), ContractViolation);  // never reset
  e.reset(1);
  StepResult r;
  for (int k = 0; k < 3; ++k) r = e.step(Action{});
  EXPECT_TRUE(r.done);
  EXPECT_TRUE(r.info.truncated);
  EXPECT_FALSE(r.info.terminated);
  EXPECT_THROW(e.step(Action{}), ContractViolation);
}

TEST(Env, FallingTerminates) {
  EnvConfig cfg;
  cfg.set_terrain_preset("flat");
  Env e(cfg);
  e.reset(1);
  Action collapse;
  for (int leg = 0; leg < 4; ++leg) collapse.delta_q_target.segment<3>(3 * leg) << 0.0, 0.4, 0.4;
  StepResult r;
  int k = 0;
  for (; k < 300 && !r.done; ++k) r = e.step(collapse);
  EXPECT_TRUE(r.info.terminated);
  EXPECT_LT(k, 300);
}

TEST(Env, EnergyAveragingAcrossSubsteps) {
  EnvConfig avg, sum;
  sum.energy_average = false;
  Env a(avg), b(sum);
  a.reset(9);
  b.reset(9);
  Rng r1(1), r2(1);
  const auto ra = a.step(random_action(r1));
  const auto rb = b.step(random_action(r2));
  EXPECT_NEAR(rb.info.power, 4.0 * ra.info.power, 1e-9 * std::max(1.0, std::abs(rb.info.power)));
  EXPECT_LE(ra.info.power, ra.info.power_positive + 1e-12);
}

TEST(Env, RejectsBadSubsteps) {
  EnvConfig cfg;
  cfg.substeps = 0;
  EXPECT_THROW(Env{cfg}, std::invalid_argument);
}

TEST(Env, TrajectoryLogHasHeaderColumnsPerRow) {
  Env e{EnvConfig{}};
  e.reset(1);
  std::stringstream ss;
  TrajectoryLog log(ss);
  for (int k = 0; k < 5; ++k) {
    const auto r = e.step(Action{});
    log.record(0.01 * (k + 1), e.state(), 0.375, r.info);
  }
  std::string header, line;
  std::getline(ss, header);
  EXPECT_EQ(header, trajectory_log_header());
  const auto commas = std::count(header.begin(), header.end(), ',');
  int rows = 0;
  while (std::getline(ss, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), commas);
    ++rows;
  }
  EXPECT_EQ(rows, 5);
}

TEST(Perturbation, ProfilesByName) {
  EXPECT_EQ(PerturbationProfile::by_name("aggressive").name, "aggressive");
  EXPECT_THROW(PerturbationProfile::by_name("wild"), std::exception);
  const auto none = PerturbationProfile::none();
  Rng rng(1);
  const auto p = EnvParams::sample(none, rng);
  EXPECT_DOUBLE_EQ(p.friction, 0.8);
  EXPECT_DOUBLE_EQ(p.payload, 0.0);
}
