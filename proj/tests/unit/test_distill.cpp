#include "gaitlab/distill.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace gaitlab;
using namespace gaitlab::distill;

namespace {

// Independent statement of the code: weights of the two bracketing modes fall
// linearly with distance from each mode.
Eigen::Vector3d code_oracle(double v) {
  const double m[3] = {0.375, 0.9, 1.5};
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (int k = 0; k < 2; ++k) {
    if (v >= m[k] && v <= m[k + 1]) {
      c[k] = (m[k + 1] - v) / (m[k + 1] - m[k]);
      c[k + 1] = (v - m[k]) / (m[k + 1] - m[k]);
      return c;
    }
  }
  return c;
}

}  // namespace

TEST(VelocityCode, ExactAtModes) {
  EXPECT_EQ(encode_velocity(0.375), Eigen::Vector3d(1, 0, 0));
  EXPECT_EQ(encode_velocity(0.9), Eigen::Vector3d(0, 1, 0));
  EXPECT_EQ(encode_velocity(1.5), Eigen::Vector3d(0, 0, 1));
  EXPECT_EQ(encode_velocity(1.2), Eigen::Vector3d(0, 0.5, 0.5));
}

TEST(VelocityCode, InterpolatesBetweenNearestModes) {
  const auto c = encode_velocity(0.5);
  EXPECT_NEAR(c[0], 0.762, 1e-3);
  EXPECT_NEAR(c[1], 0.238, 1e-3);
  EXPECT_EQ(c[2], 0.0);
}

TEST(VelocityCode, MatchesOracleAndRoundTrips) {
  Rng rng(2);
  for (int k = 0; k < 2000; ++k) {
    const double v = rng.uniform(0.375, 1.5);
    const auto c = encode_velocity(v);
    EXPECT_LT((c - code_oracle(v)).cwiseAbs().maxCoeff(), 1e-11);
    EXPECT_NEAR(c.sum(), 1.0, 1e-12);
    EXPECT_GE(c.minCoeff(), 0.0);
    EXPECT_LE((c.array() > 0.0).count(), 2);
    EXPECT_NEAR(decode_velocity(c), v, 1e-9);
  }
}

TEST(VelocityCode, ContinuousAcrossModes) {
  for (double m : kModes) {
    for (double eps : {1e-9, -1e-9}) {
      const double v = std::clamp(m + eps, 0.375, 1.5);
      EXPECT_LT((encode_velocity(v) - encode_velocity(m)).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(VelocityCode, RejectsOutOfRange) {
  EXPECT_THROW(encode_velocity(0.3), std::invalid_argument);
  EXPECT_THROW(encode_velocity(1.6), std::invalid_argument);
  EXPECT_THROW(encode_velocity(std::nan("")), std::invalid_argument);
  EXPECT_THROW(decode_velocity(Eigen::Vector3d(0.5, 0.4, 0.0)), std::invalid_argument);
}

TEST(DistillWeight, AnnealsToZeroAtHalfBudget) {
  EXPECT_DOUBLE_EQ(distill_weight(0, 500), 1.0);
  EXPECT_DOUBLE_EQ(distill_weight(125, 500), 0.5);
  EXPECT_DOUBLE_EQ(distill_weight(250, 500), 0.0);
  EXPECT_DOUBLE_EQ(distill_weight(499, 500), 0.0);
  double prev = 2.0;
  for (int e = 0; e < 5000; ++e) {
    const double w = distill_weight(e, 5000);
    EXPECT_LE(w, prev);
    EXPECT_EQ(w, distill_weight(e, 5000));
    if (e >= 2500) EXPECT_EQ(w, 0.0);
    else EXPECT_GT(w, 0.0);
    prev = w;
  }
  // Odd budgets: the boundary is at 2.5 epochs, so epoch 3 is the first at zero.
  EXPECT_GT(distill_weight(2, 5), 0.0);
  EXPECT_EQ(distill_weight(3, 5), 0.0);
  EXPECT_THROW(distill_weight(0, 0), std::invalid_argument);
  EXPECT_THROW(distill_weight(-1, 10), std::invalid_argument);
}

TEST(Sampler, ModeProbabilityAndRange) {
  Rng rng(4);
  int on_mode = 0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    const double v = sample_velocity(rng, 0.25);
    EXPECT_GE(v, 0.375);
    EXPECT_LE(v, 1.5);
    on_mode += mode_index(v) >= 0;
  }
  EXPECT_NEAR(static_cast<double>(on_mode) / n, 0.25, 0.015);
  EXPECT_EQ(mode_index(0.9), 1);
  EXPECT_EQ(mode_index(0.91), -1);
}

TEST(Schedule, CsvAndLookup) {
  std::stringstream ss("t_start_s,v_target\n0,0.375\n5,0.9\n\n10,1.5\n");
  const auto s = VelocitySchedule::read_csv(ss);
  EXPECT_DOUBLE_EQ(s.at(0.0), 0.375);
  EXPECT_DOUBLE_EQ(s.at(4.99), 0.375);
  EXPECT_DOUBLE_EQ(s.at(5.0), 0.9);
  EXPECT_DOUBLE_EQ(s.at(100.0), 1.5);
  EXPECT_DOUBLE_EQ(s.duration_hint(), 10.0);
  const auto step = VelocitySchedule::step(0.5, 1.2, 3.0);
  EXPECT_DOUBLE_EQ(step.at(2.9), 0.5);
  EXPECT_DOUBLE_EQ(step.at(3.0), 1.2);
}

TEST(Schedule, CsvErrorsNameTheLine) {
  auto message = [](const std::string& text) {
    std::stringstream ss(text);
    try {
      VelocitySchedule::read_csv(ss);
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("time,v\n0,1\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("t_start_s,v_target\n0,0.5\n1,abc\n").find("line 3"), std::string::npos);
  EXPECT_NE(message("t_start_s,v_target\n0,0.5,7\n").find("line 2"), std::string::npos);
  EXPECT_FALSE(message("t_start_s,v_target\n2,0.5\n1,0.9\n").empty());
  EXPECT_FALSE(message("t_start_s,v_target\n").empty());
}

TEST(Config, StudentShapeIsChecked) {
  DistillConfig c;
  EXPECT_NO_THROW(c.validate());
  c.student.latent = learn::LatentSource::Factors;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = DistillConfig{};
  c.mode_probability = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(target_states_from_string("expert"), TargetStates::ExpertVisited);
  EXPECT_THROW(target_states_from_string("both"), std::invalid_argument);
}

TEST(Imitation, WarmStartReachesExpertWithinTenthRadian) {
  // Behavioral cloning on a fixed set of 1000 expert-visited states at the trot
  // mode converges to the expert's action means on that set.
  // A freshly initialized policy outputs near-zero actions; perturbed weights
  // give targets far enough from the student's start to make the test bite.
  learn::Agent expert(learn::AgentConfig{}, 21);
  Rng perturb(20);
  learn::Vector p = expert.flat_params();
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += 0.05 * perturb.normal();
  expert.set_flat_params(p);
  const env::EnvConfig ec;
  const auto states = collect_expert_states(expert, ec, 0.9, 1000, 5);
  ASSERT_EQ(states.size(), 1000u);
  for (const auto& c : states.vcodes) EXPECT_EQ(c, Eigen::Vector3d(0, 1, 0));

  learn::Agent student(DistillConfig::default_student(), 22);
  learn::Matrix raw(learn::kStepDim, static_cast<Eigen::Index>(states.size()));
  for (std::size_t k = 0; k < states.size(); ++k) raw.col(static_cast<Eigen::Index>(k)) = states.steps[k];
  student.step_norm.update(raw);
  nn::Adam opt(student.num_params(), {1e-3, 0.9, 0.999, 1e-8});
  Rng rng(23);
  const double before = imitation_error(student, states);
  ASSERT_GT(std::sqrt(before), 0.1) << "rms L2 " << std::sqrt(before);
  for (int round = 0; round < 60 && imitation_error(student, states) >= 0.01; ++round)
    imitation_update(student, opt, states, 1.0, 5, 100, 1.0, rng);
  const double after = imitation_error(student, states);
  EXPECT_LT(after, before);
  const learn::Matrix mean = student.action_mean(student_inputs(student, states));
  double l2 = 0.0;
  for (std::size_t k = 0; k < states.size(); ++k)
    l2 += (mean.col(static_cast<Eigen::Index>(k)) - states.targets[k]).norm();
  l2 /= static_cast<double>(states.size());
  EXPECT_LT(l2, 0.1) << "mean L2 " << l2;
}
