#include "gaitlab/dynamics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace gaitlab;
using namespace gaitlab::dynamics;

namespace {

const RobotModel kModel = RobotModel::a1_like();

SimConfig no_contacts() {
  SimConfig c;
  c.contacts_enabled = false;
  return c;
}

}  // namespace

TEST(PdTorque, ClampsThenScalesByStrength) {
  SimState s;
  JointVector target = JointVector::Constant(10.0);  // saturates
  JointVector strength = JointVector::Constant(0.9);
  const JointVector tau = pd_torque(target, s, PdGains{55.0, 0.8}, strength, 33.5);
  for (int j = 0; j < kNumJoints; ++j) EXPECT_DOUBLE_EQ(tau[j], 0.9 * 33.5);

  s.q_dot.setConstant(2.0);
  target.setConstant(0.1);
  const JointVector t2 = pd_torque(target, s, PdGains{50.0, 0.5}, JointVector::Ones(), 33.5);
  for (int j = 0; j < kNumJoints; ++j) EXPECT_DOUBLE_EQ(t2[j], 50.0 * 0.1 - 0.5 * 2.0);
}

TEST(PdTorque, RejectsNonFinite) {
  SimState s;
  JointVector target = JointVector::Zero();
  target[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(pd_torque(target, s, {}, JointVector::Ones(), 33.5), std::invalid_argument);
  EXPECT_THROW(pd_torque(JointVector::Zero(), s, PdGains{0.0, 0.1}, JointVector::Ones(), 33.5),
               std::invalid_argument);
}

TEST(Power, RawIsSignedSumPositiveClampsPerJoint) {
  JointVector tau = JointVector::Zero(), qd = JointVector::Zero();
  tau[0] = 2.0;
  qd[0] = 3.0;  // +6
  tau[1] = 1.0;
  qd[1] = -4.0;  // -4
  EXPECT_DOUBLE_EQ(instantaneous_power(tau, qd), 2.0);
  EXPECT_DOUBLE_EQ(metered_power(tau, qd, PowerMetering::Raw), 2.0);
  EXPECT_DOUBLE_EQ(metered_power(tau, qd, PowerMetering::PositiveOnly), 6.0);
}

TEST(Simulator, FreeFallMatchesClosedForm) {
  const Simulator sim(kModel, no_contacts());
  SimState s;
  s.q = kModel.nominal_stand_q;
  s.base_position = Vec3(0.0, 0.0, 2.0);
  const auto field = terrain::flat_field();
  const EnvParams params;
  for (int n = 0; n < 400; ++n) s = sim.step(s, JointVector::Zero(), field, params);
  const double t = 400 * sim.config().dt;
  EXPECT_NEAR(s.base_position.z(), 2.0 - 0.5 * kGravity * t * t, 1e-9);
  EXPECT_NEAR(s.base_lin_vel.z(), -kGravity * t, 1e-9);
  EXPECT_NEAR(s.sim_time, t, 1e-12);
}

TEST(Simulator, TorqueFreeFlightConservesEnergy) {
  const Simulator sim(kModel, no_contacts());
  SimState s;
  s.q = kModel.nominal_stand_q;
  s.base_position = Vec3(0.0, 0.0, 50.0);
  s.base_lin_vel = Vec3(0.5, -0.2, 1.0);
  s.base_ang_vel = Vec3(0.3, -0.7, 0.4);
  s.q_dot.setConstant(0.1);
  const auto field = terrain::flat_field();
  EnvParams params;
  params.payload = 0.4;
  params.com_offset = Vec3(0.05, -0.03, 0.0);
  const double e0 = mechanical_energy(kModel, sim.config(), s, params);
  for (int n = 0; n < 800; ++n) s = sim.step(s, JointVector::Zero(), field, params);
  const double e1 = mechanical_energy(kModel, sim.config(), s, params);
  EXPECT_NEAR(e1, e0, 1e-6 * std::abs(e0));
}

TEST(Simulator, StandingUnderPdStaysPut) {
  const Simulator sim(kModel, SimConfig{});
  const auto field = terrain::flat_field();
  const EnvParams params;
  SimState s = sim.standing_state(field);
  const double z0 = s.base_position.z();
  for (int n = 0; n < 800; ++n) {
    const JointVector tau = pd_torque(kModel.nominal_stand_q, s, params.gains, params.motor_strength,
                                      kModel.torque_limit);
    s = sim.step(s, tau, field, params);
  }
  EXPECT_NEAR(s.base_position.z(), z0, 0.03);
  EXPECT_LT(s.base_position.head<2>().norm(), 0.02);
  for (bool c : s.foot_contact) EXPECT_TRUE(c);
  double fz = 0.0;
  for (const auto& f : s.contact_force) fz += f.z();
  EXPECT_NEAR(fz, kModel.torso_mass * kGravity, 0.05 * kModel.torso_mass * kGravity);
}

TEST(Simulator, FrictionConeRespected) {
  const Simulator sim(kModel, SimConfig{});
  const auto field = terrain::flat_field();
  EnvParams params;
  params.friction = 0.3;
  SimState s = sim.standing_state(field);
  s.base_lin_vel = Vec3(1.5, 0.5, 0.0);  // drag the feet
  for (int n = 0; n < 200; ++n) {
    const JointVector tau = pd_torque(kModel.nominal_stand_q, s, params.gains, params.motor_strength,
                                      kModel.torque_limit);
    s = sim.step(s, tau, field, params);
    for (const auto& f : s.contact_force)
      ASSERT_LE(f.head<2>().norm(), params.friction * f.z() + 1e-9);
  }
}

TEST(Simulator, NonFiniteTorqueThrowsWithLastValidState) {
  const Simulator sim(kModel, SimConfig{});
  const auto field = terrain::flat_field();
  const SimState s = sim.standing_state(field);
  JointVector tau = JointVector::Zero();
  tau[2] = std::numeric_limits<double>::infinity();
  try {
    sim.step(s, tau, field, EnvParams{});
    FAIL() << "expected SimulationDiverged";
  } catch (const SimulationDiverged& e) {
    EXPECT_EQ(e.last_valid().base_position, s.base_position);
  }
}

TEST(Simulator, JointLimitsHold) {
  const Simulator sim(kModel, no_contacts());
  SimState s;
  s.q = kModel.nominal_stand_q;
  s.base_position.z() = 10.0;
  const auto field = terrain::flat_field();
  const JointVector tau = JointVector::Constant(kModel.torque_limit);
  for (int n = 0; n < 400; ++n) {
    s = sim.step(s, tau, field, EnvParams{});
    ASSERT_TRUE((s.q.array() <= kModel.joint_upper.array() + 1e-12).all());
    ASSERT_TRUE((s.q.array() >= kModel.joint_lower.array() - 1e-12).all());
  }
}

TEST(Simulator, EnergyAccumulatesMeteredPower) {
  const Simulator sim(kModel, no_contacts());
  SimState s;
  s.q = kModel.nominal_stand_q;
  const auto field = terrain::flat_field();
  JointVector tau = JointVector::Constant(1.0);
  double sum = 0.0;
  for (int n = 0; n < 50; ++n) {
    s = sim.step(s, tau, field, EnvParams{});
    sum += tau.dot(s.q_dot) * sim.config().dt;
    EXPECT_DOUBLE_EQ(s.last_power, tau.dot(s.q_dot));
  }
  EXPECT_NEAR(s.energy_accum, sum, 1e-12);
}

TEST(RobotModel, YamlRoundTrip) {
  const RobotModel m = RobotModel::a1_like();
  const RobotModel r = RobotModel::from_yaml_string(m.to_yaml());
  EXPECT_EQ(r.to_yaml(), m.to_yaml());
  EXPECT_DOUBLE_EQ(r.legs[2].hip.x(), m.legs[2].hip.x());
  EXPECT_DOUBLE_EQ(r.contact.tangential_damping, m.contact.tangential_damping);
}

TEST(RobotModel, ShippedYamlMatchesBuiltIn) {
  const RobotModel r = RobotModel::load(std::string(GAITLAB_TEST_CONFIG_DIR) + "/robots/a1_like.yaml");
  const RobotModel m = RobotModel::a1_like();
  EXPECT_DOUBLE_EQ(r.torso_mass, m.torso_mass);
  EXPECT_TRUE(r.nominal_stand_q.isApprox(m.nominal_stand_q));
  EXPECT_TRUE(r.joint_lower.isApprox(m.joint_lower));
  EXPECT_DOUBLE_EQ(r.hip_height_nominal, m.hip_height_nominal);
}

TEST(RobotModel, ValidationRejectsBadModels) {
  RobotModel m = RobotModel::a1_like();
  m.torso_mass = -1.0;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = RobotModel::a1_like();
  m.joint_lower[0] = m.joint_upper[0];
  EXPECT_THROW(m.validate(), std::invalid_argument);
  EXPECT_THROW(RobotModel::from_yaml_string("torso_mass: [1, 2]\n"), ConfigError);
}
