#pragma once

#include "gaitlab/env_params.hpp"
#include "gaitlab/robot_model.hpp"
#include "gaitlab/terrain.hpp"

#include <stdexcept>

namespace gaitlab::dynamics {

enum class PowerMetering { Raw, PositiveOnly };

struct SimState {
  Vec3 base_position = Vec3::Zero();                // world
  Quat base_orientation = Quat::Identity();         // torso -> world
  Vec3 base_lin_vel = Vec3::Zero();                 // torso frame
  Vec3 base_ang_vel = Vec3::Zero();                 // torso frame
  JointVector q = JointVector::Zero();
  JointVector q_dot = JointVector::Zero();
  JointVector tau_applied = JointVector::Zero();
  ContactFlags foot_contact{};
  std::array<Vec2, kNumLegs> contact_anchor{};      // stick points of the tangential springs
  std::array<Vec3, kNumLegs> contact_force{};       // ground reaction on each foot, world
  double sim_time = 0.0;
  double energy_accum = 0.0;
  double last_power = 0.0;                          // metered power of the last step
};

struct SimConfig {
  double dt = 0.0025;
  double gravity = kGravity;
  bool contacts_enabled = true;
  PowerMetering metering = PowerMetering::Raw;
};

class SimulationDiverged : public std::runtime_error {
 public:
  SimulationDiverged(const std::string& what, SimState last_valid)
      : std::runtime_error(what), last_valid_(std::move(last_valid)) {}
  const SimState& last_valid() const { return last_valid_; }

 private:
  SimState last_valid_;
};

/// tau_i = strength_i * clamp(kp (q*_i - q_i) - kd qdot_i, +-torque_limit)
JointVector pd_torque(const JointVector& q_target, const SimState& state, const PdGains& gains,
                      const JointVector& motor_strength, double torque_limit);

/// Raw signed mechanical power sum_i tau_i * qdot_i.
double instantaneous_power(const JointVector& tau, const JointVector& q_dot);

double metered_power(const JointVector& tau, const JointVector& q_dot, PowerMetering mode);

/// World-frame position of each foot centre.
std::array<Vec3, kNumLegs> foot_positions(const RobotModel& model, const SimState& state);

/// Kinetic (torso + joint rotors) plus gravitational potential energy.
double mechanical_energy(const RobotModel& model, const SimConfig& config, const SimState& state,
                         const EnvParams& params);

/// Single-threaded integrator for one robot. Holds no per-step mutable state, so
/// one instance can serve any number of episodes; copies are independent.
class Simulator {
 public:
  Simulator(RobotModel model, SimConfig config);

  /// Advances one step of `config().dt` under torque `tau` (already limited).
  /// Throws SimulationDiverged when the successor is not finite.
  SimState step(const SimState& state, const JointVector& tau, const terrain::TerrainField& terrain,
                const EnvParams& params) const;

  /// Standing state at nominal joint angles with feet resting on the terrain.
  SimState standing_state(const terrain::TerrainField& terrain, double x = 0.0,
                          double y = 0.0) const;

  const RobotModel& model() const { return model_; }
  const SimConfig& config() const { return config_; }

 private:
  RobotModel model_;
  SimConfig config_;
};

}  // namespace gaitlab::dynamics
