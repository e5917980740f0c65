#pragma once

#include "gaitlab/common.hpp"

#include <string>

namespace gaitlab {

struct LegGeometry {
  Vec3 hip = Vec3::Zero();  // HAA axis origin in torso frame
  double abduction_offset = 0.08;  // signed lateral offset HAA -> HFE (right legs negative)
  double upper_length = 0.2;
  double lower_length = 0.2;
};

struct ContactParams {
  double normal_stiffness = 5000.0;   // N/m
  double normal_damping = 100.0;      // N s/m
  double tangential_stiffness = 5000.0;
  double tangential_damping = 30.0;   // higher values chatter against the rotor inertia at dt 2.5 ms
};

/// Torso rigid body with massless legs. Joint inertias are reflected rotor
/// plus link inertia about each joint axis.
struct RobotModel {
  double torso_mass = 12.0;
  Vec3 torso_inertia{0.06, 0.17, 0.19};  // principal moments about the torso frame
  std::array<LegGeometry, kNumLegs> legs{};
  double foot_radius = 0.02;
  JointVector joint_lower = JointVector::Zero();
  JointVector joint_upper = JointVector::Zero();
  JointVector nominal_stand_q = JointVector::Zero();
  Vec3 joint_inertia{0.03, 0.03, 0.03};  // per joint type (HAA, HFE, KFE)
  double joint_damping = 0.0;
  double torque_limit = 33.5;
  double hip_height_nominal = 0.27;
  ContactParams contact{};

  /// Throws std::invalid_argument when an invariant fails.
  void validate() const;

  double joint_inertia_at(int joint) const { return joint_inertia[joint % kJointsPerLeg]; }

  static RobotModel a1_like();
  static RobotModel load(const std::string& path);
  static RobotModel from_yaml_string(const std::string& text);
  std::string to_yaml() const;
};

}  // namespace gaitlab
