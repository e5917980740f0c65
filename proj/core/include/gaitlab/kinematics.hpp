#pragma once

#include "gaitlab/robot_model.hpp"

namespace gaitlab::kinematics {

/// Foot-centre position relative to the hip (HAA origin), torso frame.
Vec3 foot_in_hip(const LegGeometry& leg, const LegVector& q);

/// d(foot_in_hip)/dq, torso frame.
Mat3 foot_jacobian(const LegGeometry& leg, const LegVector& q);

inline Vec3 foot_in_body(const LegGeometry& leg, const LegVector& q) {
  return leg.hip + foot_in_hip(leg, q);
}

inline LegVector leg_joints(const JointVector& q, int leg) {
  return q.segment<kJointsPerLeg>(kJointsPerLeg * leg);
}

struct IkResult {
  LegVector q = LegVector::Zero();
  double residual = 0.0;
  bool near_singular = false;  // damped pseudo-inverse had to regularise
};

/// Damped least-squares IK seeded at `q_seed`; joint limits honoured.
IkResult inverse(const RobotModel& model, int leg, const Vec3& foot_hip_target,
                 const LegVector& q_seed, int iterations = 20);

}  // namespace gaitlab::kinematics
