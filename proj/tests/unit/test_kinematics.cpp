#include "gaitlab/kinematics.hpp"

#include <gtest/gtest.h>

using namespace gaitlab;

namespace {
const RobotModel kModel = RobotModel::a1_like();
}

TEST(Kinematics, ZeroAnglesLegPointsDown) {
  const auto& leg = kModel.legs[static_cast<int>(Leg::LF)];
  const Vec3 p = kinematics::foot_in_hip(leg, LegVector::Zero());
  EXPECT_NEAR(p.x(), 0.0, 1e-12);
  EXPECT_NEAR(p.y(), leg.abduction_offset, 1e-12);
  EXPECT_NEAR(p.z(), -(leg.upper_length + leg.lower_length), 1e-12);
}

TEST(Kinematics, JacobianMatchesFiniteDifferences) {
  Rng rng(4);
  for (int leg = 0; leg < kNumLegs; ++leg) {
    for (int trial = 0; trial < 20; ++trial) {
      const LegVector q(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 1.5), rng.uniform(-2.5, -1.0));
      const Mat3 J = kinematics::foot_jacobian(kModel.legs[leg], q);
      for (int j = 0; j < 3; ++j) {
        LegVector qp = q, qm = q;
        const double h = 1e-6;
        qp[j] += h;
        qm[j] -= h;
        const Vec3 fd = (kinematics::foot_in_hip(kModel.legs[leg], qp) -
                         kinematics::foot_in_hip(kModel.legs[leg], qm)) / (2 * h);
        EXPECT_LT((J.col(j) - fd).norm(), 1e-7);
      }
    }
  }
}

TEST(Kinematics, InverseRecoversReachableTargets) {
  Rng rng(5);
  for (int leg = 0; leg < kNumLegs; ++leg) {
    for (int trial = 0; trial < 20; ++trial) {
      const LegVector q(rng.uniform(-0.3, 0.3), rng.uniform(0.3, 1.0), rng.uniform(-2.0, -1.1));
      const Vec3 target = kinematics::foot_in_hip(kModel.legs[leg], q);
      const auto ik = kinematics::inverse(kModel, leg, target,
                                          kModel.nominal_stand_q.segment<3>(3 * leg), 40);
      EXPECT_LT(ik.residual, 1e-6);
      EXPECT_LT((kinematics::foot_in_hip(kModel.legs[leg], ik.q) - target).norm(), 1e-6);
    }
  }
}

TEST(Kinematics, InverseHonoursJointLimits) {
  const Vec3 far(0.0, 0.08, -1.0);  // beyond reach
  const auto ik = kinematics::inverse(kModel, 1, far, kModel.nominal_stand_q.segment<3>(3));
  for (int j = 0; j < 3; ++j) {
    EXPECT_GE(ik.q[j], kModel.joint_lower[3 + j] - 1e-12);
    EXPECT_LE(ik.q[j], kModel.joint_upper[3 + j] + 1e-12);
  }
  EXPECT_GT(ik.residual, 0.1);
}
