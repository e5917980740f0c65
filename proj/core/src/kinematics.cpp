#include "gaitlab/kinematics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace gaitlab::kinematics {

Vec3 foot_in_hip(const LegGeometry& leg, const LegVector& q) {
  const double l1 = leg.upper_length, l2 = leg.lower_length;
  const double a = -l1 * std::sin(q[1]) - l2 * std::sin(q[1] + q[2]);
  const double b = leg.abduction_offset;
  const double c = -l1 * std::cos(q[1]) - l2 * std::cos(q[1] + q[2]);
  const double s0 = std::sin(q[0]), c0 = std::cos(q[0]);
  return {a, b * c0 - c * s0, b * s0 + c * c0};
}

Mat3 foot_jacobian(const LegGeometry& leg, const LegVector& q) {
  const double l1 = leg.upper_length, l2 = leg.lower_length;
  const double s1 = std::sin(q[1]), c1 = std::cos(q[1]);
  const double s12 = std::sin(q[1] + q[2]), c12 = std::cos(q[1] + q[2]);
  const double a = -l1 * s1 - l2 * s12;
  const double b = leg.abduction_offset;
  const double c = -l1 * c1 - l2 * c12;
  const double s0 = std::sin(q[0]), c0 = std::cos(q[0]);

  const double da1 = c, dc1 = -a;
  const double da2 = -l2 * c12, dc2 = l2 * s12;

  Mat3 J;
  J(0, 0) = 0.0;
  J(1, 0) = -b * s0 - c * c0;
  J(2, 0) = b * c0 - c * s0;
  J(0, 1) = da1;
  J(1, 1) = -dc1 * s0;
  J(2, 1) = dc1 * c0;
  J(0, 2) = da2;
  J(1, 2) = -dc2 * s0;
  J(2, 2) = dc2 * c0;
  return J;
}

IkResult inverse(const RobotModel& model, int leg, const Vec3& target, const LegVector& q_seed,
                 int iterations) {
  const auto& geom = model.legs[static_cast<std::size_t>(leg)];
  const LegVector lo = model.joint_lower.segment<kJointsPerLeg>(kJointsPerLeg * leg);
  const LegVector hi = model.joint_upper.segment<kJointsPerLeg>(kJointsPerLeg * leg);
  IkResult out;
  out.q = q_seed.cwiseMax(lo).cwiseMin(hi);
  constexpr double kSingularSigma = 0.02;
  for (int it = 0; it < iterations; ++it) {
    const Vec3 err = target - foot_in_hip(geom, out.q);
    if (err.norm() < 1e-9) break;
    const Mat3 J = foot_jacobian(geom, out.q);
    Eigen::JacobiSVD<Mat3> svd(J);
    const double sigma_min = svd.singularValues().minCoeff();
    double damping = 1e-4;
    if (sigma_min < kSingularSigma) {
      out.near_singular = true;
      damping = 1e-2;
    }
    const Mat3 JJt = J * J.transpose() + damping * damping * Mat3::Identity();
    const LegVector dq = J.transpose() * JJt.ldlt().solve(err);
    out.q = (out.q + dq).cwiseMax(lo).cwiseMin(hi);
  }
  out.residual = (target - foot_in_hip(geom, out.q)).norm();
  return out;
}

}  // namespace gaitlab::kinematics
