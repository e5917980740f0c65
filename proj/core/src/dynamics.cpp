#include "gaitlab/dynamics.hpp"

#include "gaitlab/kinematics.hpp"

#include <algorithm>
#include <cmath>

namespace gaitlab {

void PdGains::validate() const {
  if (!(kp > 0.0)) throw std::invalid_argument("pd gains: kp must be > 0");
  if (!(kd >= 0.0)) throw std::invalid_argument("pd gains: kd must be >= 0");
}

namespace dynamics {

JointVector pd_torque(const JointVector& q_target, const SimState& state, const PdGains& gains,
                      const JointVector& motor_strength, double torque_limit) {
  if (!q_target.allFinite() || !state.q.allFinite() || !state.q_dot.allFinite() ||
      !motor_strength.allFinite())
    throw std::invalid_argument("pd_torque: non-finite input");
  gains.validate();
  const JointVector raw = gains.kp * (q_target - state.q) - gains.kd * state.q_dot;
  return motor_strength.cwiseProduct(raw.cwiseMax(-torque_limit).cwiseMin(torque_limit));
}

double instantaneous_power(const JointVector& tau, const JointVector& q_dot) {
  if (!tau.allFinite() || !q_dot.allFinite())
    throw std::invalid_argument("instantaneous_power: non-finite input");
  return tau.dot(q_dot);
}

double metered_power(const JointVector& tau, const JointVector& q_dot, PowerMetering mode) {
  if (mode == PowerMetering::Raw) return instantaneous_power(tau, q_dot);
  double p = 0.0;
  for (int i = 0; i < kNumJoints; ++i) p += std::max(tau[i] * q_dot[i], 0.0);
  return p;
}

std::array<Vec3, kNumLegs> foot_positions(const RobotModel& model, const SimState& s) {
  const Mat3 R = s.base_orientation.toRotationMatrix();
  std::array<Vec3, kNumLegs> out;
  for (int i = 0; i < kNumLegs; ++i)
    out[static_cast<std::size_t>(i)] =
        s.base_position +
        R * kinematics::foot_in_body(model.legs[static_cast<std::size_t>(i)],
                                     kinematics::leg_joints(s.q, i));
  return out;
}

namespace {

struct MassProperties {
  double mass;
  Vec3 com;      // torso frame, relative to base origin
  Mat3 inertia;  // about the COM, torso frame
};

Mat3 point_inertia(double m, const Vec3& r) {
  return m * (r.squaredNorm() * Mat3::Identity() - r * r.transpose());
}

MassProperties mass_properties(const RobotModel& model, const EnvParams& params) {
  MassProperties mp;
  const double payload = std::max(params.payload, 0.0);
  mp.mass = model.torso_mass + payload;
  mp.com = payload * params.com_offset / mp.mass;
  mp.inertia = Mat3(model.torso_inertia.asDiagonal()) + point_inertia(model.torso_mass, mp.com) +
               point_inertia(payload, params.com_offset - mp.com);
  return mp;
}

Quat exp_map(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-12) return Quat(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z()).normalized();
  return Quat(Eigen::AngleAxisd(angle, w / angle));
}

bool state_finite(const SimState& s) {
  return s.base_position.allFinite() && s.base_orientation.coeffs().allFinite() &&
         s.base_lin_vel.allFinite() && s.base_ang_vel.allFinite() && s.q.allFinite() &&
         s.q_dot.allFinite() && std::isfinite(s.energy_accum);
}

}  // namespace

double mechanical_energy(const RobotModel& model, const SimConfig& config, const SimState& s,
                         const EnvParams& params) {
  const auto mp = mass_properties(model, params);
  const Mat3 R = s.base_orientation.toRotationMatrix();
  const Vec3 com_w = s.base_position + R * mp.com;
  const Vec3 v_com = R * (s.base_lin_vel + s.base_ang_vel.cross(mp.com));
  double e = 0.5 * mp.mass * v_com.squaredNorm() +
             0.5 * s.base_ang_vel.dot(mp.inertia * s.base_ang_vel) +
             mp.mass * config.gravity * com_w.z();
  for (int j = 0; j < kNumJoints; ++j)
    e += 0.5 * model.joint_inertia_at(j) * s.q_dot[j] * s.q_dot[j];
  return e;
}

Simulator::Simulator(RobotModel model, SimConfig config)
    : model_(std::move(model)), config_(config) {
  model_.validate();
  if (!(config_.dt > 0.0)) throw std::invalid_argument("simulator: dt must be > 0");
}

SimState Simulator::standing_state(const terrain::TerrainField& terrain, double x, double y) const {
  SimState s;
  s.q = model_.nominal_stand_q;
  s.base_position = Vec3(x, y, 0.0);
  double ground = 0.0, foot_z = 0.0;
  for (int i = 0; i < kNumLegs; ++i) {
    const Vec3 fb = kinematics::foot_in_body(model_.legs[static_cast<std::size_t>(i)],
                                             kinematics::leg_joints(s.q, i));
    ground += terrain.height_at(x + fb.x(), y + fb.y());
    foot_z += fb.z();
  }
  ground /= kNumLegs;
  foot_z /= kNumLegs;
  const double sink = model_.torso_mass * config_.gravity /
                      (kNumLegs * model_.contact.normal_stiffness);
  s.base_position.z() = ground - foot_z + model_.foot_radius - sink;
  return s;
}

SimState Simulator::step(const SimState& s, const JointVector& tau,
                         const terrain::TerrainField& terrain, const EnvParams& params) const {
  const double dt = config_.dt;
  const auto mp = mass_properties(model_, params);
  const Mat3 R = s.base_orientation.toRotationMatrix();
  const Vec3 v_w = R * s.base_lin_vel;
  const Vec3 w_w = R * s.base_ang_vel;
  const Vec3 com_offset_w = R * mp.com;
  const Vec3 p_com = s.base_position + com_offset_w;
  const Vec3 v_com = v_w + w_w.cross(com_offset_w);
  const Vec3 g_vec(0.0, 0.0, -config_.gravity);
  const auto& cp = model_.contact;
  const double mu = std::max(params.friction, 0.0);

  SimState next = s;
  Vec3 force = mp.mass * g_vec;
  Vec3 torque_w = Vec3::Zero();
  JointVector tau_ext = JointVector::Zero();

  for (int i = 0; i < kNumLegs; ++i) {
    const auto li = static_cast<std::size_t>(i);
    next.contact_force[li].setZero();
    next.foot_contact[li] = false;
    if (!config_.contacts_enabled) continue;
    const auto& leg = model_.legs[li];
    const LegVector ql = kinematics::leg_joints(s.q, i);
    const Vec3 foot_b = kinematics::foot_in_body(leg, ql);
    const Mat3 J = kinematics::foot_jacobian(leg, ql);
    const Vec3 foot_w = s.base_position + R * foot_b;
    const Vec3 foot_v = v_w + w_w.cross(R * foot_b) + R * (J * s.q_dot.segment<3>(3 * i));
    const Vec3 contact_pt(foot_w.x(), foot_w.y(), foot_w.z() - model_.foot_radius);
    const double depth = terrain.height_at(contact_pt.x(), contact_pt.y()) - contact_pt.z();
    if (!(depth > 0.0)) continue;

    next.foot_contact[li] = true;
    const double fn = std::max(0.0, cp.normal_stiffness * depth - cp.normal_damping * foot_v.z());
    const Vec2 xy = contact_pt.head<2>();
    const Vec2 vxy = foot_v.head<2>();
    Vec2 anchor = s.foot_contact[li] ? s.contact_anchor[li] : xy;
    Vec2 ft = -cp.tangential_stiffness * (xy - anchor) - cp.tangential_damping * vxy;
    const double cap = mu * fn;
    const double ft_norm = ft.norm();
    if (ft_norm > cap) {
      ft *= ft_norm > 0.0 ? cap / ft_norm : 0.0;
      // Slide the anchor so the spring force equals the friction cap.
      anchor = xy + (ft + cp.tangential_damping * vxy) / cp.tangential_stiffness;
    }
    next.contact_anchor[li] = anchor;
    const Vec3 f(ft.x(), ft.y(), fn);
    next.contact_force[li] = f;
    force += f;
    torque_w += (contact_pt - p_com).cross(f);
    tau_ext.segment<3>(3 * i) = J.transpose() * (R.transpose() * f);
  }

  // Joints: reflected-inertia rotors driven by motor torque and the foot load.
  for (int j = 0; j < kNumJoints; ++j) {
    const double acc = (tau[j] + tau_ext[j] - model_.joint_damping * s.q_dot[j]) /
                       model_.joint_inertia_at(j);
    double qd = s.q_dot[j] + dt * acc;
    double q = s.q[j] + dt * qd;
    if (q < model_.joint_lower[j]) {
      q = model_.joint_lower[j];
      qd = std::max(qd, 0.0);
    } else if (q > model_.joint_upper[j]) {
      q = model_.joint_upper[j];
      qd = std::min(qd, 0.0);
    }
    next.q[j] = q;
    next.q_dot[j] = qd;
  }

  // Torso translation: semi-implicit Euler, with the gravity part integrated
  // exactly so free flight conserves energy.
  const Vec3 v_com_next = v_com + dt * force / mp.mass;
  const Vec3 p_com_next = p_com + dt * v_com_next - 0.5 * dt * dt * g_vec;

  // Torso rotation: implicit midpoint on Euler's equations (conserves
  // rotational kinetic energy when torque-free).
  const Vec3 torque_b = R.transpose() * torque_w;
  const Mat3& I = mp.inertia;
  const Mat3 I_inv = I.inverse();
  const Vec3 w0 = s.base_ang_vel;
  Vec3 w1 = w0 + dt * I_inv * (torque_b - w0.cross(I * w0));
  for (int it = 0; it < 6; ++it) {
    const Vec3 wm = 0.5 * (w0 + w1);
    w1 = w0 + dt * I_inv * (torque_b - wm.cross(I * wm));
  }
  const Vec3 w_mid = 0.5 * (w0 + w1);
  next.base_orientation = (s.base_orientation * exp_map(w_mid * dt)).normalized();
  const Mat3 R1 = next.base_orientation.toRotationMatrix();
  const Vec3 com_offset_w1 = R1 * mp.com;
  next.base_ang_vel = w1;
  next.base_position = p_com_next - com_offset_w1;
  const Vec3 v_origin = v_com_next - (R1 * w1).cross(com_offset_w1);
  next.base_lin_vel = R1.transpose() * v_origin;

  next.tau_applied = tau;
  next.sim_time = s.sim_time + dt;
  if (!state_finite(next) || !tau.allFinite())
    throw SimulationDiverged("simulation diverged (non-finite state)", s);
  next.last_power = metered_power(tau, next.q_dot, config_.metering);
  next.energy_accum = s.energy_accum + next.last_power * dt;
  return next;
}

}  // namespace dynamics
}  // namespace gaitlab
