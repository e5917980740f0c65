#include "gaitlab/robot_model.hpp"

#include "gaitlab/yaml_util.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace gaitlab {

RobotModel RobotModel::a1_like() {
  RobotModel m;
  const double hx = 0.183, hy = 0.047, ab = 0.08;
  // RF, LF, RR, LR
  const std::array<Vec3, kNumLegs> hips{Vec3(hx, -hy, 0.0), Vec3(hx, hy, 0.0), Vec3(-hx, -hy, 0.0),
                                        Vec3(-hx, hy, 0.0)};
  const std::array<double, kNumLegs> side{-1.0, 1.0, -1.0, 1.0};
  for (int i = 0; i < kNumLegs; ++i) {
    auto& leg = m.legs[static_cast<std::size_t>(i)];
    leg.hip = hips[static_cast<std::size_t>(i)];
    leg.abduction_offset = side[static_cast<std::size_t>(i)] * ab;
    leg.upper_length = 0.2;
    leg.lower_length = 0.2;
    m.joint_lower.segment<3>(3 * i) << -0.80, -1.05, -2.70;
    m.joint_upper.segment<3>(3 * i) << 0.80, 4.19, -0.92;
    m.nominal_stand_q.segment<3>(3 * i) << 0.0, 0.67, -1.30;
  }
  return m;
}

void RobotModel::validate() const {
  if (!(torso_mass > 0.0)) throw std::invalid_argument("robot model: torso_mass must be > 0");
  if (!(torso_inertia.minCoeff() > 0.0))
    throw std::invalid_argument("robot model: torso inertia must be positive-definite");
  for (const auto& leg : legs)
    if (!(leg.upper_length > 0.0 && leg.lower_length > 0.0))
      throw std::invalid_argument("robot model: link lengths must be > 0");
  if (!(foot_radius >= 0.0)) throw std::invalid_argument("robot model: foot_radius must be >= 0");
  if (!(joint_inertia.minCoeff() > 0.0))
    throw std::invalid_argument("robot model: joint inertia must be > 0");
  if ((joint_lower.array() >= joint_upper.array()).any())
    throw std::invalid_argument("robot model: joint limits must satisfy min < max");
  if ((nominal_stand_q.array() < joint_lower.array()).any() ||
      (nominal_stand_q.array() > joint_upper.array()).any())
    throw std::invalid_argument("robot model: nominal_stand_q outside joint limits");
  if (!(torque_limit > 0.0)) throw std::invalid_argument("robot model: torque_limit must be > 0");
  if (!(hip_height_nominal > 0.0))
    throw std::invalid_argument("robot model: hip_height_nominal must be > 0");
  if (!(contact.normal_stiffness > 0.0 && contact.tangential_stiffness > 0.0 &&
        contact.normal_damping >= 0.0 && contact.tangential_damping >= 0.0))
    throw std::invalid_argument("robot model: contact parameters out of range");
}

namespace {

Vec3 vec3(const std::vector<double>& v) { return {v[0], v[1], v[2]}; }

std::vector<double> std_vec(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

RobotModel RobotModel::from_yaml_string(const std::string& text) {
  const YAML::Node root = yaml::parse(text);
  yaml::check_keys(root,
                   {"torso_mass", "torso_inertia", "foot_radius", "hip_height_nominal",
                    "torque_limit", "joint_inertia", "joint_damping", "joint_limits",
                    "nominal_stand", "legs", "contact"},
                   "robot model");
  RobotModel m = a1_like();
  m.torso_mass = yaml::get(root, "torso_mass", m.torso_mass);
  m.torso_inertia = vec3(yaml::get_list(root, "torso_inertia", 3, std_vec(m.torso_inertia)));
  m.foot_radius = yaml::get(root, "foot_radius", m.foot_radius);
  m.hip_height_nominal = yaml::get(root, "hip_height_nominal", m.hip_height_nominal);
  m.torque_limit = yaml::get(root, "torque_limit", m.torque_limit);
  m.joint_inertia = vec3(yaml::get_list(root, "joint_inertia", 3, std_vec(m.joint_inertia)));
  m.joint_damping = yaml::get(root, "joint_damping", m.joint_damping);

  if (const auto lim = root["joint_limits"]) {
    yaml::check_keys(lim, {"haa", "hfe", "kfe"}, "joint_limits");
    const char* names[] = {"haa", "hfe", "kfe"};
    for (int j = 0; j < 3; ++j) {
      const auto r = yaml::get_list(lim, names[j], 2,
                                    {m.joint_lower[j], m.joint_upper[j]});
      for (int leg = 0; leg < kNumLegs; ++leg) {
        m.joint_lower[3 * leg + j] = r[0];
        m.joint_upper[3 * leg + j] = r[1];
      }
    }
  }
  if (root["nominal_stand"]) {
    const auto q = yaml::get_list(root, "nominal_stand", 3, {});
    for (int leg = 0; leg < kNumLegs; ++leg)
      for (int j = 0; j < 3; ++j) m.nominal_stand_q[3 * leg + j] = q[static_cast<std::size_t>(j)];
  }
  if (const auto legs = root["legs"]) {
    yaml::check_keys(legs, {"RF", "LF", "RR", "LR"}, "legs");
    for (int i = 0; i < kNumLegs; ++i) {
      const std::string name(kLegNames[static_cast<std::size_t>(i)]);
      const auto node = legs[name];
      if (!node) continue;
      yaml::check_keys(node, {"hip", "abduction_offset", "upper", "lower"}, "legs." + name);
      auto& leg = m.legs[static_cast<std::size_t>(i)];
      leg.hip = vec3(yaml::get_list(node, "hip", 3, std_vec(leg.hip)));
      leg.abduction_offset = yaml::get(node, "abduction_offset", leg.abduction_offset);
      leg.upper_length = yaml::get(node, "upper", leg.upper_length);
      leg.lower_length = yaml::get(node, "lower", leg.lower_length);
      yaml::expect(leg.upper_length > 0.0, node, "upper", "link length must be > 0");
      yaml::expect(leg.lower_length > 0.0, node, "lower", "link length must be > 0");
    }
  }
  if (const auto c = root["contact"]) {
    yaml::check_keys(c,
                     {"normal_stiffness", "normal_damping", "tangential_stiffness",
                      "tangential_damping"},
                     "contact");
    m.contact.normal_stiffness = yaml::get(c, "normal_stiffness", m.contact.normal_stiffness);
    m.contact.normal_damping = yaml::get(c, "normal_damping", m.contact.normal_damping);
    m.contact.tangential_stiffness =
        yaml::get(c, "tangential_stiffness", m.contact.tangential_stiffness);
    m.contact.tangential_damping = yaml::get(c, "tangential_damping", m.contact.tangential_damping);
  }
  yaml::expect(m.torso_mass > 0.0, root, "torso_mass", "must be > 0");
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), 0);
  }
  return m;
}

RobotModel RobotModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open robot model '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_yaml_string(ss.str());
}

std::string RobotModel::to_yaml() const {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "torso_mass" << YAML::Value << torso_mass;
  out << YAML::Key << "torso_inertia" << YAML::Value << YAML::Flow << std_vec(torso_inertia);
  out << YAML::Key << "foot_radius" << YAML::Value << foot_radius;
  out << YAML::Key << "hip_height_nominal" << YAML::Value << hip_height_nominal;
  out << YAML::Key << "torque_limit" << YAML::Value << torque_limit;
  out << YAML::Key << "joint_inertia" << YAML::Value << YAML::Flow << std_vec(joint_inertia);
  out << YAML::Key << "joint_damping" << YAML::Value << joint_damping;
  out << YAML::Key << "joint_limits" << YAML::Value << YAML::BeginMap;
  const char* names[] = {"haa", "hfe", "kfe"};
  for (int j = 0; j < 3; ++j)
    out << YAML::Key << names[j] << YAML::Value << YAML::Flow
        << std::vector<double>{joint_lower[j], joint_upper[j]};
  out << YAML::EndMap;
  out << YAML::Key << "nominal_stand" << YAML::Value << YAML::Flow
      << std::vector<double>{nominal_stand_q[0], nominal_stand_q[1], nominal_stand_q[2]};
  out << YAML::Key << "legs" << YAML::Value << YAML::BeginMap;
  for (int i = 0; i < kNumLegs; ++i) {
    const auto& leg = legs[static_cast<std::size_t>(i)];
    out << YAML::Key << std::string(kLegNames[static_cast<std::size_t>(i)]) << YAML::Value
        << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "hip" << YAML::Value << YAML::Flow << std_vec(leg.hip);
    out << YAML::Key << "abduction_offset" << YAML::Value << leg.abduction_offset;
    out << YAML::Key << "upper" << YAML::Value << leg.upper_length;
    out << YAML::Key << "lower" << YAML::Value << leg.lower_length;
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  out << YAML::Key << "contact" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "normal_stiffness" << YAML::Value << contact.normal_stiffness;
  out << YAML::Key << "normal_damping" << YAML::Value << contact.normal_damping;
  out << YAML::Key << "tangential_stiffness" << YAML::Value << contact.tangential_stiffness;
  out << YAML::Key << "tangential_damping" << YAML::Value << contact.tangential_damping;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace gaitlab
