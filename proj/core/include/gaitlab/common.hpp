#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gaitlab {

inline constexpr int kNumLegs = 4;
inline constexpr int kJointsPerLeg = 3;
inline constexpr int kNumJoints = kNumLegs * kJointsPerLeg;

// Leg order used everywhere: right-front, left-front, right-rear, left-rear.
enum class Leg : int { RF = 0, LF = 1, RR = 2, LR = 3 };
inline constexpr std::array<std::string_view, kNumLegs> kLegNames{"RF", "LF", "RR", "LR"};

// Per-leg joint order: hip abduction, hip flexion, knee flexion.
enum class JointType : int { HAA = 0, HFE = 1, KFE = 2 };

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using JointVector = Eigen::Matrix<double, kNumJoints, 1>;
using LegVector = Eigen::Matrix<double, kJointsPerLeg, 1>;
using ContactFlags = std::array<bool, kNumLegs>;

inline constexpr double kGravity = 9.81;

/// Thrown when a caller violates an operation's precondition at runtime
/// (e.g. stepping a finished episode).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Configuration parse/validation failure. `line` is 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

/// splitmix64-based generator. Used instead of <random> distributions so that
/// seeded streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi_inclusive) {
    const auto span = static_cast<std::uint64_t>(hi_inclusive - lo + 1);
    return lo + static_cast<int>(next_u64() % span);
  }

  double normal();

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Deterministic seed mixing for derived streams (per env, per episode, ...).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

double wrap_angle(double a);

/// Roll/pitch/yaw (intrinsic ZYX) of a unit quaternion.
Vec3 roll_pitch_yaw(const Quat& q);

}  // namespace gaitlab
