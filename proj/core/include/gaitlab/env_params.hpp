#pragma once

#include "gaitlab/common.hpp"

#include <string>

namespace gaitlab {

struct PdGains {
  double kp = 55.0;
  double kd = 0.8;
  void validate() const;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double sample(Rng& rng) const { return lo == hi ? lo : rng.uniform(lo, hi); }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Domain-randomisation ranges ("normal" and "aggressive" profiles).
struct PerturbationProfile {
  std::string name = "normal";
  Range friction{0.6, 1.2};
  Range kp{50.0, 60.0};
  Range kd{0.4, 0.8};
  Range payload{0.0, 0.5};
  Range com{-0.15, 0.15};
  Range motor_strength{0.95, 1.05};
  double resample_prob = 0.02;

  static PerturbationProfile normal();
  static PerturbationProfile aggressive();
  /// Nominal robot: friction 0.8, kp 55, kd 0.8, no payload, strength 1.
  static PerturbationProfile none();
  static PerturbationProfile by_name(const std::string& name);
};

/// Physical environment factors for one episode segment. `com_offset` is the
/// mount point of the payload in the torso frame.
struct EnvParams {
  double friction = 0.8;
  PdGains gains{};
  double payload = 0.0;
  Vec3 com_offset = Vec3::Zero();
  JointVector motor_strength = JointVector::Ones();
  double resample_prob = 0.02;

  static EnvParams sample(const PerturbationProfile& profile, Rng& rng);
};

}  // namespace gaitlab
