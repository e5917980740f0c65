#pragma once

#include "gaitlab/dynamics.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace gaitlab::mpc {

/// stance duration = slope * v + offset (seconds).
struct StanceLaw {
  double slope = 0.0;
  double offset = 0.0;
  double duration(double v) const { return slope * v + offset; }
};

/// Leg arrays are in RF, LF, RR, LR order.
struct GaitScheduleConfig {
  std::string name;
  std::array<double, kNumLegs> duty_factor{};
  std::array<double, kNumLegs> initial_phase{};
  StanceLaw stance_law;
  std::array<bool, kNumLegs> initial_swing{};
  double min_speed = 0.0;  // tested speed range, m/s
  double max_speed = 0.0;

  void validate() const;
  double stance_duration(double v) const;  // throws on a nonpositive duration
  double period(double v) const;           // cycle period of leg 0

  static GaitScheduleConfig walk();
  static GaitScheduleConfig trot();
  static GaitScheduleConfig bounce();
  static GaitScheduleConfig by_name(const std::string& name);
};

enum class LegMode { Stance, Swing };

struct GaitPhaseState {
  std::array<double, kNumLegs> phase{};  // progress through the current mode, [0, 1)
  std::array<LegMode, kNumLegs> mode{};
  std::array<double, kNumLegs> cycle_phase{};  // frac(t / period + initial_phase)
  double cycle_period = 0.0;
};

/// Open-loop gait clock. A leg that starts in stance is in stance while its
/// cycle phase is below the duty factor; a leg that starts in swing first
/// spends (1 - duty) of the cycle in swing and then enters stance.
GaitPhaseState schedule_state(const GaitScheduleConfig& cfg, double v_target, double t);

std::array<LegMode, kNumLegs> schedule_tick(const GaitScheduleConfig& cfg, double v_target, double t);

/// Fraction of the cycle during which at least one leg is scheduled in stance.
double support_fraction(const GaitScheduleConfig& cfg, double v_target, int samples = 2000);

struct StanceGains {
  double height = 0.30;      // base height setpoint, m
  double kp_z = 600.0;       // N/m per kg of body mass is not used; plain N/m
  double kd_z = 60.0;
  double kp_att = 300.0;     // N*m/rad
  double kd_att = 20.0;
  double kv = 200.0;         // N per m/s of planar velocity error (per 12 kg)
  double max_normal = 250.0;
  double regularization = 1e-4;
  double moment_weight = 1.0;  // row weight of the moment residual
};

struct StanceResult {
  JointVector tau = JointVector::Zero();
  std::array<Vec3, kNumLegs> forces{};  // desired ground reaction forces, world frame
  bool near_singular = false;
};

/// Quasi-static allocation of ground reaction forces over the stance feet:
/// least squares on the desired net force and moment, then projection onto
/// the friction cone. Joint torques are tau = -J^T R^T f. No stance feet gives
/// zero torques.
StanceResult stance_force_control(const RobotModel& model, const dynamics::SimState& state,
                                  const std::array<bool, kNumLegs>& stance, double v_target,
                                  double mass, double friction, const StanceGains& gains = {},
                                  double support_scale = 1.0);

struct SwingConfig {
  double step_height = 0.08;
  double raibert_gain = 0.035;  // extra foothold shift per m/s of speed error, s
};

/// Foot target in the torso frame for a swing leg at `phase` in [0, 1]. The
/// foot travels from the lift-off point (default: mirror of the landing
/// point) to x_land = hip + v * stance_duration / 2, at nominal ground level,
/// along a 16 s^2 (1 - s)^2 bump of height step_height.
Vec3 swing_trajectory(const RobotModel& model, int leg, double phase, double v_target,
                      double stance_duration, double ground_z, const SwingConfig& cfg = {},
                      const std::optional<Vec3>& lift_off = std::nullopt);

struct ControllerConfig {
  GaitScheduleConfig gait = GaitScheduleConfig::walk();
  StanceGains stance{};
  SwingConfig swing{};
  double swing_kp = 60.0;
  double swing_kd = 1.5;
  // Force allocation leaves the feet free to splay sideways together; a soft
  // lateral foot hold and joint damping on stance legs take up that mode.
  double stance_lateral_kp = 400.0;  // N/m
  double stance_kd = 0.5;

  /// Tuned defaults for a gait: walk and trot need stiffer attitude damping
  /// and foothold feedback to ride out two-leg support; the short bounce
  /// stance is destabilized by both.
  static ControllerConfig for_gait(const GaitScheduleConfig& gait);
};

/// Gait-schedule controller evaluated every physics step.
class Controller {
 public:
  Controller(RobotModel model, ControllerConfig config, double mass);

  JointVector compute(const dynamics::SimState& state, double v_target, double t, double friction);
  const std::array<LegMode, kNumLegs>& scheduled() const { return scheduled_; }
  bool near_singular() const { return near_singular_; }

 private:
  RobotModel model_;
  ControllerConfig config_;
  double mass_;
  double support_scale_ = 1.0;
  double cached_v_ = -1.0;
  std::array<LegMode, kNumLegs> scheduled_{};
  std::array<LegMode, kNumLegs> previous_{};
  std::array<std::optional<Vec3>, kNumLegs> lift_off_{};
  bool near_singular_ = false;
  bool first_ = true;
};

struct BaselineRunConfig {
  double duration = 20.0;  // s
  double warmup = 2.0;     // s excluded from the energy window
  double fall_height = 0.15;
  double fall_tilt = 0.8;
};

struct BaselineRun {
  std::string gait;
  double v_target = 0.0;
  double realized_speed = 0.0;
  double energy_per_meter_raw = 0.0;
  double energy_per_meter_positive = 0.0;
  bool fell = false;
  double flight_fraction = 0.0;  // from simulated contacts
  std::vector<ContactFlags> scheduled;  // 100 Hz
  std::vector<ContactFlags> realized;   // 100 Hz, simulated
  std::vector<double> speeds;
  std::vector<double> powers;
};

/// Runs the controller on flat ground with the nominal robot. Without
/// overrides the gains come from ControllerConfig::for_gait.
BaselineRun run_baseline(const RobotModel& model, const GaitScheduleConfig& gait, double v_target,
                         const BaselineRunConfig& run = {}, const ControllerConfig* overrides = nullptr);

}  // namespace gaitlab::mpc
