#pragma once

#include "gaitlab/mpc_baseline.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gaitlab::sweep {

/// One row of the sweep CSV.
struct SweepRow {
  std::string gait;
  double v_target = 0.0;
  double realized_speed = 0.0;
  double energy_per_meter_raw = 0.0;
  double energy_per_meter_positive = 0.0;
  bool fell = false;
};

/// v_min, v_min + step, ... up to v_max inclusive (rounded to the step).
std::vector<double> speed_grid(double v_min, double v_max, double step = 0.1);
/// The gait's tested range in 0.1 m/s steps.
std::vector<double> speed_grid(const mpc::GaitScheduleConfig& gait);

struct SweepConfig {
  std::vector<std::string> gaits{"walk", "trot", "bounce"};
  double step = 0.1;
  mpc::BaselineRunConfig run{};
};

/// Runs the baseline controller at every grid point. Rejects an empty gait set.
std::vector<SweepRow> run_sweep(const RobotModel& model, const SweepConfig& cfg,
                                const std::function<void(const SweepRow&)>& progress = {});

std::string csv_header();
void write_csv(std::ostream& os, const std::vector<SweepRow>& rows);
std::vector<SweepRow> read_csv(std::istream& is);

struct CurveShape {
  std::string gait;
  int points = 0;  // non-fallen rows
  bool monotone = false;
  int direction = 0;  // +1 increasing, -1 decreasing, 0 when not monotone or < 2 points
  std::vector<double> violations;  // speeds where the dominant trend reverses
};

struct SweepReport {
  std::vector<CurveShape> curves;
  // First walk/trot crossing in the window, by linear interpolation on the
  // shared speeds; empty when the curves do not cross there.
  std::optional<double> walk_trot_crossing;
  double crossing_min = 0.4;
  double crossing_max = 1.0;
  int falls = 0;
  bool all_monotone() const;
};

SweepReport analyze(const std::vector<SweepRow>& rows, double crossing_min = 0.4,
                    double crossing_max = 1.0);
std::string format_report(const SweepReport& r);

/// Learned-policy measurements overlaid on the chart.
struct PolicyPoint {
  std::string label;
  double speed = 0.0;
  double energy_per_meter = 0.0;
};

/// Energy per meter (raw) against realized speed, one polyline per gait,
/// fallen points omitted, policy points as labelled markers.
std::string render_svg(const std::vector<SweepRow>& rows,
                       const std::vector<PolicyPoint>& policies = {}, int width = 640,
                       int height = 400);

}  // namespace gaitlab::sweep
