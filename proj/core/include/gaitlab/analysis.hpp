#pragma once

#include "gaitlab/robot_model.hpp"

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gaitlab::analysis {

/// F = v^2 / (g h).
double froude(double v, double h, double g = kGravity);

/// Per-sample foot contacts in RF, LF, RR, LR order, with optional aligned
/// forward-speed and power series.
struct ContactTrace {
  double sample_rate = 100.0;  // Hz
  std::vector<ContactFlags> contacts;
  std::vector<double> speed;
  std::vector<double> power;
  std::optional<double> hip_height;  // mean hip height over the window, m

  void validate() const;
  std::size_t size() const { return contacts.size(); }
  double duration() const { return static_cast<double>(contacts.size()) / sample_rate; }
  /// Samples [first, first + count).
  ContactTrace slice(std::size_t first, std::size_t count) const;
  /// Each sample repeated `factor` times (sample rate scaled accordingly).
  ContactTrace upsample(int factor) const;
};

enum class GaitLabel { Walk, Trot, Bounce, Unstructured, Standing };
std::string to_string(GaitLabel g);

struct ClassifierConfig {
  double walk_min_duty = 0.7;
  double walk_gap_tolerance = 0.1;     // cycles, around the quarter spacing
  double sync_tolerance = 0.1;         // cycles
  double pair_offset_tolerance = 0.1;  // cycles, around one half
  double bounce_min_flight = 0.2;
  double min_periodicity = 0.5;
  double min_cycles = 3.0;
  double standing_duty = 0.99;  // every leg in contact at least this often
};

struct GaitMetrics {
  std::array<double, kNumLegs> duty_factor{};
  std::array<double, kNumLegs> relative_phase{};  // touchdown phase relative to RF, cycles
  double cycle_period = 0.0;                      // s
  GaitLabel label = GaitLabel::Unstructured;
  double froude = 0.0;
  double energy_per_meter = 0.0;  // J/m, raw power; 0 without power/speed series
  double mean_speed = 0.0;
  double flight_fraction = 0.0;
  double periodicity = 0.0;  // normalized autocorrelation at the period lag
  std::array<int, kNumLegs> touchdown_order{0, 1, 2, 3};  // legs sorted by phase, from RF
  bool lateral_sequence = false;  // order is RF, LR, LF, RR (the horse walk sequence)
  double mean_duty() const;
};

/// Period from the contact autocorrelation refined by mean touchdown spacing;
/// duty over whole cycles; phases from circular means of touchdown offsets.
GaitMetrics gait_metrics(const ContactTrace& trace, const RobotModel& model,
                         const ClassifierConfig& cfg = {});

struct EnergyPerMeter {
  double raw = 0.0;       // J/m
  double positive = 0.0;  // J/m, negative power clamped to zero
};

/// Integral of power over time divided by the planar distance travelled.
/// Rejects distances below 1 cm.
EnergyPerMeter energy_per_meter(const std::vector<double>& power,
                                const std::vector<double>& power_positive, double dt,
                                double distance);

/// Columns of a trajectory log needed by the analysis tools.
struct TrajectorySeries {
  std::vector<double> t, x, y, z, vx, power, power_positive, v_target;
  std::vector<ContactFlags> contacts;
  double dt() const;
  double distance() const;
  ContactTrace trace() const;
};

/// Reads either a full trajectory log or a contacts-only CSV
/// (t?, c_RF, c_LF, c_RR, c_LR). Without a power_positive column the positive
/// integral falls back to clamping the logged total power.
TrajectorySeries read_trajectory_csv(std::istream& is);
EnergyPerMeter energy_per_meter(const TrajectorySeries& log);

struct PlotOptions {
  double window = 10.0;  // s
  double start = 0.0;    // s
  int width = 800;       // px
  int text_columns = 100;
};

/// SVG strip chart: one lane per leg in RF, LF, RR, LR order, a filled bar per
/// contiguous contact run.
std::string render_contact_svg(const ContactTrace& trace, const PlotOptions& opt = {});
/// Plain-text fallback: '#' for contact, '.' for swing, one column per sample
/// (or per bucket, by majority, when the window has more samples than columns).
std::string render_contact_text(const ContactTrace& trace, const PlotOptions& opt = {});

/// Key/value report of the metrics.
std::string format_metrics(const GaitMetrics& m);

}  // namespace gaitlab::analysis
