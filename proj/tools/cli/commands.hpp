#pragma once

#include "cli/experiment.hpp"
#include "gaitlab/analysis.hpp"
#include "gaitlab/rollout.hpp"
#include "gaitlab/sweep.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gaitlab::cli {

/// Usage errors (bad flags, empty sets); the tool exits with status 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  ExperimentConfig config;
  std::string out_dir;  // empty: runs/<name>-seed<seed>
  bool quiet = false;
};

struct TrainOutcome {
  std::string run_dir;
  rollout::EvalSummary initial;
  rollout::EvalSummary final;
  std::optional<phase2::Phase2Result> adaptation;
  std::vector<learn::IterationStats> telemetry;
};

/// Phase 1 (or conditioned distillation), optional phase 2, then paired
/// evaluation of the initial and final checkpoints. Writes config.yaml,
/// telemetry.csv, checkpoints/, eval_initial.csv, eval_final.csv, summary.txt.
TrainOutcome cmd_train(const TrainOptions& opt, std::ostream& log);

struct EvalOptions {
  std::string checkpoint;
  std::string adaptation;  // optional phase-2 module
  ExperimentConfig config;
  int trials = 3;
  std::uint64_t seed = 1000;
  bool same_seed = false;  // every trial uses `seed`
  bool deterministic = false;
  std::optional<double> v_target;  // overrides the config
  std::string out_dir;             // optional: per-trial CSV, logs, plots
  double plot_window = 10.0;
};

struct EvalOutcome {
  rollout::EvalSummary summary;
  double realized_speed = 0.0;  // total distance / total time
  double speed_std = 0.0;       // across trials
  analysis::EnergyPerMeter energy;
  analysis::GaitMetrics gait;   // first trial
};

EvalOutcome cmd_eval(const EvalOptions& opt, std::ostream& out);

struct AnalyzeOptions {
  std::string log_path;
  analysis::PlotOptions plot{};
  std::string svg_out;
  bool text_plot = true;
  double skip = 0.0;  // seconds dropped from the start before classification
};

struct AnalyzeOutcome {
  analysis::GaitMetrics metrics;
  std::optional<analysis::EnergyPerMeter> energy;
};

AnalyzeOutcome cmd_analyze(const AnalyzeOptions& opt, std::ostream& out);

struct SweepOptions {
  std::vector<std::string> gaits{"walk", "trot", "bounce"};
  double step = 0.1;
  mpc::BaselineRunConfig run{};
  std::string robot = "a1_like";
  std::string out_dir = "sweep";
  // label=checkpoint@v_target, evaluated on flat ground and overlaid.
  std::vector<std::string> policies;
  int policy_trials = 3;
  bool quiet = false;
};

struct SweepOutcome {
  std::vector<sweep::SweepRow> rows;
  sweep::SweepReport report;
  std::vector<sweep::PolicyPoint> policy_points;
};

/// Writes sweep.csv, sweep.svg and report.txt into out_dir.
SweepOutcome cmd_sweep(const SweepOptions& opt, std::ostream& log);

struct TransitionOptions {
  std::string checkpoint;
  ExperimentConfig config;
  std::string schedule_csv;  // empty: step from `from` to `to` at `at`
  double from = 0.375;
  double to = 1.5;
  double at = 5.0;
  double duration = 10.0;
  int seeds = 1;
  std::uint64_t seed = 2000;
  double settle = 1.0;
  std::string out_dir;
};

struct TransitionOutcome {
  std::vector<distill::TransitionResult> runs;
  int survived = 0;
};

TransitionOutcome cmd_transition(const TransitionOptions& opt, std::ostream& out);

struct TerrainOptions {
  std::string preset = "desk";
  std::uint64_t seed = 1;
  double length = 24.0;
  double width = 6.0;
  double cell = 0.05;
  std::string out = "terrain.csv";
};

void cmd_terrain(const TerrainOptions& opt, std::ostream& out);

/// Per-episode CSV shared by train and eval.
std::string episode_csv_header();
void write_episode_csv(std::ostream& os, const rollout::EvalSummary& s, std::uint64_t base_seed,
                       const std::vector<std::uint64_t>& seeds = {});

}  // namespace gaitlab::cli
