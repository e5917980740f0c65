#include "cli/commands.hpp"

#include "gaitlab/terrain.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace gaitlab::cli {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
  return f;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

rollout::EpisodeOptions episode_options(const learn::Agent& agent, bool deterministic, std::uint64_t action_seed,
                                        double v_target) {
  rollout::EpisodeOptions o;
  o.deterministic = deterministic;
  o.action_seed = action_seed;
  if (agent.config().velocity_code) {
    o.velocity_code = distill::encode_velocity;
    o.v_schedule = [v_target](double) { return v_target; };
  }
  return o;
}

// Evaluation with a per-episode action seed so stochastic runs are reproducible.
rollout::EvalSummary evaluate_seeded(const env::EnvConfig& ec, const learn::Agent& agent, int n,
                                     const std::vector<std::uint64_t>& seeds, bool deterministic,
                                     const phase2::AdaptationModule* adapt) {
  rollout::EvalSummary s;
  env::Env e(ec);
  for (int k = 0; k < n; ++k) {
    const std::uint64_t seed = seeds[static_cast<std::size_t>(k)];
    auto o = episode_options(agent, deterministic, mix_seed(seed, 77), ec.reward.v_target);
    rollout::EpisodeResult r = rollout::run_episode(e, agent, seed, o, adapt);
    s.mean_return += r.episode_return;
    s.mean_speed += r.forward_speed;
    if (!r.terminated) {
      ++s.survived;
      if (r.forward_speed > 0.15) ++s.survived_and_fast;
    }
    s.episodes.push_back(std::move(r));
  }
  s.mean_return /= n;
  s.mean_speed /= n;
  return s;
}

std::vector<std::uint64_t> seed_range(std::uint64_t base, int n) {
  std::vector<std::uint64_t> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), base);
  return v;
}

analysis::ContactTrace episode_trace(const rollout::EpisodeResult& r, double control_dt, double skip) {
  analysis::ContactTrace tr;
  tr.sample_rate = 1.0 / control_dt;
  const auto first = std::min(r.contacts.size(), static_cast<std::size_t>(std::lround(skip / control_dt)));
  tr.contacts.assign(r.contacts.begin() + static_cast<std::ptrdiff_t>(first), r.contacts.end());
  tr.speed.assign(r.speeds.begin() + static_cast<std::ptrdiff_t>(first), r.speeds.end());
  tr.power.assign(r.powers.begin() + static_cast<std::ptrdiff_t>(first), r.powers.end());
  return tr;
}

void write_summary_block(std::ostream& os, const char* tag, const rollout::EvalSummary& s) {
  double dist = 0.0, time = 0.0, energy = 0.0;
  for (const auto& e : s.episodes) {
    dist += e.forward_distance;
    time += e.duration;
    energy += e.energy_raw;
  }
  os << tag << "_mean_return: " << fmt("%.6f", s.mean_return) << '\n';
  os << tag << "_mean_forward_speed: " << fmt("%.6f", s.mean_speed) << '\n';
  os << tag << "_realized_speed: " << fmt("%.6f", time > 0 ? dist / time : 0.0) << '\n';
  os << tag << "_energy_per_meter: " << fmt("%.6f", dist > 0.01 ? energy / dist : 0.0) << '\n';
  os << tag << "_survived: " << s.survived << '/' << s.episodes.size() << '\n';
  os << tag << "_survived_fast: " << s.survived_and_fast << '/' << s.episodes.size() << '\n';
}

}  // namespace

std::string episode_csv_header() {
  return "episode,seed,return,steps,terminated,forward_speed,distance,energy_raw_J,energy_positive_J,"
         "energy_per_meter_raw,energy_per_meter_positive,mean_abs_joint_speed,contact_switch_rate";
}

void write_episode_csv(std::ostream& os, const rollout::EvalSummary& s, std::uint64_t base_seed,
                       const std::vector<std::uint64_t>& seeds) {
  os << episode_csv_header() << '\n';
  char buf[512];
  for (std::size_t k = 0; k < s.episodes.size(); ++k) {
    const auto& e = s.episodes[k];
    const double d = std::max(e.distance, 1e-12);
    const bool moved = e.distance >= 0.01;
    std::snprintf(buf, sizeof buf, "%zu,%llu,%.9g,%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", k,
                  static_cast<unsigned long long>(seeds.empty() ? base_seed + k : seeds[k]), e.episode_return,
                  e.steps, e.terminated ? 1 : 0, e.forward_speed, e.distance, e.energy_raw, e.energy_positive,
                  moved ? e.energy_raw / d : 0.0, moved ? e.energy_positive / d : 0.0, e.mean_abs_joint_speed,
                  e.contact_switch_rate);
    os << buf;
  }
}

TrainOutcome cmd_train(const TrainOptions& opt, std::ostream& log) {
  const ExperimentConfig& c = opt.config;
  c.validate();
  TrainOutcome out;
  out.run_dir = opt.out_dir.empty() ? "runs/" + c.name + "-seed" + std::to_string(c.seed) : opt.out_dir;
  fs::create_directories(out.run_dir);
  open_out(fs::path(out.run_dir) / "config.yaml") << c.to_yaml();
  const env::EnvConfig ec = c.env_config();

  auto progress = [&](const learn::IterationStats& s) {
    if (opt.quiet) return;
    if (s.iteration % 10 == 0 || s.iteration + 1 == c.train.iterations)
      log << "iter " << s.iteration << " return " << fmt("%.1f", s.mean_return) << " len "
          << fmt("%.0f", s.mean_length) << " vx " << fmt("%.3f", s.forward_speed) << " energy "
          << fmt("%.2f", s.energy) << " w " << fmt("%.3f", s.imitation_weight) << std::endl;
  };

  learn::Agent initial, final;
  if (c.conditioned) {
    const auto experts = distill::Experts::load(c.experts);
    distill::DistillConfig dc = c.distill;
    dc.train = c.train;
    distill::DistillOptions o{out.run_dir, progress};
    auto r = distill::train_conditioned(experts, ec, dc, o);
    initial = std::move(r.initial);
    final = std::move(r.final);
    out.telemetry = std::move(r.telemetry);
  } else {
    learn::Phase1Options o{out.run_dir, progress};
    auto r = learn::train_phase1(ec, c.train, c.agent, o);
    initial = std::move(r.initial);
    final = std::move(r.final);
    out.telemetry = std::move(r.telemetry);
  }

  const phase2::AdaptationModule* adapt = nullptr;
  if (c.phase2 && !c.conditioned) {
    if (!opt.quiet) log << "phase 2: training the adaptation module" << std::endl;
    out.adaptation = phase2::train_phase2(final, ec, c.adaptation, out.run_dir);
    phase2::save_module(out.adaptation->module, (fs::path(out.run_dir) / "checkpoints" / "adaptation.ckpt").string());
    adapt = &out.adaptation->module;
  }

  const auto seeds = seed_range(c.eval_seed, c.eval_episodes);
  out.initial = evaluate_seeded(ec, initial, c.eval_episodes, seeds, c.eval_deterministic, nullptr);
  out.final = evaluate_seeded(ec, final, c.eval_episodes, seeds, c.eval_deterministic, adapt);
  {
    auto f = open_out(fs::path(out.run_dir) / "eval_initial.csv");
    write_episode_csv(f, out.initial, c.eval_seed);
  }
  {
    auto f = open_out(fs::path(out.run_dir) / "eval_final.csv");
    write_episode_csv(f, out.final, c.eval_seed);
  }
  std::ostringstream sum;
  sum << "preset: " << c.name << '\n' << "seed: " << c.seed << '\n';
  sum << "eval_policy: " << (c.eval_deterministic ? "deterministic" : "stochastic") << '\n';
  write_summary_block(sum, "initial", out.initial);
  write_summary_block(sum, "final", out.final);
  if (out.adaptation) {
    sum << "phase2_val_mse: " << fmt("%.9g", out.adaptation->val_mse) << '\n';
    sum << "phase2_mean_predictor_mse: " << fmt("%.9g", out.adaptation->baseline_mse) << '\n';
  }
  open_out(fs::path(out.run_dir) / "summary.txt") << sum.str();
  if (!opt.quiet) log << sum.str() << "run directory: " << out.run_dir << std::endl;
  return out;
}

EvalOutcome cmd_eval(const EvalOptions& opt, std::ostream& out) {
  if (opt.trials < 1) throw UsageError("eval: --trials must be >= 1");
  const learn::Agent agent = learn::load_agent(opt.checkpoint);
  std::optional<phase2::AdaptationModule> adapt;
  if (!opt.adaptation.empty()) adapt = phase2::load_module(opt.adaptation);
  ExperimentConfig c = opt.config;
  if (opt.v_target) c.v_target = *opt.v_target;
  const env::EnvConfig ec = c.env_config();
  const std::vector<std::uint64_t> seeds =
      opt.same_seed ? std::vector<std::uint64_t>(static_cast<std::size_t>(opt.trials), opt.seed)
                    : seed_range(opt.seed, opt.trials);
  EvalOutcome r;
  r.summary = evaluate_seeded(ec, agent, opt.trials, seeds, opt.deterministic, adapt ? &*adapt : nullptr);

  double dist = 0.0, planar = 0.0, time = 0.0, e_raw = 0.0, e_pos = 0.0;
  std::vector<double> speeds;
  for (const auto& e : r.summary.episodes) {
    dist += e.forward_distance;
    planar += e.distance;
    time += e.duration;
    e_raw += e.energy_raw;
    e_pos += e.energy_positive;
    speeds.push_back(e.forward_speed);
  }
  r.realized_speed = time > 0.0 ? dist / time : 0.0;
  const double mean = std::accumulate(speeds.begin(), speeds.end(), 0.0) / static_cast<double>(speeds.size());
  double var = 0.0;
  for (double s : speeds) var += (s - mean) * (s - mean);
  r.speed_std = std::sqrt(var / static_cast<double>(speeds.size()));
  if (planar >= 0.01) r.energy = {e_raw / planar, e_pos / planar};

  const double cdt = ec.sim.dt * ec.substeps;
  const auto& first = r.summary.episodes.front();
  analysis::ContactTrace tr = episode_trace(first, cdt, std::min(1.0, first.duration / 2.0));
  if (!tr.contacts.empty()) r.gait = analysis::gait_metrics(tr, ec.robot);

  out << "checkpoint: " << opt.checkpoint << '\n';
  out << "v_target: " << fmt("%.4f", c.v_target) << '\n';
  out << "trials: " << opt.trials << '\n';
  out << "realized_speed_mps: " << fmt("%.6f", r.realized_speed) << '\n';
  out << "speed_std_across_trials: " << fmt("%.6g", r.speed_std) << '\n';
  out << "energy_per_meter_raw_J: " << fmt("%.6f", r.energy.raw) << '\n';
  out << "energy_per_meter_positive_J: " << fmt("%.6f", r.energy.positive) << '\n';
  out << "survived: " << r.summary.survived << '/' << opt.trials << '\n';
  out << analysis::format_metrics(r.gait);
  if (!tr.contacts.empty()) {
    analysis::PlotOptions po;
    po.window = std::min(opt.plot_window, tr.duration());
    out << analysis::render_contact_text(tr, po);
  }

  if (!opt.out_dir.empty()) {
    fs::create_directories(opt.out_dir);
    {
      auto f = open_out(fs::path(opt.out_dir) / "eval.csv");
      write_episode_csv(f, r.summary, opt.seed, seeds);
    }
    // Full trajectory log of the first trial, rerun with the same seeds.
    env::Env e(ec);
    auto f = open_out(fs::path(opt.out_dir) / "trajectory.csv");
    auto o = episode_options(agent, opt.deterministic, mix_seed(seeds.front(), 77), ec.reward.v_target);
    o.trajectory_log = &f;
    rollout::run_episode(e, agent, seeds.front(), o, adapt ? &*adapt : nullptr);
    if (!tr.contacts.empty()) {
      analysis::PlotOptions po;
      po.window = std::min(opt.plot_window, tr.duration());
      open_out(fs::path(opt.out_dir) / "contacts.svg") << analysis::render_contact_svg(tr, po);
    }
  }
  return r;
}

AnalyzeOutcome cmd_analyze(const AnalyzeOptions& opt, std::ostream& out) {
  std::ifstream in(opt.log_path);
  if (!in) throw std::runtime_error("cannot open log '" + opt.log_path + "'");
  const analysis::TrajectorySeries log = analysis::read_trajectory_csv(in);
  analysis::ContactTrace tr = log.trace();
  const auto skip = std::min(tr.size() - 1, static_cast<std::size_t>(std::lround(opt.skip * tr.sample_rate)));
  tr = tr.slice(skip, tr.size() - skip);
  AnalyzeOutcome r;
  r.metrics = analysis::gait_metrics(tr, RobotModel::a1_like());
  if (!log.power.empty() && !log.x.empty() && log.distance() >= 0.01) r.energy = analysis::energy_per_meter(log);
  out << analysis::format_metrics(r.metrics);
  if (r.energy) {
    out << "energy_per_meter_raw_J: " << fmt("%.6f", r.energy->raw) << '\n';
    out << "energy_per_meter_positive_J: " << fmt("%.6f", r.energy->positive) << '\n';
  }
  analysis::PlotOptions po = opt.plot;
  po.window = std::min(po.window, tr.duration() - po.start);
  if (opt.text_plot) out << analysis::render_contact_text(tr, po);
  if (!opt.svg_out.empty()) open_out(opt.svg_out) << analysis::render_contact_svg(tr, po);
  return r;
}

SweepOutcome cmd_sweep(const SweepOptions& opt, std::ostream& log) {
  if (opt.gaits.empty()) throw UsageError("sweep: empty gait set");
  for (const auto& g : opt.gaits) {
    try {
      mpc::GaitScheduleConfig::by_name(g);
    } catch (const std::exception&) {
      throw UsageError("sweep: unknown gait '" + g + "' (walk, trot, bounce)");
    }
  }
  ExperimentConfig rc;
  rc.robot = opt.robot;
  const RobotModel model = rc.robot_model();
  sweep::SweepConfig cfg;
  cfg.gaits = opt.gaits;
  cfg.step = opt.step;
  cfg.run = opt.run;
  SweepOutcome out;
  out.rows = sweep::run_sweep(model, cfg, [&](const sweep::SweepRow& r) {
    if (!opt.quiet)
      log << r.gait << " v=" << fmt("%.2f", r.v_target) << " realized=" << fmt("%.3f", r.realized_speed)
          << " J/m=" << fmt("%.1f", r.energy_per_meter_raw) << (r.fell ? " FELL" : "") << std::endl;
  });

  for (const auto& spec : opt.policies) {
    const auto eq = spec.find('='), at = spec.rfind('@');
    if (eq == std::string::npos || at == std::string::npos || at < eq)
      throw UsageError("sweep: --policy expects label=checkpoint@v_target, got '" + spec + "'");
    const std::string label = spec.substr(0, eq), path = spec.substr(eq + 1, at - eq - 1);
    double v = 0.0;
    try {
      v = std::stod(spec.substr(at + 1));
    } catch (const std::exception&) {
      throw UsageError("sweep: bad v_target in '" + spec + "'");
    }
    const learn::Agent agent = learn::load_agent(path);
    ExperimentConfig pc;
    pc.robot = opt.robot;
    pc.v_target = v;
    pc.terrain = "flat";
    pc.perturbation = "none";
    const auto ec = pc.env_config();
    const auto s = evaluate_seeded(ec, agent, opt.policy_trials, seed_range(3000, opt.policy_trials), true, nullptr);
    double dist = 0.0, time = 0.0, e = 0.0;
    for (const auto& ep : s.episodes) {
      dist += ep.distance;
      time += ep.duration;
      e += ep.energy_raw;
    }
    out.policy_points.push_back({label, time > 0 ? dist / time : 0.0, dist >= 0.01 ? e / dist : 0.0});
  }

  out.report = sweep::analyze(out.rows);
  fs::create_directories(opt.out_dir);
  {
    auto f = open_out(fs::path(opt.out_dir) / "sweep.csv");
    sweep::write_csv(f, out.rows);
  }
  open_out(fs::path(opt.out_dir) / "sweep.svg") << sweep::render_svg(out.rows, out.policy_points);
  const std::string report = sweep::format_report(out.report);
  open_out(fs::path(opt.out_dir) / "report.txt") << report;
  if (!opt.quiet) log << report;
  return out;
}

TransitionOutcome cmd_transition(const TransitionOptions& opt, std::ostream& out) {
  if (opt.seeds < 1) throw UsageError("transition: --seeds must be >= 1");
  const learn::Agent agent = learn::load_agent(opt.checkpoint);
  distill::VelocitySchedule sched;
  if (!opt.schedule_csv.empty()) {
    std::ifstream in(opt.schedule_csv);
    if (!in) throw std::runtime_error("cannot open schedule '" + opt.schedule_csv + "'");
    sched = distill::VelocitySchedule::read_csv(in);
  } else {
    sched = distill::VelocitySchedule::step(opt.from, opt.to, opt.at);
  }
  const env::EnvConfig ec = opt.config.env_config();
  const double cdt = ec.sim.dt * ec.substeps;
  const int steps = static_cast<int>(std::lround(opt.duration / cdt));
  TransitionOutcome r;
  for (int k = 0; k < opt.seeds; ++k) {
    const std::uint64_t seed = opt.seed + static_cast<std::uint64_t>(k);
    std::optional<std::ofstream> logf;
    if (!opt.out_dir.empty())
      logf.emplace(open_out(fs::path(opt.out_dir) / ("trajectory_seed" + std::to_string(seed) + ".csv")));
    auto t = distill::eval_transition(agent, ec, sched, seed, steps, opt.settle, logf ? &*logf : nullptr);
    if (!t.episode.terminated) ++r.survived;
    out << "seed " << seed << ": " << (t.episode.terminated ? "terminated" : "survived") << " after "
        << fmt("%.2f", t.episode.duration) << " s\n";
    for (const auto& s : t.segments)
      out << "  segment t=" << fmt("%.2f", s.t_start) << ".." << fmt("%.2f", s.t_end) << " target "
          << fmt("%.3f", s.v_target) << " realized " << fmt("%.3f", s.realized) << '\n';
    r.runs.push_back(std::move(t));
  }
  out << "survived: " << r.survived << '/' << opt.seeds << '\n';
  return r;
}

void cmd_terrain(const TerrainOptions& opt, std::ostream& out) {
  const auto params = terrain::preset(opt.preset);
  const auto field = terrain::generate(params, Vec2(opt.length, opt.width), opt.cell, opt.seed,
                                       Vec2(-opt.length / 2.0, -opt.width / 2.0));
  auto f = open_out(opt.out);
  field.write_csv(f);
  out << "terrain " << opt.preset << " seed " << opt.seed << ": " << field.nx() << " x " << field.ny()
      << " nodes, height range [" << fmt("%.4f", field.min_height()) << ", " << fmt("%.4f", field.max_height())
      << "] m -> " << opt.out << '\n';
}

}  // namespace gaitlab::cli
