#include "cli/app.hpp"

#include "cli/commands.hpp"
#include "cli/serve.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

namespace gaitlab::cli {

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

struct ConfigSource {
  std::string preset;
  std::string path;

  void add(CLI::App* app, const std::string& default_preset) {
    preset = default_preset;
    app->add_option("--preset", preset, "Named preset from configs/presets")->capture_default_str();
    app->add_option("--config", path, "Experiment YAML (overrides --preset)");
  }
  ExperimentConfig load() const { return path.empty() ? load_preset(preset) : ExperimentConfig::load(path); }
  std::string where() const { return path.empty() ? "preset '" + preset + "'" : path; }
};

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"gaitlab: quadruped locomotion energetics workbench"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train a policy (phase 1, optional phase 2) and evaluate it");
  ConfigSource train_src;
  train_src.add(train, "walk-desk");
  std::optional<std::uint64_t> train_seed;
  std::optional<int> train_iters;
  std::string train_out;
  bool no_energy = false, flat = false, train_quiet = false;
  train->add_option("--seed", train_seed, "Override the config seed");
  train->add_option("--iterations", train_iters, "Override the iteration budget");
  train->add_option("--out", train_out, "Run directory (default runs/<preset>-seed<seed>)");
  train->add_flag("--no-energy", no_energy, "Energy-term ablation: alpha_1 = 0");
  train->add_flag("--flat-no-fractal", flat, "Terrain ablation: flat ground without fractal perturbation");
  train->add_flag("--quiet", train_quiet, "Only write files");

  // eval
  auto* eval = app.add_subcommand("eval", "Roll out a checkpoint and report speed, energy and gait");
  ConfigSource eval_src;
  eval_src.add(eval, "walk-desk");
  EvalOptions eo;
  std::optional<double> eval_v;
  eval->add_option("--checkpoint", eo.checkpoint, "Agent checkpoint")->required();
  eval->add_option("--adaptation", eo.adaptation, "Phase-2 adaptation module checkpoint");
  eval->add_option("--trials", eo.trials, "Number of trials")->capture_default_str();
  eval->add_option("--seed", eo.seed, "First episode seed")->capture_default_str();
  eval->add_flag("--same-seed", eo.same_seed, "Use the same seed for every trial");
  eval->add_flag("--deterministic", eo.deterministic, "Act with the policy mean");
  eval->add_option("--v", eval_v, "Target speed (m/s)");
  eval->add_option("--out", eo.out_dir, "Write eval.csv, trajectory.csv and contacts.svg here");
  eval->add_option("--window", eo.plot_window, "Contact plot window (s)")->capture_default_str();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Gait metrics and contact plots from a trajectory log");
  AnalyzeOptions ao;
  bool no_text = false;
  analyze->add_option("log", ao.log_path, "Trajectory log or contacts-only CSV")->required();
  analyze->add_option("--window", ao.plot.window, "Plot window (s); 10 and 2 mirror the usual panels")
      ->capture_default_str();
  analyze->add_option("--start", ao.plot.start, "Plot start (s)")->capture_default_str();
  analyze->add_option("--skip", ao.skip, "Seconds dropped before classification")->capture_default_str();
  analyze->add_option("--svg", ao.svg_out, "Write an SVG contact plot");
  analyze->add_flag("--no-text", no_text, "Suppress the text contact plot");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Baseline energy-per-meter sweep over gaits and speeds");
  SweepOptions so;
  sw->add_option("--gaits", so.gaits, "Gaits to sweep")->delimiter(',')->capture_default_str();
  sw->add_option("--step", so.step, "Speed step (m/s)")->capture_default_str();
  sw->add_option("--duration", so.run.duration, "Seconds per point")->capture_default_str();
  sw->add_option("--warmup", so.run.warmup, "Seconds excluded from the energy window")->capture_default_str();
  sw->add_option("--robot", so.robot, "Robot model name or YAML path")->capture_default_str();
  sw->add_option("--out", so.out_dir, "Output directory")->capture_default_str();
  sw->add_option("--policy", so.policies, "Overlay a policy: label=checkpoint@v_target (repeatable)");
  sw->add_flag("--quiet", so.quiet, "Only write files");

  // transition
  auto* tr = app.add_subcommand("transition", "Step a velocity-conditioned policy through a speed schedule");
  ConfigSource tr_src;
  tr_src.add(tr, "transition-desk");
  TransitionOptions to;
  tr->add_option("--checkpoint", to.checkpoint, "Conditioned agent checkpoint")->required();
  tr->add_option("--schedule", to.schedule_csv, "CSV with t_start_s,v_target");
  tr->add_option("--from", to.from, "Initial speed")->capture_default_str();
  tr->add_option("--to", to.to, "Final speed")->capture_default_str();
  tr->add_option("--at", to.at, "Switch time (s)")->capture_default_str();
  tr->add_option("--duration", to.duration, "Episode length (s)")->capture_default_str();
  tr->add_option("--seeds", to.seeds, "Number of seeds")->capture_default_str();
  tr->add_option("--seed", to.seed, "First seed")->capture_default_str();
  tr->add_option("--settle", to.settle, "Seconds ignored after each switch")->capture_default_str();
  tr->add_option("--out", to.out_dir, "Write one trajectory log per seed here");

  // terrain
  auto* ter = app.add_subcommand("terrain", "Write a fractal heightfield as CSV");
  TerrainOptions teo;
  ter->add_option("--preset", teo.preset, "flat, structured, unstructured, desk, desk-rough")->capture_default_str();
  ter->add_option("--seed", teo.seed, "Seed")->capture_default_str();
  ter->add_option("--length", teo.length, "Extent along x (m)")->capture_default_str();
  ter->add_option("--width", teo.width, "Extent along y (m)")->capture_default_str();
  ter->add_option("--cell", teo.cell, "Grid spacing (m)")->capture_default_str();
  ter->add_option("--out", teo.out, "Output CSV")->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the simulation live behind a websocket");
  ConfigSource serve_src;
  serve_src.add(serve, "transition-desk");
  std::string serve_ckpt;
  bool scripted = false;
  ServeOptions sopt;
  std::uint64_t serve_seed = 1;
  double serve_seconds = 0.0;
  serve->add_option("--checkpoint", serve_ckpt, "Agent checkpoint (conditioned for live speed changes)");
  serve->add_flag("--scripted", scripted, "Serve the scheduler stand-in instead of a policy");
  serve->add_option("--port", sopt.port, "TCP port")->capture_default_str();
  serve->add_option("--address", sopt.address, "Bind address")->capture_default_str();
  serve->add_option("--realtime", sopt.realtime_factor, "Pace relative to wall clock (0: unpaced)")
      ->capture_default_str();
  serve->add_option("--seed", serve_seed, "Episode seed")->capture_default_str();
  serve->add_option("--seconds", serve_seconds, "Stop after this many wall-clock seconds (0: until Ctrl-C)");

  auto* presets = app.add_subcommand("presets", "List the shipped presets");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*train) {
      TrainOptions o;
      o.config = train_src.load();
      if (train_seed) o.config.seed = *train_seed;
      if (train_iters) o.config.train.iterations = *train_iters;
      if (no_energy) {
        o.config.reward.alpha_energy = 0.0;
        o.config.name += "-no-energy";
      }
      if (flat) {
        o.config.terrain = "flat";
        o.config.name += "-flat";
      }
      o.config.train.seed = o.config.seed;
      o.config.adaptation.seed = o.config.seed;
      o.config.distill.train = o.config.train;
      o.out_dir = train_out;
      o.quiet = train_quiet;
      cmd_train(o, out);
    } else if (*eval) {
      eo.config = eval_src.load();
      eo.v_target = eval_v;
      cmd_eval(eo, out);
    } else if (*analyze) {
      ao.text_plot = !no_text;
      cmd_analyze(ao, out);
    } else if (*sw) {
      cmd_sweep(so, out);
    } else if (*tr) {
      to.config = tr_src.load();
      cmd_transition(to, out);
    } else if (*ter) {
      cmd_terrain(teo, out);
    } else if (*serve) {
      std::unique_ptr<Simulation> sim;
      if (scripted) {
        sim = std::make_unique<ScriptedSimulation>();
      } else {
        if (serve_ckpt.empty()) throw UsageError("serve: give --checkpoint or --scripted");
        const ExperimentConfig c = serve_src.load();
        sim = std::make_unique<PolicySimulation>(learn::load_agent(serve_ckpt), c.env_config(), serve_seed);
      }
      Server server(std::move(sim), sopt);
      server.start();
      out << "serving on ws://" << sopt.address << ':' << server.port() << std::endl;
      g_interrupted = false;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const auto t0 = std::chrono::steady_clock::now();
      while (!g_interrupted) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        if (serve_seconds > 0.0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >= serve_seconds)
          break;
      }
      server.stop();
      out << "stopped after " << server.ticks() << " ticks" << std::endl;
    } else if (*presets) {
      for (const auto& n : preset_names()) out << n << '\n';
    }
  } catch (const ConfigError& e) {
    const std::string where = *train ? train_src.where() : *eval ? eval_src.where() : *tr ? tr_src.where()
                                                                                      : serve_src.where();
    err << "config error in " << where << ": " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace gaitlab::cli
