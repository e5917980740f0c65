// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.
//
//   gaitlab_acceptance --work-dir DIR [--only a,b,...] [--reuse]
//
// --reuse keeps training and sweep artifacts already present in DIR.

#include "cli/app.hpp"
#include "cli/experiment.hpp"
#include "gaitlab/analysis.hpp"
#include "gaitlab/distill.hpp"
#include "gaitlab/env.hpp"
#include "gaitlab/learn.hpp"
#include "gaitlab/mpc_baseline.hpp"
#include "gaitlab/sweep.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace gaitlab;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  bool reuse = false;
  std::set<std::string> produced;  // artifacts already built by this process
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// True when `dir` must be (re)built; clears it in that case.
bool needs_run(Context& ctx, const fs::path& dir, const char* marker) {
  if (ctx.produced.count(dir.string()) || (ctx.reuse && fs::exists(dir / marker))) return false;
  fs::remove_all(dir);
  ctx.produced.insert(dir.string());
  return true;
}

// Runs the CLI with output appended to DIR/cli.log; throws on a nonzero exit.
void cli(const Context& ctx, const std::vector<std::string>& args) {
  std::ofstream log(ctx.work / "cli.log", std::ios::app);
  log << "$ gaitlab";
  for (const auto& a : args) log << ' ' << a;
  log << std::endl;
  std::ostringstream err;
  const int code = cli::run_cli(args, log, err);
  log << err.str();
  if (code != 0) throw std::runtime_error("gaitlab " + args.front() + " exited " + std::to_string(code) + ": " + err.str());
}

std::map<std::string, std::string> read_summary(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw std::runtime_error("missing " + p.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    const auto c = line.find(": ");
    if (c != std::string::npos) out[line.substr(0, c)] = line.substr(c + 2);
  }
  return out;
}

// Numeric columns of a CSV by header name.
std::map<std::string, std::vector<double>> read_columns(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw std::runtime_error("missing " + p.string());
  std::string line;
  std::getline(is, line);
  std::vector<std::string> names;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) names.push_back(cell);
  }
  std::map<std::string, std::vector<double>> cols;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (std::size_t k = 0; std::getline(ss, cell, ',') && k < names.size(); ++k)
      cols[names[k]].push_back(std::strtod(cell.c_str(), nullptr));
  }
  return cols;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double tail_mean(const std::vector<double>& v, std::size_t n) {
  n = std::min(n, v.size());
  double s = 0;
  for (std::size_t i = v.size() - n; i < v.size(); ++i) s += v[i];
  return s / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Training runs shared by several criteria.

fs::path walk_run(Context& ctx) {
  const fs::path dir = ctx.work / "walk-desk";
  if (needs_run(ctx, dir, "summary.txt")) {
    cli(ctx, {"train", "--preset", "walk-desk", "--out", dir.string(), "--quiet"});
  }
  return dir;
}

fs::path no_energy_run(Context& ctx) {
  const fs::path dir = ctx.work / "walk-desk-no-energy";
  if (needs_run(ctx, dir, "summary.txt")) {
    // Phase 2 does not touch the phase-1 telemetry the comparison reads.
    auto c = cli::load_preset("walk-desk");
    c.phase2 = false;
    const fs::path cfg = ctx.work / "walk-desk-phase1.yaml";
    std::ofstream(cfg) << c.to_yaml();
    cli(ctx, {"train", "--config", cfg.string(), "--no-energy", "--out", dir.string(), "--quiet"});
  }
  return dir;
}

// ---------------------------------------------------------------------------
// Criteria.

Verdict reward_reconstruction(Context&) {
  Rng rng(20240);
  env::EnvConfig cfg;
  env::Env e(cfg);
  double vt = 0.375;
  e.reset(1);
  double worst = 0.0, worst_power = 0.0;
  int episodes = 1;
  for (int k = 0; k < 10000; ++k) {
    env::Action a;
    for (int j = 0; j < kNumJoints; ++j) a.delta_q_target[j] = rng.uniform(-1.0, 1.0) * env::action_bounds()[j];
    const auto r = e.step(a);
    double p = 0.0;
    for (int s = 0; s < r.info.substeps; ++s) p += r.info.substep_power[static_cast<std::size_t>(s)];
    p /= r.info.substeps;
    const auto& st = e.state();
    const double oracle = oracles::reward(vt, st.base_lin_vel.x(), st.base_lin_vel.y(), st.base_ang_vel.z(), p);
    worst = std::max(worst, std::abs(r.reward - oracle));
    // The last substep's power is the applied torque against the final joint speed.
    worst_power = std::max(worst_power, std::abs(r.info.substep_power[static_cast<std::size_t>(r.info.substeps - 1)] -
                                                 st.tau_applied.dot(st.q_dot)));
    if (r.done) {
      vt = rng.uniform(0.375, 1.5);
      e.set_v_target(vt);
      e.reset(rng.next_u64());
      ++episodes;
    }
  }
  const bool pass = worst <= 1e-9 && worst_power <= 1e-9;
  return {pass, "10000 steps over " + std::to_string(episodes) + " episodes, max |r - oracle| = " +
                    fmt("%.3g", worst) + ", max power residual = " + fmt("%.3g", worst_power) + " (tol 1e-9)"};
}

Verdict froude_arithmetic(Context&) {
  const double trot = analysis::froude(0.914, 0.27), bounce = analysis::froude(1.714, 0.27);
  const bool pass = trot >= 0.313 && trot <= 0.318 && bounce >= 1.10 && bounce <= 1.12 &&
                    std::abs(trot / 0.316 - 1) <= 0.01 && std::abs(bounce / 1.110 - 1) <= 0.01;
  return {pass, "froude(0.914, 0.27) = " + fmt("%.4f", trot) + " in [0.313, 0.318]; froude(1.714, 0.27) = " +
                    fmt("%.4f", bounce) + " in [1.10, 1.12]"};
}

Verdict velocity_codes(Context&) {
  const auto a = distill::encode_velocity(1.2), b = distill::encode_velocity(0.5);
  const Eigen::Vector3d want_b(0.238, 0.762, 0.0);
  const bool exact = a == Eigen::Vector3d(0.0, 0.5, 0.5);
  const double err = (b - want_b).cwiseAbs().maxCoeff();
  std::ostringstream d;
  d << "encode(1.2) = [" << a.transpose() << "] " << (exact ? "exact" : "NOT exact") << "; encode(0.5) = ["
    << b.transpose() << "] vs [0.238 0.762 0], max err " << fmt("%.4f", err) << " (tol 1e-3)";
  return {exact && err <= 1e-3, d.str()};
}

Verdict scheduler_fidelity(Context&) {
  constexpr double tick = 0.01;
  std::ostringstream d;
  bool pass = true;

  // Walk at 0.375 m/s: duty and stance run lengths per leg.
  const auto walk = fixtures::scheduler_trace(mpc::GaitScheduleConfig::walk(), 0.375, 3000);
  double worst_duty = 0.0, worst_stance = 0.0;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    int on = 0;
    for (const auto& c : walk.contacts) on += c[static_cast<std::size_t>(leg)];
    worst_duty = std::max(worst_duty, std::abs(static_cast<double>(on) / walk.size() - 0.80));
    int run = 0;
    bool started = false;
    for (std::size_t t = 0; t < walk.size(); ++t) {
      const bool c = walk.contacts[t][static_cast<std::size_t>(leg)];
      if (c) ++run;
      if ((!c || t + 1 == walk.size()) && run > 0) {
        if (started && c == false) worst_stance = std::max(worst_stance, std::abs(run * tick - 0.5625));
        run = 0;
      }
      if (!c) started = true;
    }
  }
  pass &= worst_duty <= 0.01 && worst_stance <= tick + 1e-12;
  d << "walk duty err " << fmt("%.4f", worst_duty) << ", stance err " << fmt("%.4f", worst_stance) << " s; ";

  // Touchdown ticks per leg.
  auto touchdowns = [](const analysis::ContactTrace& tr, int leg) {
    std::vector<int> out;
    for (std::size_t t = 1; t < tr.size(); ++t)
      if (tr.contacts[t][static_cast<std::size_t>(leg)] && !tr.contacts[t - 1][static_cast<std::size_t>(leg)])
        out.push_back(static_cast<int>(t));
    return out;
  };
  auto max_offset = [&](const analysis::ContactTrace& tr, int a, int b) {
    int worst = 0;
    const auto tb = touchdowns(tr, b);
    for (int x : touchdowns(tr, a)) {
      int best = 1 << 20;
      for (int y : tb) best = std::min(best, std::abs(x - y));
      worst = std::max(worst, best);
    }
    return worst;
  };
  int trot_worst = 0;
  for (double v : fixtures::fixture_speeds(mpc::GaitScheduleConfig::trot())) {
    const auto tr = fixtures::scheduler_trace(mpc::GaitScheduleConfig::trot(), v, 1000);
    trot_worst = std::max({trot_worst, max_offset(tr, 0, 3), max_offset(tr, 1, 2)});
  }
  pass &= trot_worst <= 1;
  d << "trot diagonal offset " << trot_worst << " tick; ";

  const auto bounce_sched = fixtures::scheduler_trace(mpc::GaitScheduleConfig::bounce(), 1.5, 1000);
  int bounce_worst = 0;
  for (int leg = 1; leg < kNumLegs; ++leg) bounce_worst = std::max(bounce_worst, max_offset(bounce_sched, 0, leg));
  mpc::BaselineRunConfig rc;
  rc.duration = 10.0;
  const auto run = mpc::run_baseline(RobotModel::a1_like(), mpc::GaitScheduleConfig::bounce(), 1.5, rc);
  pass &= bounce_worst <= 1 && run.flight_fraction > 0.2 && !run.fell;
  d << "bounce leg offset " << bounce_worst << " tick, simulated flight fraction "
    << fmt("%.3f", run.flight_fraction) << (run.fell ? " (fell)" : "");
  return {pass, d.str()};
}

Verdict gait_classifier(Context&) {
  const std::map<std::string, analysis::GaitLabel> want{
      {"walk", analysis::GaitLabel::Walk}, {"trot", analysis::GaitLabel::Trot}, {"bounce", analysis::GaitLabel::Bounce}};
  const RobotModel model = RobotModel::a1_like();
  int clean = 0, jit = 0, jit_total = 0;
  Rng rng(77);
  for (const auto& g : {mpc::GaitScheduleConfig::walk(), mpc::GaitScheduleConfig::trot(), mpc::GaitScheduleConfig::bounce()}) {
    for (double v : fixtures::fixture_speeds(g)) {
      const auto tr = fixtures::scheduler_trace(g, v);
      clean += analysis::gait_metrics(tr, model).label == want.at(g.name);
      for (int k = 0; k < 10; ++k) {
        ++jit_total;
        jit += analysis::gait_metrics(fixtures::jitter_edges(tr, rng), model).label == want.at(g.name);
      }
    }
  }
  const double frac = static_cast<double>(jit) / jit_total;
  return {clean == 15 && frac >= 0.9, "clean " + std::to_string(clean) + "/15, jittered " + std::to_string(jit) + "/" +
                                          std::to_string(jit_total) + " (need 100% and >= 90%)"};
}

Verdict gae_equivalence(Context&) {
  Rng rng(31337);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 50;
    learn::Vector r(n), v(n);
    std::vector<bool> d(n);
    for (int t = 0; t < n; ++t) {
      r[t] = rng.normal();
      v[t] = rng.normal();
      d[static_cast<std::size_t>(t)] = rng.uniform() < 0.05;
    }
    const double last = rng.normal();
    learn::Vector adv, ret, ref;
    learn::gae(r, v, d, last, 0.998, 0.95, adv, ret);
    oracles::gae(r, v, d, last, 0.998, 0.95, ref);
    worst = std::max({worst, (adv - ref).cwiseAbs().maxCoeff(), (ret - (ref + v)).cwiseAbs().maxCoeff()});
  }
  return {worst <= 1e-10, "1000 sequences x 50 steps, max deviation " + fmt("%.3g", worst) + " (tol 1e-10)"};
}

Verdict ppo_sanity(Context& ctx) {
  const auto s = read_summary(walk_run(ctx) / "summary.txt");
  const double init = std::stod(s.at("initial_mean_return")), fin = std::stod(s.at("final_mean_return"));
  const std::string fast = s.at("final_survived_fast");
  const int survivors = std::stoi(fast.substr(0, fast.find('/')));
  const bool pass = fin > 1.5 * init && survivors >= 15;
  return {pass, "walk-desk seed " + s.at("seed") + ", " + s.at("eval_policy") + " eval: initial return " +
                    fmt("%.1f", init) + ", final " + fmt("%.1f", fin) + " (need > 1.5x initial); " + fast +
                    " episodes survive above 0.15 m/s (need >= 15/20)"};
}

Verdict energy_ablation(Context& ctx) {
  const auto with = read_columns(walk_run(ctx) / "telemetry.csv");
  const auto without = read_columns(no_energy_run(ctx) / "telemetry.csv");
  // Convergence window: the last tenth of training.
  const std::size_t n = std::max<std::size_t>(1, with.at("iteration").size() / 10);
  const double qd1 = tail_mean(with.at("joint_speed_abs"), n), qd0 = tail_mean(without.at("joint_speed_abs"), n);
  const double sw1 = tail_mean(with.at("contact_switch_rate"), n), sw0 = tail_mean(without.at("contact_switch_rate"), n);
  const double e1 = tail_mean(with.at("energy"), n), e0 = tail_mean(without.at("energy"), n);
  const bool pass = qd0 > qd1 && sw0 > sw1;
  return {pass, "last " + std::to_string(n) + " iterations, alpha_1 = 0 vs 0.04: mean |qdot| " + fmt("%.3f", qd0) +
                    " vs " + fmt("%.3f", qd1) + " rad/s, contact switches/step " + fmt("%.3f", sw0) + " vs " +
                    fmt("%.3f", sw1) + ", power " + fmt("%.1f", e0) + " vs " + fmt("%.1f", e1) + " W"};
}

Verdict penalty_correlation(Context& ctx) {
  const auto t = read_columns(walk_run(ctx) / "telemetry.csv");
  bool pass = true;
  std::ostringstream d;
  d << "Pearson r with energy over " << t.at("energy").size() << " iterations:";
  for (const char* k : {"torque", "delta_torque", "foot_slip", "joint_speed", "action"}) {
    const double r = pearson(t.at("energy"), t.at(k));
    pass &= r > 0.5;
    d << ' ' << k << ' ' << fmt("%.3f", r);
  }
  d << " (need each > 0.5)";
  return {pass, d.str()};
}

Verdict adaptation_regression(Context& ctx) {
  const auto s = read_summary(walk_run(ctx) / "summary.txt");
  const double val = std::stod(s.at("phase2_val_mse")), base = std::stod(s.at("phase2_mean_predictor_mse"));
  const double gain = 1.0 - val / base;
  const auto rounds = read_columns(walk_run(ctx) / "phase2.csv").at("round").size();
  return {gain >= 0.30, "module-driven validation MSE " + fmt("%.4f", val) + " vs mean predictor " + fmt("%.4f", base) +
                            ", gain " + fmt("%.1f", 100 * gain) + "% after " + std::to_string(rounds) +
                            " rounds (need >= 30%)"};
}

Verdict energy_sweep(Context& ctx) {
  const fs::path dir = ctx.work / "sweep";
  if (needs_run(ctx, dir, "report.txt")) {
    cli(ctx, {"sweep", "--out", dir.string(), "--quiet"});
  }
  std::ifstream is(dir / "sweep.csv");
  const auto rows = sweep::read_csv(is);
  std::map<std::string, int> count;
  for (const auto& r : rows) ++count[r.gait];
  const bool grids = count["walk"] == 7 && count["trot"] == 11 && count["bounce"] == 11;
  const std::string svg = slurp(dir / "sweep.svg");
  int polylines = 0;
  for (auto p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++polylines;
  const std::string report = slurp(dir / "report.txt");
  const auto rep = sweep::analyze(rows);
  const bool crossing_reported = rep.walk_trot_crossing ? report.find("walk/trot crossing at") != std::string::npos
                                                        : report.find("FLAG: no walk/trot crossing") != std::string::npos;
  std::ostringstream d;
  d << "rows walk " << count["walk"] << " trot " << count["trot"] << " bounce " << count["bounce"] << ", chart "
    << polylines << " curves; ";
  for (const auto& c : rep.curves) d << c.gait << (c.monotone ? " monotone" : " NOT monotone") << ", ";
  d << (rep.walk_trot_crossing ? "crossing at " + fmt("%.3f", *rep.walk_trot_crossing) + " m/s"
                               : std::string("no crossing in [0.4, 1.0] (flagged in report)"));
  const bool pass = grids && polylines == 3 && crossing_reported && rep.all_monotone();
  return {pass, d.str()};
}

Verdict determinism(Context& ctx) {
  const fs::path dir = ctx.work / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto c = cli::load_preset("walk-desk");
  c.train.iterations = 3;
  c.train.num_envs = 2;
  c.train.horizon = 128;
  c.adaptation.iterations = 2;
  c.adaptation.num_envs = 2;
  c.adaptation.horizon = 200;
  c.adaptation.validation_envs = 1;
  c.eval_episodes = 2;
  const fs::path cfg = dir / "small.yaml";
  std::ofstream(cfg) << c.to_yaml();

  std::vector<std::pair<std::string, std::vector<std::string>>> compared;
  for (const char* run : {"a", "b"}) {
    const fs::path r = dir / run;
    cli(ctx, {"train", "--config", cfg.string(), "--out", (r / "train").string(), "--quiet"});
    cli(ctx, {"eval", "--config", cfg.string(), "--checkpoint", (r / "train" / "checkpoints" / "final.ckpt").string(),
              "--trials", "2", "--out", (r / "eval").string()});
    cli(ctx, {"sweep", "--gaits", "trot", "--step", "0.5", "--duration", "3", "--warmup", "1", "--out",
              (r / "sweep").string(), "--quiet"});
    cli(ctx, {"terrain", "--seed", "9", "--length", "6", "--width", "2", "--out", (r / "terrain.csv").string()});
  }
  const std::vector<std::string> files{"train/telemetry.csv",  "train/phase2.csv", "train/eval_initial.csv",
                                       "train/eval_final.csv", "eval/eval.csv",    "eval/trajectory.csv",
                                       "sweep/sweep.csv",      "terrain.csv"};
  std::vector<std::string> differ;
  for (const auto& f : files) {
    const std::string a = slurp(dir / "a" / f), b = slurp(dir / "b" / f);
    if (a.empty() || a != b) differ.push_back(f);
  }
  std::string d = std::to_string(files.size() - differ.size()) + "/" + std::to_string(files.size()) +
                  " CSVs byte-identical across reruns (train, eval, sweep, terrain)";
  for (const auto& f : differ) d += "; differs or empty: " + f;
  return {differ.empty(), d};
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) ctx.work = argv[++i];
    else if (a == "--reuse") ctx.reuse = true;
    else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string name;
      while (std::getline(ss, name, ',')) only.insert(name);
    } else {
      std::cerr << "usage: gaitlab_acceptance --work-dir DIR [--only a,b] [--reuse]\n";
      return 2;
    }
  }
  if (ctx.work.empty()) ctx.work = "acceptance_work";
  fs::create_directories(ctx.work);

  const std::vector<std::pair<std::string, std::function<Verdict(Context&)>>> criteria{
      {"reward_reconstruction", reward_reconstruction},
      {"froude_arithmetic", froude_arithmetic},
      {"velocity_codes", velocity_codes},
      {"scheduler_fidelity", scheduler_fidelity},
      {"gait_classifier", gait_classifier},
      {"gae_equivalence", gae_equivalence},
      {"ppo_sanity", ppo_sanity},
      {"energy_ablation", energy_ablation},
      {"penalty_correlation", penalty_correlation},
      {"adaptation_regression", adaptation_regression},
      {"energy_sweep", energy_sweep},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn(ctx);
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << " [" << fmt("%.1f", secs) << " s]"
              << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
