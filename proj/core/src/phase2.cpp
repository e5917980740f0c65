#include "gaitlab/phase2.hpp"

#include "gaitlab/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gaitlab::phase2 {

using learn::Matrix;
using learn::Vector;

AdaptationModule::AdaptationModule(std::vector<int> hidden, nn::Activation act, std::uint64_t seed) {
  std::vector<int> sizes{learn::kHistoryDim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(learn::kLatentDim);
  net = nn::Mlp(sizes, act);
  Rng rng(seed);
  net.init(rng, 1.0);
}

Vector AdaptationModule::predict(const Vector& history) const {
  return net.forward(Matrix(history)).col(0);
}

namespace {

struct Dataset {
  Matrix x, y;
  Eigen::Index size = 0, next = 0;

  Dataset(int cap) : x(learn::kHistoryDim, cap), y(learn::kLatentDim, cap) {}

  void add(const Vector& h, const Vector& z) {
    x.col(next) = h;
    y.col(next) = z;
    next = (next + 1) % x.cols();
    size = std::min<Eigen::Index>(size + 1, x.cols());
  }
};

// Runs the frozen agent for `horizon` steps per env. Round 0 acts on the true
// extrinsics so the first data set comes from the teacher's state
// distribution; later rounds act on z-hat from the module being trained.
void collect(const learn::Agent& agent, const AdaptationModule* module, const env::EnvConfig& cfg,
             int num_envs, int horizon, int episode_steps, std::uint64_t seed, bool stochastic,
             bool zero_history,
             const std::function<void(const Vector&, const Vector&)>& sink) {
  for (int i = 0; i < num_envs; ++i) {
    env::EnvConfig c = cfg;
    if (!c.terrain_seed) c.terrain_seed = mix_seed(seed, 0x2000 + static_cast<std::uint64_t>(i));
    env::Env e(c);
    Rng action_rng(mix_seed(seed, 0x3000 + static_cast<std::uint64_t>(i)));
    const Vector sd = agent.stddev();
    int episode = 0;
    e.reset(mix_seed(seed, static_cast<std::uint64_t>(i) * 1000 + static_cast<std::uint64_t>(episode)));
    JointVector prev = JointVector::Zero();
    std::vector<Vector> history;
    int len = 0;
    for (int t = 0; t < horizon; ++t) {
      Vector step(learn::kStepDim);
      step << e.observe().to_vector(), prev;
      const Vector h = zero_history ? Vector::Zero(learn::kHistoryDim)
                                    : learn::history_vector(agent.step_norm, history);
      const Vector z = agent.latent(agent.factor_norm.normalize(Vector(e.factor_vector()))).col(0);
      sink(h, z);
      learn::Agent::Inputs in;
      in.step = agent.step_norm.normalize(step);
      const Matrix z_act = module ? module->predict(Matrix(h)) : Matrix(z);
      env::Action a;
      a.delta_q_target = agent.action_mean_z(in, z_act).col(0);
      if (stochastic)
        for (int j = 0; j < kNumJoints; ++j) a.delta_q_target[j] += sd[j] * action_rng.normal();
      a = env::clamp_action(a);
      const env::StepResult r = e.step(a);
      history.push_back(step);
      if (history.size() > static_cast<std::size_t>(learn::kHistorySteps))
        history.erase(history.begin());
      prev = a.delta_q_target;
      if (r.done || (episode_steps > 0 && ++len >= episode_steps)) {
        len = 0;
        ++episode;
        e.reset(mix_seed(seed, static_cast<std::uint64_t>(i) * 1000 + static_cast<std::uint64_t>(episode)));
        prev.setZero();
        history.clear();
      }
    }
  }
}

double mse(const Matrix& pred, const Matrix& target) {
  return (pred - target).squaredNorm() / static_cast<double>(target.size());
}

}  // namespace

std::string round_header() { return "round,samples,train_mse,val_mse,val_baseline_mse"; }

std::string round_row(const RoundStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%ld,%.9g,%.9g,%.9g", s.round, s.samples, s.train_mse,
                s.val_mse, s.val_baseline_mse);
  return buf;
}

Phase2Result train_phase2(const learn::Agent& agent, const env::EnvConfig& env_config,
                          const Phase2Config& cfg, const std::string& run_dir) {
  if (agent.config().latent != learn::LatentSource::Factors)
    throw std::invalid_argument("phase 2 needs an agent with an e_t encoder");
  if (cfg.iterations <= 0 || cfg.num_envs <= 0 || cfg.horizon <= 0 || cfg.minibatch <= 0 ||
      cfg.epochs <= 0 || cfg.max_samples <= 0 ||
      cfg.episode_steps <= 0)
    throw std::invalid_argument("phase 2 config: sizes must be > 0");

  Phase2Result out;
  AdaptationModule module(cfg.hidden, cfg.activation, mix_seed(cfg.seed, 11));
  nn::Adam opt(module.net.num_params(), cfg.adam);
  Rng rng(mix_seed(cfg.seed, 12));
  Dataset data(cfg.max_samples);

  std::ofstream csv;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    csv.open(std::filesystem::path(run_dir) / "phase2.csv");
    csv << round_header() << '\n';
  }

  AdaptationModule best = module;
  double best_val = std::numeric_limits<double>::infinity();
  double best_baseline = 0.0;
  Vector best_mean = Vector::Zero(learn::kLatentDim);
  int stale = 0;
  Vector grad;

  for (int round = 0; round < cfg.iterations; ++round) {
    collect(agent, round == 0 ? nullptr : &module, env_config, cfg.num_envs, cfg.horizon,
            cfg.episode_steps, mix_seed(cfg.seed, 100 + static_cast<std::uint64_t>(round)), cfg.stochastic,
            cfg.zero_history,
            [&](const Vector& h, const Vector& z) { data.add(h, z); });

    const Eigen::Index n = data.size;
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    double train_loss = 0.0;
    int batches = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (std::size_t i = perm.size() - 1; i > 0; --i)
        std::swap(perm[i], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)))]);
      for (Eigen::Index b = 0; b < n; b += cfg.minibatch) {
        const Eigen::Index e = std::min<Eigen::Index>(n, b + cfg.minibatch);
        const std::vector<Eigen::Index> idx(perm.begin() + b, perm.begin() + e);
        const Matrix x = data.x(Eigen::all, idx);
        const Matrix y = data.y(Eigen::all, idx);
        nn::Mlp::Cache cache;
        const Matrix pred = module.net.forward(x, cache);
        const Matrix diff = pred - y;
        grad.setZero(module.net.num_params());
        module.net.backward(cache, 2.0 * diff / static_cast<double>(diff.size()), grad);
        opt.step(module.net.params(), grad);
        if (epoch + 1 == cfg.epochs) {
          train_loss += diff.squaredNorm() / static_cast<double>(diff.size());
          ++batches;
        }
      }
    }

    const Vector z_mean = data.y.leftCols(n).rowwise().mean();
    std::vector<Vector> vh, vz;
    collect(agent, &module, env_config, cfg.validation_envs, cfg.horizon,
            0, mix_seed(cfg.seed, 0xa11d), cfg.stochastic, cfg.zero_history, [&](const Vector& h, const Vector& z) {
              vh.push_back(h);
              vz.push_back(z);
            });
    Matrix hx(learn::kHistoryDim, static_cast<Eigen::Index>(vh.size()));
    Matrix zy(learn::kLatentDim, static_cast<Eigen::Index>(vz.size()));
    for (std::size_t k = 0; k < vh.size(); ++k) {
      hx.col(static_cast<Eigen::Index>(k)) = vh[k];
      zy.col(static_cast<Eigen::Index>(k)) = vz[k];
    }
    RoundStats s;
    s.round = round;
    s.samples = n;
    s.train_mse = batches > 0 ? train_loss / batches : 0.0;
    s.val_mse = mse(module.predict(hx), zy);
    s.val_baseline_mse = mse(Matrix(z_mean.replicate(1, zy.cols())), zy);
    out.rounds.push_back(s);
    if (csv.is_open()) csv << round_row(s) << std::endl;

    if (s.val_mse < 0.99 * best_val) {
      best_val = s.val_mse;
      best_baseline = s.val_baseline_mse;
      best = module;
      best_mean = z_mean;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  out.module = std::move(best);
  out.val_mse = best_val;
  out.baseline_mse = best_baseline;
  out.z_mean = best_mean;
  if (!run_dir.empty()) save_module(out.module, (std::filesystem::path(run_dir) / "adaptation.ckpt").string());
  return out;
}

void save_module(const AdaptationModule& m, const std::string& path) {
  checkpoint::Archive a;
  a.kind = "adaptation";
  a.meta["activation"] = nn::to_string(m.net.activation());
  a.meta["history_steps"] = std::to_string(learn::kHistorySteps);
  Vector sizes(static_cast<Eigen::Index>(m.net.sizes().size()));
  for (std::size_t i = 0; i < m.net.sizes().size(); ++i)
    sizes[static_cast<Eigen::Index>(i)] = m.net.sizes()[i];
  a.add("net.sizes", sizes);
  a.add("net.params", m.net.params());
  checkpoint::save(a, path);
}

AdaptationModule load_module(const std::string& path) {
  const auto a = checkpoint::load(path);
  if (a.kind != "adaptation")
    throw checkpoint::FormatError("checkpoint: expected an adaptation module, found '" + a.kind + "'");
  if (a.get_meta("history_steps") != std::to_string(learn::kHistorySteps))
    throw checkpoint::FormatError("checkpoint: history length mismatch");
  const Vector& sizes = a.array("net.sizes");
  std::vector<int> s;
  for (Eigen::Index i = 0; i < sizes.size(); ++i) s.push_back(static_cast<int>(sizes[i]));
  if (s.size() < 2 || s.front() != learn::kHistoryDim || s.back() != learn::kLatentDim)
    throw checkpoint::FormatError("checkpoint: adaptation module shape mismatch");
  AdaptationModule m;
  m.net = nn::Mlp(s, nn::activation_from_string(a.get_meta("activation")));
  if (a.array("net.params").size() != m.net.num_params())
    throw checkpoint::FormatError("checkpoint: adaptation parameter count mismatch");
  m.net.params() = a.array("net.params");
  return m;
}

}  // namespace gaitlab::phase2
