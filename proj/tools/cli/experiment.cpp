#include "cli/experiment.hpp"

#include "gaitlab/terrain.hpp"
#include "gaitlab/yaml_util.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef GAITLAB_SOURCE_CONFIG_DIR
#define GAITLAB_SOURCE_CONFIG_DIR "configs"
#endif

namespace gaitlab::cli {

namespace fs = std::filesystem;

std::string config_dir() {
  if (const char* env = std::getenv("GAITLAB_CONFIG_DIR"); env && *env) return env;
  return GAITLAB_SOURCE_CONFIG_DIR;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  const fs::path dir = fs::path(config_dir()) / "presets";
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".yaml") out.push_back(e.path().stem().string());
  std::sort(out.begin(), out.end());
  return out;
}

ExperimentConfig load_preset(const std::string& name) {
  const fs::path p = fs::path(config_dir()) / "presets" / (name + ".yaml");
  if (!fs::exists(p)) {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
  }
  return ExperimentConfig::load(p.string());
}

RobotModel ExperimentConfig::robot_model() const {
  if (robot == "a1_like") return RobotModel::a1_like();
  fs::path p(robot);
  if (!fs::exists(p)) p = fs::path(config_dir()) / "robots" / (robot + ".yaml");
  return RobotModel::load(p.string());
}

env::EnvConfig ExperimentConfig::env_config() const {
  env::EnvConfig c;
  c.robot = robot_model();
  c.set_terrain_preset(terrain);
  c.perturbation = PerturbationProfile::by_name(perturbation);
  c.reward = reward;
  c.reward.v_target = v_target;
  c.extra.enabled = extra_penalties;
  return c;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  try {
    train.validate();
    terrain::preset(terrain).validate();
    PerturbationProfile::by_name(perturbation);
    if (conditioned) distill.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (!(v_target > 0.0)) fail("v_target must be > 0");
  if (reward.alpha_energy < 0.0) fail("reward.alpha_energy must be >= 0");
  if (eval_episodes < 1) fail("eval.episodes must be >= 1");
  if (conditioned)
    for (const auto& e : experts)
      if (e.empty()) fail("distill.experts needs three checkpoint paths");
}

namespace {

template <typename T>
void emit(YAML::Emitter& out, const char* key, const T& v) {
  out << YAML::Key << key << YAML::Value << v;
}

std::vector<int> int_list(const YAML::Node& parent, const std::string& key, const std::vector<int>& fallback) {
  const auto v = yaml::get_list(parent, key, 0, {});
  if (!parent[key]) return fallback;
  std::vector<int> out;
  for (double d : v) {
    if (d != std::floor(d) || d < 1) throw ConfigError("key '" + key + "' must list positive integers", yaml::line_of(parent[key]));
    out.push_back(static_cast<int>(d));
  }
  if (out.empty()) throw ConfigError("key '" + key + "' must not be empty", yaml::line_of(parent[key]));
  return out;
}

}  // namespace

std::string ExperimentConfig::to_yaml() const {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  emit(out, "name", name);
  emit(out, "robot", robot);
  emit(out, "seed", seed);
  emit(out, "v_target", v_target);
  emit(out, "terrain", terrain);
  emit(out, "perturbation", perturbation);
  out << YAML::Key << "reward" << YAML::Value << YAML::BeginMap;
  emit(out, "alpha_energy", reward.alpha_energy);
  emit(out, "alpha_forward", reward.alpha_forward);
  emit(out, "alive_scale", reward.alive_scale);
  emit(out, "extra_penalties", extra_penalties);
  out << YAML::EndMap;
  out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  emit(out, "iterations", train.iterations);
  emit(out, "num_envs", train.num_envs);
  emit(out, "horizon", train.horizon);
  emit(out, "minibatches", train.minibatches);
  emit(out, "epochs", train.epochs);
  emit(out, "lr", train.adam.lr);
  emit(out, "gamma", train.gamma);
  emit(out, "lambda", train.lambda);
  emit(out, "ratio_clip", train.ratio_clip);
  emit(out, "value_clip", train.value_clip);
  emit(out, "value_clip_mode", learn::to_string(train.value_clip_mode));
  emit(out, "entropy_coef", train.entropy_coef);
  emit(out, "max_grad_norm", train.max_grad_norm);
  emit(out, "reward_scale", train.reward_scale);
  emit(out, "normalize_advantages", train.normalize_advantages);
  emit(out, "checkpoint_every", train.checkpoint_every);
  out << YAML::EndMap;
  out << YAML::Key << "agent" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "hidden" << YAML::Value << YAML::Flow << agent.hidden;
  out << YAML::Key << "latent_hidden" << YAML::Value << YAML::Flow << agent.latent_hidden;
  emit(out, "activation", nn::to_string(agent.activation));
  emit(out, "init_std", agent.init_std);
  emit(out, "min_std", agent.min_std);
  out << YAML::EndMap;
  out << YAML::Key << "phase2" << YAML::Value << YAML::BeginMap;
  emit(out, "enabled", phase2);
  emit(out, "iterations", adaptation.iterations);
  emit(out, "num_envs", adaptation.num_envs);
  emit(out, "horizon", adaptation.horizon);
  emit(out, "episode_steps", adaptation.episode_steps);
  emit(out, "epochs", adaptation.epochs);
  emit(out, "minibatch", adaptation.minibatch);
  emit(out, "patience", adaptation.patience);
  emit(out, "validation_envs", adaptation.validation_envs);
  emit(out, "lr", adaptation.adam.lr);
  out << YAML::EndMap;
  out << YAML::Key << "eval" << YAML::Value << YAML::BeginMap;
  emit(out, "episodes", eval_episodes);
  emit(out, "seed", eval_seed);
  emit(out, "deterministic", eval_deterministic);
  out << YAML::EndMap;
  if (conditioned) {
    out << YAML::Key << "distill" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "experts" << YAML::Value << YAML::BeginSeq;
    for (const auto& e : experts) out << e;
    out << YAML::EndSeq;
    emit(out, "enabled", distill.distill);
    emit(out, "targets", distill::to_string(distill.targets));
    emit(out, "resample_every", distill.resample_every);
    emit(out, "mode_probability", distill.mode_probability);
    emit(out, "expert_states", distill.expert_states);
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

ExperimentConfig ExperimentConfig::from_yaml(const std::string& text) {
  const YAML::Node root = yaml::parse(text);
  if (!root.IsMap()) throw ConfigError("experiment config must be a mapping", yaml::line_of(root));
  yaml::check_keys(root,
                   {"name", "robot", "seed", "v_target", "terrain", "perturbation", "reward", "train",
                    "agent", "phase2", "eval", "distill"},
                   "experiment config");
  ExperimentConfig c;
  c.name = yaml::get(root, "name", c.name);
  c.robot = yaml::get(root, "robot", c.robot);
  c.seed = yaml::get(root, "seed", c.seed);
  c.v_target = yaml::get(root, "v_target", c.v_target);
  yaml::expect(c.v_target > 0.0, root, "v_target", "must be > 0");
  c.terrain = yaml::get(root, "terrain", c.terrain);
  try {
    terrain::preset(c.terrain);
  } catch (const std::exception& e) {
    throw ConfigError(e.what(), yaml::line_of(root["terrain"]));
  }
  c.perturbation = yaml::get(root, "perturbation", c.perturbation);
  try {
    PerturbationProfile::by_name(c.perturbation);
  } catch (const std::exception& e) {
    throw ConfigError(e.what(), yaml::line_of(root["perturbation"]));
  }

  if (const auto r = root["reward"]) {
    yaml::check_keys(r, {"alpha_energy", "alpha_forward", "alive_scale", "extra_penalties"}, "reward");
    c.reward.alpha_energy = yaml::get(r, "alpha_energy", c.reward.alpha_energy);
    c.reward.alpha_forward = yaml::get(r, "alpha_forward", c.reward.alpha_forward);
    c.reward.alive_scale = yaml::get(r, "alive_scale", c.reward.alive_scale);
    c.extra_penalties = yaml::get(r, "extra_penalties", c.extra_penalties);
    yaml::expect(c.reward.alpha_energy >= 0.0, r, "alpha_energy", "must be >= 0");
  }
  if (const auto t = root["train"]) {
    yaml::check_keys(t,
                     {"iterations", "num_envs", "horizon", "minibatches", "epochs", "lr", "gamma", "lambda",
                      "ratio_clip", "value_clip", "value_clip_mode", "entropy_coef", "max_grad_norm",
                      "reward_scale", "normalize_advantages", "checkpoint_every"},
                     "train");
    auto& tc = c.train;
    tc.iterations = yaml::get(t, "iterations", tc.iterations);
    tc.num_envs = yaml::get(t, "num_envs", tc.num_envs);
    tc.horizon = yaml::get(t, "horizon", tc.horizon);
    tc.minibatches = yaml::get(t, "minibatches", tc.minibatches);
    tc.epochs = yaml::get(t, "epochs", tc.epochs);
    tc.adam.lr = yaml::get(t, "lr", tc.adam.lr);
    tc.gamma = yaml::get(t, "gamma", tc.gamma);
    tc.lambda = yaml::get(t, "lambda", tc.lambda);
    tc.ratio_clip = yaml::get(t, "ratio_clip", tc.ratio_clip);
    tc.value_clip = yaml::get(t, "value_clip", tc.value_clip);
    if (t["value_clip_mode"]) {
      try {
        tc.value_clip_mode = learn::value_clip_from_string(yaml::get<std::string>(t, "value_clip_mode", ""));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what(), yaml::line_of(t["value_clip_mode"]));
      }
    }
    tc.entropy_coef = yaml::get(t, "entropy_coef", tc.entropy_coef);
    tc.max_grad_norm = yaml::get(t, "max_grad_norm", tc.max_grad_norm);
    tc.reward_scale = yaml::get(t, "reward_scale", tc.reward_scale);
    tc.normalize_advantages = yaml::get(t, "normalize_advantages", tc.normalize_advantages);
    tc.checkpoint_every = yaml::get(t, "checkpoint_every", tc.checkpoint_every);
    yaml::expect(tc.iterations >= 1, t, "iterations", "must be >= 1");
    yaml::expect(tc.num_envs >= 1, t, "num_envs", "must be >= 1");
    yaml::expect(tc.horizon >= 1, t, "horizon", "must be >= 1");
    yaml::expect(tc.adam.lr > 0.0, t, "lr", "must be > 0");
    yaml::expect(tc.gamma > 0.0 && tc.gamma <= 1.0, t, "gamma", "must lie in (0, 1]");
    yaml::expect(tc.lambda >= 0.0 && tc.lambda <= 1.0, t, "lambda", "must lie in [0, 1]");
    try {
      tc.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what(), yaml::line_of(t));
    }
  }
  if (const auto a = root["agent"]) {
    yaml::check_keys(a, {"hidden", "latent_hidden", "activation", "init_std", "min_std"}, "agent");
    c.agent.hidden = int_list(a, "hidden", c.agent.hidden);
    c.agent.latent_hidden = int_list(a, "latent_hidden", c.agent.latent_hidden);
    if (a["activation"]) {
      try {
        c.agent.activation = nn::activation_from_string(yaml::get<std::string>(a, "activation", ""));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what(), yaml::line_of(a["activation"]));
      }
    }
    c.agent.init_std = yaml::get(a, "init_std", c.agent.init_std);
    c.agent.min_std = yaml::get(a, "min_std", c.agent.min_std);
    yaml::expect(c.agent.min_std > 0.0, a, "min_std", "must be > 0");
    yaml::expect(c.agent.init_std >= c.agent.min_std, a, "init_std", "must be >= min_std");
  }
  if (const auto p = root["phase2"]) {
    yaml::check_keys(p, {"enabled", "iterations", "num_envs", "horizon", "episode_steps", "epochs", "minibatch",
                         "patience", "validation_envs", "lr"},
                     "phase2");
    auto& a = c.adaptation;
    c.phase2 = yaml::get(p, "enabled", c.phase2);
    a.iterations = yaml::get(p, "iterations", a.iterations);
    a.num_envs = yaml::get(p, "num_envs", a.num_envs);
    a.horizon = yaml::get(p, "horizon", a.horizon);
    a.episode_steps = yaml::get(p, "episode_steps", a.episode_steps);
    a.epochs = yaml::get(p, "epochs", a.epochs);
    a.minibatch = yaml::get(p, "minibatch", a.minibatch);
    a.patience = yaml::get(p, "patience", a.patience);
    a.validation_envs = yaml::get(p, "validation_envs", a.validation_envs);
    a.adam.lr = yaml::get(p, "lr", a.adam.lr);
    yaml::expect(a.iterations >= 1, p, "iterations", "must be >= 1");
    yaml::expect(a.num_envs >= 1, p, "num_envs", "must be >= 1");
    yaml::expect(a.horizon >= 1, p, "horizon", "must be >= 1");
    yaml::expect(a.episode_steps >= 1, p, "episode_steps", "must be >= 1");
  }
  if (const auto e = root["eval"]) {
    yaml::check_keys(e, {"episodes", "seed", "deterministic"}, "eval");
    c.eval_episodes = yaml::get(e, "episodes", c.eval_episodes);
    c.eval_seed = yaml::get(e, "seed", c.eval_seed);
    c.eval_deterministic = yaml::get(e, "deterministic", c.eval_deterministic);
    yaml::expect(c.eval_episodes >= 1, e, "episodes", "must be >= 1");
  }
  if (const auto d = root["distill"]) {
    yaml::check_keys(d, {"experts", "enabled", "targets", "resample_every", "mode_probability", "expert_states"},
                     "distill");
    c.conditioned = true;
    const auto ex = d["experts"];
    if (!ex || !ex.IsSequence() || ex.size() != 3)
      throw ConfigError("distill.experts must list three checkpoints (0.375, 0.9, 1.5 m/s)",
                        yaml::line_of(ex ? ex : d));
    for (std::size_t k = 0; k < 3; ++k) c.experts[k] = ex[k].as<std::string>();
    c.distill.distill = yaml::get(d, "enabled", c.distill.distill);
    if (d["targets"]) {
      try {
        c.distill.targets = distill::target_states_from_string(yaml::get<std::string>(d, "targets", ""));
      } catch (const std::invalid_argument& err) {
        throw ConfigError(err.what(), yaml::line_of(d["targets"]));
      }
    }
    c.distill.resample_every = yaml::get(d, "resample_every", c.distill.resample_every);
    c.distill.mode_probability = yaml::get(d, "mode_probability", c.distill.mode_probability);
    c.distill.expert_states = yaml::get(d, "expert_states", c.distill.expert_states);
    yaml::expect(c.distill.resample_every >= 1, d, "resample_every", "must be >= 1");
    yaml::expect(c.distill.mode_probability >= 0.0 && c.distill.mode_probability <= 1.0, d, "mode_probability",
                 "must lie in [0, 1]");
  }
  c.train.seed = c.seed;
  c.adaptation.seed = c.seed;
  c.distill.train = c.train;
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_yaml(ss.str());
}

}  // namespace gaitlab::cli
