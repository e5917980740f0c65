#pragma once

#include "gaitlab/distill.hpp"
#include "gaitlab/env.hpp"
#include "gaitlab/learn.hpp"
#include "gaitlab/phase2.hpp"

#include <array>
#include <optional>
#include <string>

namespace gaitlab::cli {

/// Everything a run needs, loadable from YAML and written back verbatim into
/// the run directory.
struct ExperimentConfig {
  std::string name = "custom";
  std::string robot = "a1_like";  // built-in name or path to a robot YAML
  std::uint64_t seed = 1;
  double v_target = 0.375;
  std::string terrain = "desk";
  std::string perturbation = "normal";
  env::RewardConfig reward{};
  bool extra_penalties = false;
  learn::TrainConfig train{};
  learn::AgentConfig agent{};

  bool phase2 = false;
  phase2::Phase2Config adaptation{};

  int eval_episodes = 20;
  std::uint64_t eval_seed = 1000;
  bool eval_deterministic = false;

  // Velocity-conditioned training (transition presets only).
  bool conditioned = false;
  std::array<std::string, 3> experts{};  // checkpoints at 0.375 / 0.9 / 1.5 m/s
  distill::DistillConfig distill{};

  RobotModel robot_model() const;
  env::EnvConfig env_config() const;
  /// Throws ConfigError on inconsistent values.
  void validate() const;

  std::string to_yaml() const;
  static ExperimentConfig from_yaml(const std::string& text);
  static ExperimentConfig load(const std::string& path);
};

/// Directory searched for presets: $GAITLAB_CONFIG_DIR, else the source tree.
std::string config_dir();
std::vector<std::string> preset_names();
/// Reads configs/presets/<name>.yaml.
ExperimentConfig load_preset(const std::string& name);

}  // namespace gaitlab::cli
