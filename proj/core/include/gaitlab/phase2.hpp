#pragma once

#include "gaitlab/learn.hpp"

#include <string>
#include <vector>

namespace gaitlab::phase2 {

/// phi: the 20-step state-action history (x_{t-1}..x_{t-20}, a_{t-2}..a_{t-21})
/// mapped to an estimate of the extrinsics z. Missing steps at episode start
/// are zero-padded.
class AdaptationModule {
 public:
  AdaptationModule() = default;
  AdaptationModule(std::vector<int> hidden, nn::Activation act, std::uint64_t seed);

  learn::Matrix predict(const learn::Matrix& history) const { return net.forward(history); }
  learn::Vector predict(const learn::Vector& history) const;

  nn::Mlp net;
};

struct Phase2Config {
  std::vector<int> hidden{256, 128};
  nn::Activation activation = nn::Activation::Elu;
  int iterations = 20;         // collect/fit rounds (upper bound)
  int num_envs = 8;
  int horizon = 1000;          // control steps per env per round
  int episode_steps = 200;     // training episodes are cut here so each round sees many e_t draws
  int epochs = 4;              // passes over the aggregated data per round
  int minibatch = 256;
  int max_samples = 200000;    // oldest samples are dropped beyond this
  int validation_envs = 16;    // full-length episodes on held-out seeds
  int patience = 5;            // rounds without a 1% validation gain before stopping
  nn::Adam::Config adam{1e-3, 0.9, 0.999, 1e-8};
  std::uint64_t seed = 1;
  bool stochastic = false;     // sample actions from the policy distribution instead of the mean
  bool zero_history = false;   // test hook: feed an all-zero history
};

struct RoundStats {
  int round = 0;
  long samples = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double val_baseline_mse = 0.0;  // predicting the training-set mean of z
};

struct Phase2Result {
  AdaptationModule module;
  std::vector<RoundStats> rounds;
  double val_mse = 0.0;
  double baseline_mse = 0.0;
  learn::Vector z_mean;
};

/// On-policy supervised training: the frozen agent acts on z-hat from the
/// current module while phi regresses onto z = encoder(e_t).
Phase2Result train_phase2(const learn::Agent& agent, const env::EnvConfig& env_config,
                          const Phase2Config& cfg, const std::string& run_dir = "");

std::string round_header();
std::string round_row(const RoundStats& s);

void save_module(const AdaptationModule& m, const std::string& path);
AdaptationModule load_module(const std::string& path);

}  // namespace gaitlab::phase2
