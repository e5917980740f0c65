#include "gaitlab/analysis.hpp"
#include "gaitlab/dynamics.hpp"
#include "gaitlab/env.hpp"
#include "gaitlab/learn.hpp"
#include "gaitlab/mpc_baseline.hpp"
#include "gaitlab/nn.hpp"
#include "gaitlab/terrain.hpp"

#include <benchmark/benchmark.h>

using namespace gaitlab;

namespace {

void BM_SimStep(benchmark::State& state) {
  const dynamics::Simulator sim(RobotModel::a1_like(), dynamics::SimConfig{});
  const auto field = terrain::generate(terrain::FractalParams::unstructured(), {8.0, 4.0}, 0.05, 3, {-2.0, -2.0});
  const EnvParams params;
  const auto s0 = sim.standing_state(field);
  for (auto _ : state) benchmark::DoNotOptimize(sim.step(s0, JointVector::Zero(), field, params));
}
BENCHMARK(BM_SimStep);

// One control step: PD substeps, reward, observation.
void BM_EnvStep(benchmark::State& state) {
  env::Env e{env::EnvConfig{}};
  e.reset(1);
  Rng rng(2);
  std::uint64_t seed = 3;
  for (auto _ : state) {
    env::Action a;
    for (int j = 0; j < kNumJoints; ++j) a.delta_q_target[j] = 0.3 * rng.uniform(-1.0, 1.0) * env::action_bounds()[j];
    if (e.step(a).done) e.reset(++seed);
  }
}
BENCHMARK(BM_EnvStep);

void BM_GaitClassifier(benchmark::State& state) {
  const auto sched = mpc::GaitScheduleConfig::trot();
  analysis::ContactTrace tr;
  for (int t = 0; t < state.range(0); ++t) {
    const auto modes = mpc::schedule_tick(sched, 1.0, t * 0.01);
    ContactFlags f{};
    for (int i = 0; i < kNumLegs; ++i) f[i] = modes[i] == mpc::LegMode::Stance;
    tr.contacts.push_back(f);
  }
  const auto model = RobotModel::a1_like();
  for (auto _ : state) benchmark::DoNotOptimize(analysis::gait_metrics(tr, model));
}
BENCHMARK(BM_GaitClassifier)->Arg(1000)->Arg(4000);

void BM_Gae(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  Rng rng(4);
  learn::Vector r(n), v(n), adv, ret;
  std::vector<bool> d(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    r[t] = rng.normal();
    v[t] = rng.normal();
    d[static_cast<std::size_t>(t)] = rng.uniform() < 0.01;
  }
  for (auto _ : state) {
    learn::gae(r, v, d, 0.0, 0.998, 0.95, adv, ret);
    benchmark::DoNotOptimize(adv.data());
  }
}
BENCHMARK(BM_Gae)->Arg(512)->Arg(4096);

// Policy-sized network on a minibatch of observations.
void BM_MlpForward(benchmark::State& state) {
  nn::Mlp net({45, 128, 128, 128, 12}, nn::Activation::Elu);
  Rng rng(5);
  net.init(rng);
  nn::Matrix x = nn::Matrix::Random(45, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_MlpForward)->Arg(1)->Arg(512);

}  // namespace
BENCHMARK_MAIN();
