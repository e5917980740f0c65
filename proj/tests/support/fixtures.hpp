#pragma once

// Contact traces generated straight from the gait scheduler, plus edge jitter.

#include "gaitlab/analysis.hpp"
#include "gaitlab/mpc_baseline.hpp"

#include <vector>

namespace gaitlab::fixtures {

inline analysis::ContactTrace scheduler_trace(const mpc::GaitScheduleConfig& gait, double v,
                                              int samples = 1000, double rate = 100.0) {
  analysis::ContactTrace tr;
  tr.sample_rate = rate;
  for (int t = 0; t < samples; ++t) {
    const auto modes = mpc::schedule_tick(gait, v, t / rate);
    ContactFlags f{};
    for (int i = 0; i < kNumLegs; ++i) f[i] = modes[i] == mpc::LegMode::Stance;
    tr.contacts.push_back(f);
  }
  return tr;
}

/// Moves every contact edge of every leg by -1, 0 or +1 samples.
inline analysis::ContactTrace jitter_edges(const analysis::ContactTrace& tr, Rng& rng) {
  analysis::ContactTrace out = tr;
  const auto& c = tr.contacts;
  for (int leg = 0; leg < kNumLegs; ++leg) {
    for (std::size_t t = 1; t < c.size(); ++t) {
      if (c[t][leg] == c[t - 1][leg]) continue;
      const int shift = rng.uniform_int(-1, 1);
      if (shift < 0)
        out.contacts[t - 1][leg] = c[t][leg];
      else if (shift > 0 && t + 1 < c.size())
        out.contacts[t][leg] = c[t - 1][leg];
    }
  }
  return out;
}

/// Five speeds evenly spread over the gait's tested range.
inline std::vector<double> fixture_speeds(const mpc::GaitScheduleConfig& g) {
  std::vector<double> v;
  for (int k = 0; k < 5; ++k) v.push_back(g.min_speed + (g.max_speed - g.min_speed) * k / 4.0);
  return v;
}

}  // namespace gaitlab::fixtures
