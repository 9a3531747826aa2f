#pragma once

// Ingest-only timing loops across grid sizes.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "vthresh/density.hpp"
#include "vthresh/metrics.hpp"
#include "vthresh/simgen.hpp"

namespace vthresh {

struct BenchOptions {
  std::vector<std::size_t> grids{128, 512, 2048};
  std::size_t events = 20000;
  std::size_t batch = 250;      ///< events per timing sample
  double alpha = 1e-3;
  std::uint64_t seed = 7;
};

/// Per-event seconds per batch for each grid size, then the log-log fit.
/// The same bimodal stream feeds every size. Before timing, 5 / alpha events
/// bring n_eff (and so h0) to steady state.
inline RuntimeProfile run_bench(const BenchOptions& o) {
  if (o.events == 0) throw ConfigError("bench needs a positive event count");
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw ConfigError("bench alpha must lie in (0,1)");
  if (o.batch == 0) throw ConfigError("bench batch size must be positive");
  if (o.grids.size() < 3) throw InsufficientData("runtime profile needs at least three grid sizes");
  BAStreamProfile prof = *builtin_profile("bimodal");
  prof.seed = o.seed;
  const auto warm = static_cast<std::size_t>(std::ceil(5.0 / o.alpha));
  prof.rate = warm + o.events;
  const std::vector<double> scores = generate_interval(prof, 0);

  std::vector<StreamDensity> states;
  for (std::size_t g : o.grids) {
    DensityConfig cfg;
    cfg.grid_size = g;
    cfg.mode = ExponentialForgetting{o.alpha};
    states.emplace_back(cfg);
    for (std::size_t i = 0; i < warm; ++i) states.back().ingest(scores[i]);
  }
  // Batches are interleaved across grid sizes so background load affects all
  // sizes alike.
  std::vector<std::pair<std::size_t, std::vector<double>>> timings;
  for (std::size_t g : o.grids) timings.emplace_back(g, std::vector<double>{});
  for (std::size_t i = warm; i < scores.size(); i += o.batch) {
    const std::size_t end = std::min(scores.size(), i + o.batch);
    for (std::size_t k = 0; k < states.size(); ++k) {
      const auto t0 = std::chrono::steady_clock::now();
      for (std::size_t e = i; e < end; ++e) states[k].ingest(scores[e]);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      timings[k].second.push_back(secs / static_cast<double>(end - i));
    }
  }
  return runtime_profile(timings);
}

}  // namespace vthresh
