#pragma once

// Scenario runner: every (policy, BA, seed) combination is an independent,
// sequential run over the scenario's intervals. Runs execute on a worker pool
// and a single collector writes their outputs in a fixed order.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "vthresh/baselines.hpp"
#include "vthresh/engine.hpp"
#include "vthresh/metrics.hpp"
#include "vthresh/router.hpp"
#include "vthresh/scenario.hpp"
#include "vthresh/simgen.hpp"

namespace vthresh {

struct RunKey {
  std::string policy;
  std::size_t ba = 0;
  std::uint64_t seed = 0;
};

struct RunOutput {
  RunKey key;
  std::vector<IntervalRecord> records;
  std::string decisions;                              ///< JSON lines
  std::string routing;                                ///< CSV body, empty unless enabled
  std::vector<std::pair<std::size_t, std::string>> snapshots;  ///< (interval, CSV)
};

/// Engine configuration for an engine-backed policy (ours or an ablation).
inline EngineConfig policy_engine(const Scenario& s, PolicyKind kind) {
  EngineConfig e = s.engine;
  switch (kind) {
    case PolicyKind::fixed_bw:
      e.density.adaptive = false;
      break;
    case PolicyKind::no_reflect:
      e.density.reflect = false;
      break;
    case PolicyKind::no_snapping:
      e.snapping = false;
      break;
    case PolicyKind::no_hysteresis:
      e.hysteresis = false;
      break;
    default:
      break;
  }
  return e;
}

/// Stream profile for one (BA, seed): the run seed replaces the profile seed
/// so that every policy sees the same scores.
inline BAStreamProfile run_profile(const Scenario& s, std::size_t ba, std::uint64_t seed) {
  BAStreamProfile p = s.bas.at(ba).profile;
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + p.seed + 0x632BE59BD9B4E019ull * (ba + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  p.seed = z ^ (z >> 31);
  return p;
}

namespace detail {

// N * f at the cut, read from the interval's own scores with a 0.01-wide window.
inline double local_elasticity(const std::vector<double>& scores, double cut) {
  constexpr double w = 0.01;
  std::size_t n = 0;
  for (double s : scores) n += std::abs(s - cut) < 0.5 * w ? 1 : 0;
  return static_cast<double>(n) / w;
}

inline std::size_t count_at_least(const std::vector<double>& scores, double cut) {
  return static_cast<std::size_t>(std::count_if(scores.begin(), scores.end(), [&](double s) { return s >= cut; }));
}

// Scores on the score atom nearest the trim, and whether their intake status
// differs from what the previous interval's trim would have given them.
inline void tie_accounting(IntervalRecord& r, const std::vector<double>& scores, double step, double trim,
                           std::optional<double> previous_trim) {
  if (!(step > 0.0)) return;
  const double atom = discretize(std::clamp(trim, 0.0, 1.0), step);
  for (double s : scores) r.at_atom += s == atom ? 1 : 0;
  if (previous_trim && (atom >= trim) != (atom >= *previous_trim)) r.tie_flips = r.at_atom;
}

inline double median_ns(std::vector<double>& ns) {
  if (ns.empty()) return 0.0;
  auto mid = ns.begin() + static_cast<std::ptrdiff_t>(ns.size() / 2);
  std::nth_element(ns.begin(), mid, ns.end());
  return *mid;
}

}  // namespace detail

/// Runs one (policy, BA, seed) combination.
inline RunOutput run_one(const Scenario& s, const RunKey& key) {
  const PolicyKind kind = parse_policy(key.policy);
  const BaSpec& spec = s.bas.at(key.ba);
  const BAStreamProfile prof = run_profile(s, key.ba, key.seed);
  const double rate = static_cast<double>(prof.rate);
  RunOutput out;
  out.key = key;

  std::optional<Engine> engine;
  if (is_engine_policy(kind)) engine.emplace(policy_engine(s, kind));
  std::optional<WindowQuantile> wq;
  if (kind == PolicyKind::window_quantile) wq.emplace(s.baselines.window_blocks, s.baselines.gk_epsilon);
  std::optional<EwmaController> ewma;
  if (kind == PolicyKind::ewma)
    ewma.emplace(1.0 - spec.kappa, s.baselines.ewma_gain, s.baselines.ewma_smoothing);

  std::ostringstream decisions, routing;
  routing.precision(17);
  BacklogState backlog;
  std::optional<double> previous_trim;
  std::vector<double> day_scores;
  double day_cut = 1.0;

  for (std::size_t t = 0; t < s.intervals; ++t) {
    const std::vector<double> scores = generate_interval(prof, t);
    const double kappa = kappa_at(prof, t);
    const double target = kappa * rate;
    IntervalRecord r;
    r.policy = key.policy;
    r.ba = prof.name;
    r.seed = key.seed;
    r.interval = t;
    r.volume = static_cast<double>(scores.size());
    r.target = target;

    if (engine) {
      CapacityTarget ct;
      ct.kappa_up = kappa;
      if (spec.kappa_std) ct.kappa_up_std = std::max(*spec.kappa_std, kappa);
      ct.tolerance = s.engine.tolerance;
      ct.volume = rate;
      const Decision d = engine->refresh(ct);
      if (s.outputs.decisions) {
        nlohmann::json j = to_json(d);
        j["interval"] = t;
        j["policy"] = key.policy;
        j["ba"] = prof.name;
        j["seed"] = key.seed;
        j["scenario_hash"] = s.hash;
        decisions << j.dump() << '\n';
      }
      if (std::find(s.outputs.snapshots.begin(), s.outputs.snapshots.end(), t) != s.outputs.snapshots.end()) {
        std::ostringstream snap;
        snap << "# vthresh " << kToolVersion << " scenario " << s.hash << '\n';
        write_snapshot_csv(snap, engine->density().snapshot());
        out.snapshots.emplace_back(t, snap.str());
      }
      r.hold = d.hold;
      r.n_eff = d.n_eff;
      r.h0 = d.h0;
      r.valleys = d.valleys.size();
      if (d.cuts.empty()) {
        r.cut = r.trim = r.t_star = 1.0;
      } else {
        const Cut& up = d.cuts.escalation();
        r.cut = up.location;
        r.trim = up.trim;
        r.anchored = up.anchored;
        r.elasticity = up.elasticity;
        r.t_star = d.t_star.empty() ? up.location : d.t_star.back();
        if (d.cuts.two_cut()) r.cut_std = d.cuts.cuts.front().location;
      }
      std::size_t taken = 0;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        const RoutingDecision rd = route_event(scores[i], d.cuts, t, i);
        taken += rd.queue == QueueLabel::escalation && rd.taken ? 1 : 0;
        if (s.outputs.routing) write_routing_row(routing, rd);
      }
      r.intake = static_cast<double>(taken);
      std::vector<double> ns;
      if (s.outputs.timing) ns.reserve(scores.size());
      for (double x : scores) {
        if (s.outputs.timing) {
          const auto t0 = std::chrono::steady_clock::now();
          engine->ingest(x);
          ns.push_back(std::chrono::duration<double, std::nano>(std::chrono::steady_clock::now() - t0).count());
        } else {
          engine->ingest(x);
        }
      }
      r.update_ns = detail::median_ns(ns);
    } else {
      double cut = 1.0;
      if (kind == PolicyKind::window_quantile) {
        if (wq->count() > 0) cut = wq->cut(kappa);
        wq->start_block();
        for (double x : scores) wq->insert(x);
      } else if (kind == PolicyKind::ewma) {
        cut = ewma->cut();
      } else {
        // Batch top-K decides with hindsight over each block of day_intervals.
        const std::size_t day = s.baselines.day_intervals;
        if (t % day == 0) {
          day_scores.clear();
          double day_target = 0.0;
          for (std::size_t u = t; u < std::min(t + day, s.intervals); ++u) {
            const auto block = u == t ? scores : generate_interval(prof, u);
            day_scores.insert(day_scores.end(), block.begin(), block.end());
            day_target += kappa_at(prof, u) * rate;
          }
          day_cut = batch_topk_cut(day_scores, static_cast<std::size_t>(std::llround(day_target)));
        }
        cut = day_cut;
      }
      r.cut = r.trim = r.t_star = cut;
      r.intake = static_cast<double>(detail::count_at_least(scores, cut));
      r.elasticity = detail::local_elasticity(scores, cut);
      if (s.outputs.routing) {
        DeployedCuts dc;
        dc.cuts.push_back(Cut{std::clamp(cut, 0.0, 1.0), std::clamp(cut, 0.0, 1.0), false});
        for (std::size_t i = 0; i < scores.size(); ++i) write_routing_row(routing, route_event(scores[i], dc, t, i));
      }
      if (kind == PolicyKind::ewma) {
        ewma->observe(scores);
        ewma->update(r.intake, target, r.volume);
      }
    }

    detail::tie_accounting(r, scores, step_at(prof, t), r.trim, previous_trim);
    previous_trim = r.trim;
    r.review = s.review_factor * target;
    backlog.breach_threshold = s.backlog_beta * target;
    backlog = backlog_step(backlog, r.intake, r.review);
    r.backlog = backlog.backlog;
    out.records.push_back(std::move(r));
  }
  out.decisions = decisions.str();
  out.routing = routing.str();
  return out;
}

/// All run keys of a scenario for the given seeds, in output order.
inline std::vector<RunKey> run_keys(const Scenario& s, const std::vector<std::uint64_t>& seeds) {
  std::vector<RunKey> keys;
  for (const auto& policy : s.policies)
    for (std::size_t b = 0; b < s.bas.size(); ++b)
      for (std::uint64_t seed : seeds) keys.push_back({policy, b, seed});
  return keys;
}

/// Worker count: hardware concurrency, capped by VTHRESH_WORKERS when set.
inline std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("VTHRESH_WORKERS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && v > 0) n = std::min<std::size_t>(n, v);
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

/// Runs every key on a worker pool; results come back in key order.
inline std::vector<RunOutput> run_all(const Scenario& s, const std::vector<RunKey>& keys) {
  std::vector<std::optional<RunOutput>> slots(keys.size());
  std::atomic<std::size_t> next{0};
  std::mutex failure_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= keys.size()) return;
      try {
        slots[i] = run_one(s, keys[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = worker_count(keys.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  std::vector<RunOutput> out;
  for (auto& slot : slots) out.push_back(std::move(*slot));
  return out;
}

inline std::string run_stem(const Scenario& s, const RunKey& k) {
  return k.policy + "__" + s.bas.at(k.ba).profile.name + "__s" + std::to_string(k.seed);
}

/// Runs the scenario and writes the output tree:
///   manifest.json, records/<stem>.csv, decisions/<stem>.jsonl,
///   routing/<stem>.csv (optional), snapshots/<stem>__t<interval>.csv.
inline nlohmann::json simulate(const Scenario& s, const std::vector<std::uint64_t>& seeds,
                               const std::filesystem::path& out_dir, const std::string& config_path) {
  namespace fs = std::filesystem;
  if (seeds.empty()) throw ConfigError("seeds: at least one seed required");
  const auto keys = run_keys(s, seeds);
  auto results = run_all(s, keys);

  fs::create_directories(out_dir / "records");
  if (s.outputs.decisions) fs::create_directories(out_dir / "decisions");
  if (s.outputs.routing) fs::create_directories(out_dir / "routing");
  if (!s.outputs.snapshots.empty()) fs::create_directories(out_dir / "snapshots");
  const std::string stamp = std::string("# vthresh ") + kToolVersion + " scenario " + s.hash + "\n";

  nlohmann::json files = nlohmann::json::array();
  for (const auto& r : results) {
    const std::string stem = run_stem(s, r.key);
    {
      std::ofstream os(out_dir / "records" / (stem + ".csv"), std::ios::binary);
      os << stamp;
      write_records_csv(os, r.records, s.outputs.timing);
      if (!os) throw Error("failed writing records for " + stem);
    }
    files.push_back("records/" + stem + ".csv");
    if (s.outputs.decisions && is_engine_policy(parse_policy(r.key.policy))) {
      std::ofstream os(out_dir / "decisions" / (stem + ".jsonl"), std::ios::binary);
      os << r.decisions;
    }
    if (s.outputs.routing) {
      std::ofstream os(out_dir / "routing" / (stem + ".csv"), std::ios::binary);
      os << stamp;
      write_routing_header(os);
      os << r.routing;
    }
    for (const auto& [t, csv] : r.snapshots) {
      std::ofstream os(out_dir / "snapshots" / (stem + "__t" + std::to_string(t) + ".csv"), std::ios::binary);
      os << csv;
    }
  }

  nlohmann::json ablations = nlohmann::json::object();
  for (const auto& p : s.policies) {
    const PolicyKind k = parse_policy(p);
    if (!is_engine_policy(k)) continue;
    const EngineConfig e = policy_engine(s, k);
    ablations[p] = {{"adaptive", e.density.adaptive},
                    {"reflect", e.density.reflect},
                    {"snapping", e.snapping},
                    {"hysteresis", e.hysteresis}};
  }
  nlohmann::json bas = nlohmann::json::array();
  for (const auto& b : s.bas) bas.push_back(b.profile.name);
  nlohmann::json manifest{{"tool_version", kToolVersion},
                          {"scenario_hash", s.hash},
                          {"scenario", s.name},
                          {"config", config_path},
                          {"seeds", seeds},
                          {"policies", s.policies},
                          {"ablations", ablations},
                          {"bas", bas},
                          {"intervals", s.intervals},
                          {"warmup", s.warmup},
                          {"backlog_beta", s.backlog_beta},
                          {"tolerance", s.engine.tolerance},
                          {"records", files}};
  std::ofstream os(out_dir / "manifest.json", std::ios::binary);
  os << manifest.dump(2) << '\n';
  if (!os) throw Error("failed writing manifest");
  return manifest;
}

}  // namespace vthresh
