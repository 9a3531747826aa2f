#pragma once

// Scenario documents (JSON): stream profiles per BA, engine settings, policies,
// backlog and output options. Unknown keys are rejected with their full path.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vthresh/capacity.hpp"
#include "vthresh/engine.hpp"
#include "vthresh/error.hpp"
#include "vthresh/simgen.hpp"

namespace vthresh {

inline constexpr const char* kToolVersion = "0.3.0";

enum class PolicyKind { ours, fixed_bw, no_reflect, no_snapping, no_hysteresis, window_quantile, batch_topk, ewma };

inline PolicyKind parse_policy(const std::string& s) {
  if (s == "ours") return PolicyKind::ours;
  if (s == "fixed_bw") return PolicyKind::fixed_bw;
  if (s == "no_reflect") return PolicyKind::no_reflect;
  if (s == "no_snapping") return PolicyKind::no_snapping;
  if (s == "no_hysteresis") return PolicyKind::no_hysteresis;
  if (s == "window_quantile") return PolicyKind::window_quantile;
  if (s == "batch_topk") return PolicyKind::batch_topk;
  if (s == "ewma") return PolicyKind::ewma;
  throw ConfigError("policies: unknown policy '" + s + "'");
}

inline bool is_engine_policy(PolicyKind k) noexcept {
  return k == PolicyKind::ours || k == PolicyKind::fixed_bw || k == PolicyKind::no_reflect ||
         k == PolicyKind::no_snapping || k == PolicyKind::no_hysteresis;
}

struct BaSpec {
  BAStreamProfile profile;
  double kappa = 0.05;                 ///< base escalation ratio (schedule drift/bursts applied on top)
  std::optional<double> kappa_std;     ///< escalation + standard ratio
  double quota_weight = 1.0;
};

struct BaselineSettings {
  std::size_t window_blocks = 2;  ///< intervals in the sliding-window quantile
  double gk_epsilon = 0.001;
  double ewma_gain = 0.5;
  double ewma_smoothing = 0.3;
  std::size_t day_intervals = 1;  ///< batch top-K decides over blocks of this many intervals
};

struct OutputSettings {
  bool decisions = true;
  bool routing = false;
  bool timing = false;               ///< record per-event update times (not reproducible)
  std::vector<std::size_t> snapshots;  ///< intervals at which density snapshots are written
};

struct Scenario {
  std::string name = "scenario";
  std::size_t intervals = 40;
  std::size_t warmup = 15;
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::string> policies{"ours"};
  EngineConfig engine;
  BaselineSettings baselines;
  double backlog_beta = 0.5;
  double review_factor = 1.0;        ///< R_t = review_factor * C_t
  std::optional<double> global_capacity;
  OutputSettings outputs;
  std::vector<BaSpec> bas;
  std::string hash;                  ///< of the canonical document
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ConfigError(path + "." + k + ": unknown key");
}

template <typename T>
T get(const json& j, const std::string& path, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + "." + key + ": wrong type");
  }
}

inline std::vector<BetaComponent> components(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a nonempty array of [alpha, beta, weight]");
  std::vector<BetaComponent> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& c = j[i];
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (!c.is_array() || c.size() != 3 || !c[0].is_number() || !c[1].is_number() || !c[2].is_number())
      throw ConfigError(p + ": expected [alpha, beta, weight]");
    BetaComponent b{c[0].get<double>(), c[1].get<double>(), c[2].get<double>()};
    if (!(b.alpha > 0.0 && b.beta > 0.0 && b.weight >= 0.0))
      throw ConfigError(p + ": Beta parameters must be positive and weights nonnegative");
    out.push_back(b);
  }
  return out;
}

inline void parse_engine(const json& j, EngineConfig& e) {
  const std::string p = "engine";
  check_keys(j, p,
             {"grid_size", "mode", "alpha", "window", "h_min", "h_max", "bandwidth_refresh", "selector", "adaptive",
              "reflect", "ladder", "eta", "max_drift", "tolerance", "hold_slack", "min_n_eff", "edge", "min_support",
              "tau", "persistence_steps", "persistence_window", "score_step"});
  auto& d = e.density;
  d.grid_size = get<std::size_t>(j, p, "grid_size", d.grid_size);
  const std::string mode = get<std::string>(j, p, "mode", "forgetting");
  if (mode == "forgetting")
    d.mode = ExponentialForgetting{get<double>(j, p, "alpha", 0.01)};
  else if (mode == "window")
    d.mode = SlidingWindow{get<std::size_t>(j, p, "window", 2000)};
  else
    throw ConfigError(p + ".mode: expected 'forgetting' or 'window'");
  d.h_min = get<double>(j, p, "h_min", d.h_min);
  d.h_max = get<double>(j, p, "h_max", d.h_max);
  d.bandwidth_refresh = get<std::size_t>(j, p, "bandwidth_refresh", d.bandwidth_refresh);
  const std::string sel = get<std::string>(j, p, "selector", "plug_in");
  if (sel == "plug_in")
    d.selector = BandwidthSelector::plug_in;
  else if (sel == "normal_reference")
    d.selector = BandwidthSelector::normal_reference;
  else
    throw ConfigError(p + ".selector: expected 'plug_in' or 'normal_reference'");
  d.adaptive = get<bool>(j, p, "adaptive", d.adaptive);
  d.reflect = get<bool>(j, p, "reflect", d.reflect);
  d.ladder = get<std::vector<double>>(j, p, "ladder", d.ladder);
  e.eta = get<double>(j, p, "eta", e.eta);
  e.max_drift = get<double>(j, p, "max_drift", e.max_drift);
  e.tolerance = get<double>(j, p, "tolerance", e.tolerance);
  e.hold_slack = get<double>(j, p, "hold_slack", e.hold_slack);
  e.min_n_eff = get<double>(j, p, "min_n_eff", e.min_n_eff);
  e.valleys.edge = get<double>(j, p, "edge", e.valleys.edge);
  e.valleys.min_support = get<double>(j, p, "min_support", e.valleys.min_support);
  e.valleys.tau = get<double>(j, p, "tau", e.valleys.tau);
  e.valleys.persistence_steps = get<std::size_t>(j, p, "persistence_steps", e.valleys.persistence_steps);
  e.valleys.window = get<std::size_t>(j, p, "persistence_window", e.valleys.window);
  e.score_step = get<double>(j, p, "score_step", e.score_step);
  try {
    e.validate();
  } catch (const ConfigError& err) {
    throw ConfigError(p + ": " + err.what());
  }
}

inline BaSpec parse_ba(const json& j, std::size_t index) {
  const std::string p = "bas[" + std::to_string(index) + "]";
  check_keys(j, p,
             {"name", "preset", "components", "rate", "kappa", "kappa_std", "quota_weight", "discretization", "drift",
              "seasonality", "regime_shifts", "capacity", "stress"});
  BaSpec b;
  auto& prof = b.profile;
  if (j.contains("preset")) {
    const std::string preset = get<std::string>(j, p, "preset", "");
    auto found = builtin_profile(preset);
    if (!found) throw ConfigError(p + ".preset: unknown preset '" + preset + "'");
    prof = *found;
  }
  if (j.contains("components")) prof.components = components(j.at("components"), p + ".components");
  if (prof.components.empty()) throw ConfigError(p + ": needs 'preset' or 'components'");
  prof.name = get<std::string>(j, p, "name", prof.name);
  prof.rate = get<std::size_t>(j, p, "rate", prof.rate);
  if (prof.rate == 0) throw ConfigError(p + ".rate: must be positive");
  b.kappa = get<double>(j, p, "kappa", b.kappa);
  if (!(b.kappa > 0.0 && b.kappa < 1.0)) throw ConfigError(p + ".kappa: must lie in (0,1)");
  if (j.contains("kappa_std")) {
    b.kappa_std = get<double>(j, p, "kappa_std", 0.0);
    if (!(*b.kappa_std >= b.kappa && *b.kappa_std < 1.0)) throw ConfigError(p + ".kappa_std: must lie in [kappa, 1)");
  }
  b.quota_weight = get<double>(j, p, "quota_weight", b.quota_weight);
  prof.discretization_step = get<double>(j, p, "discretization", prof.discretization_step);
  if (j.contains("drift")) {
    const auto& arr = j.at("drift");
    if (!arr.is_array()) throw ConfigError(p + ".drift: expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string q = p + ".drift[" + std::to_string(i) + "]";
      check_keys(arr[i], q, {"t", "components"});
      if (!arr[i].contains("components")) throw ConfigError(q + ".components: missing");
      prof.drift.push_back({get<std::size_t>(arr[i], q, "t", 0), components(arr[i].at("components"), q + ".components")});
    }
  }
  if (j.contains("seasonality")) {
    const auto& s = j.at("seasonality");
    const std::string q = p + ".seasonality";
    check_keys(s, q, {"amplitude", "period", "component"});
    prof.seasonality.amplitude = get<double>(s, q, "amplitude", 0.0);
    prof.seasonality.period = get<double>(s, q, "period", prof.seasonality.period);
    prof.seasonality.component = get<std::size_t>(s, q, "component", 0);
    if (!(prof.seasonality.period > 0.0)) throw ConfigError(q + ".period: must be positive");
  }
  if (j.contains("regime_shifts")) {
    const auto& arr = j.at("regime_shifts");
    if (!arr.is_array()) throw ConfigError(p + ".regime_shifts: expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string q = p + ".regime_shifts[" + std::to_string(i) + "]";
      check_keys(arr[i], q, {"t", "components"});
      if (!arr[i].contains("components")) throw ConfigError(q + ".components: missing");
      prof.regime_shifts.push_back(
          {get<std::size_t>(arr[i], q, "t", 0), components(arr[i].at("components"), q + ".components")});
    }
  }
  prof.capacity.kappa = b.kappa;
  if (j.contains("capacity")) {
    const auto& c = j.at("capacity");
    const std::string q = p + ".capacity";
    check_keys(c, q, {"drift_amplitude", "drift_period", "bursts"});
    prof.capacity.drift_amplitude = get<double>(c, q, "drift_amplitude", 0.0);
    prof.capacity.drift_period = get<double>(c, q, "drift_period", prof.capacity.drift_period);
    if (c.contains("bursts")) {
      const auto& arr = c.at("bursts");
      if (!arr.is_array()) throw ConfigError(q + ".bursts: expected an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string r = q + ".bursts[" + std::to_string(i) + "]";
        check_keys(arr[i], r, {"start", "duration", "factor"});
        CapacityBurst burst;
        burst.start = get<std::size_t>(arr[i], r, "start", 0);
        burst.duration = get<std::size_t>(arr[i], r, "duration", 1);
        if (arr[i].contains("factor")) burst.factor = get<double>(arr[i], r, "factor", 1.0);
        prof.capacity.bursts.push_back(burst);
      }
    }
  }
  if (j.contains("stress")) {
    const auto& arr = j.at("stress");
    if (!arr.is_array()) throw ConfigError(p + ".stress: expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string q = p + ".stress[" + std::to_string(i) + "]";
      check_keys(arr[i], q, {"kind", "start", "duration", "magnitude"});
      StressKind kind;
      try {
        kind = parse_stress_kind(get<std::string>(arr[i], q, "kind", ""));
      } catch (const ConfigError& err) {
        throw ConfigError(q + ".kind: " + err.what());
      }
      std::optional<double> mag;
      if (arr[i].contains("magnitude")) mag = get<double>(arr[i], q, "magnitude", 0.0);
      try {
        prof = stress_event(prof, kind, get<std::size_t>(arr[i], q, "start", 0),
                            get<std::size_t>(arr[i], q, "duration", 1), mag);
      } catch (const ConfigError& err) {
        throw ConfigError(q + ": " + err.what());
      }
    }
  }
  try {
    prof.validate();
  } catch (const ConfigError& err) {
    throw ConfigError(p + ": " + err.what());
  }
  return b;
}

// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

inline Scenario parse_scenario(const nlohmann::json& j) {
  using detail::get;
  detail::check_keys(j, "scenario",
                     {"name", "intervals", "warmup", "seeds", "policies", "engine", "baselines", "backlog",
                      "global_capacity", "outputs", "bas"});
  Scenario s;
  const std::string p = "scenario";
  s.name = get<std::string>(j, p, "name", s.name);
  s.intervals = get<std::size_t>(j, p, "intervals", s.intervals);
  s.warmup = get<std::size_t>(j, p, "warmup", s.warmup);
  if (s.intervals == 0 || s.warmup >= s.intervals) throw ConfigError("scenario.warmup: must be below intervals");
  s.seeds = get<std::vector<std::uint64_t>>(j, p, "seeds", s.seeds);
  s.policies = get<std::vector<std::string>>(j, p, "policies", s.policies);
  if (s.policies.empty()) throw ConfigError("scenario.policies: at least one policy required");
  for (const auto& name : s.policies) parse_policy(name);
  if (j.contains("engine")) detail::parse_engine(j.at("engine"), s.engine);
  if (j.contains("baselines")) {
    const auto& b = j.at("baselines");
    const std::string q = "baselines";
    detail::check_keys(b, q, {"window_blocks", "gk_epsilon", "ewma_gain", "ewma_smoothing", "day_intervals"});
    s.baselines.window_blocks = get<std::size_t>(b, q, "window_blocks", s.baselines.window_blocks);
    s.baselines.gk_epsilon = get<double>(b, q, "gk_epsilon", s.baselines.gk_epsilon);
    s.baselines.ewma_gain = get<double>(b, q, "ewma_gain", s.baselines.ewma_gain);
    s.baselines.ewma_smoothing = get<double>(b, q, "ewma_smoothing", s.baselines.ewma_smoothing);
    s.baselines.day_intervals = get<std::size_t>(b, q, "day_intervals", s.baselines.day_intervals);
    if (s.baselines.window_blocks == 0 || s.baselines.day_intervals == 0)
      throw ConfigError("baselines: block counts must be positive");
    if (!(s.baselines.gk_epsilon > 0.0 && s.baselines.gk_epsilon < 0.5))
      throw ConfigError("baselines.gk_epsilon: must lie in (0, 0.5)");
  }
  if (j.contains("backlog")) {
    const auto& b = j.at("backlog");
    detail::check_keys(b, "backlog", {"beta", "review_factor"});
    s.backlog_beta = get<double>(b, "backlog", "beta", s.backlog_beta);
    s.review_factor = get<double>(b, "backlog", "review_factor", s.review_factor);
    if (!(s.backlog_beta >= 0.0) || !(s.review_factor >= 0.0)) throw ConfigError("backlog: values must be nonnegative");
  }
  if (j.contains("global_capacity")) s.global_capacity = get<double>(j, p, "global_capacity", 0.0);
  if (j.contains("outputs")) {
    const auto& o = j.at("outputs");
    detail::check_keys(o, "outputs", {"decisions", "routing", "timing", "snapshots"});
    s.outputs.decisions = get<bool>(o, "outputs", "decisions", s.outputs.decisions);
    s.outputs.routing = get<bool>(o, "outputs", "routing", s.outputs.routing);
    s.outputs.timing = get<bool>(o, "outputs", "timing", s.outputs.timing);
    s.outputs.snapshots = get<std::vector<std::size_t>>(o, "outputs", "snapshots", {});
  }
  if (!j.contains("bas") || !j.at("bas").is_array() || j.at("bas").empty())
    throw ConfigError("scenario.bas: at least one BA required");
  std::set<std::string> names;
  for (std::size_t i = 0; i < j.at("bas").size(); ++i) {
    BaSpec b = detail::parse_ba(j.at("bas")[i], i);
    if (!names.insert(b.profile.name).second)
      throw ConfigError("bas[" + std::to_string(i) + "].name: duplicate BA name '" + b.profile.name + "'");
    s.bas.push_back(std::move(b));
  }
  if (s.global_capacity) {
    if (!(*s.global_capacity > 0.0)) throw ConfigError("scenario.global_capacity: must be positive");
    std::vector<double> weights;
    for (const auto& b : s.bas) weights.push_back(b.quota_weight);
    std::vector<double> quotas;
    try {
      quotas = allocate_quotas(*s.global_capacity, weights);
    } catch (const ConfigError& err) {
      throw ConfigError(std::string("bas.quota_weight: ") + err.what());
    }
    for (std::size_t i = 0; i < s.bas.size(); ++i) {
      const double k = quotas[i] / static_cast<double>(s.bas[i].profile.rate);
      if (!(k > 0.0 && k < 1.0)) throw ConfigError("global_capacity: quota for BA '" + s.bas[i].profile.name + "' is not below its rate");
      s.bas[i].kappa = s.bas[i].profile.capacity.kappa = k;
    }
  }
  s.hash = detail::fnv1a_hex(j.dump());
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("scenario: malformed JSON: " + std::string(e.what()));
  }
  return parse_scenario(j);
}

}  // namespace vthresh
