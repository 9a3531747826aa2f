#pragma once

// Per-stream policy loop: ingest scores into the density state, and on each
// refresh detect valleys, propose capacity-matched cuts, gate them through
// hysteresis and deploy, emitting an audit record.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vthresh/capacity.hpp"
#include "vthresh/density.hpp"
#include "vthresh/error.hpp"
#include "vthresh/router.hpp"
#include "vthresh/valleys.hpp"

namespace vthresh {

struct EngineConfig {
  DensityConfig density;
  ValleyParams valleys;
  double eta = 0.15;
  double max_drift = 0.05;
  double tolerance = 0.10;        ///< relative capacity tolerance (delta = tolerance * kappa * N)
  double hold_slack = 0.0;        ///< held cuts must keep U(c) >= kappa (1 - hold_slack)
  double min_n_eff = 200.0;       ///< below this, refreshes hold the previous cuts
  std::size_t refresh_period = 0; ///< events between refreshes; 0 = caller-driven
  double score_step = 0.0;        ///< known score discretization (0 = continuous)
  bool snapping = true;
  bool hysteresis = true;

  void validate() const {
    density.validate();
    if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("eta must lie in (0,1)");
    if (!(max_drift > 0.0)) throw ConfigError("max_drift must be positive");
    if (!(tolerance >= 0.0)) throw ConfigError("tolerance must be nonnegative");
    if (!(hold_slack >= 0.0 && hold_slack < 1.0)) throw ConfigError("hold_slack must lie in [0,1)");
    if (!(min_n_eff >= 1.0)) throw ConfigError("min_n_eff must be >= 1");
    if (!(valleys.edge >= 0.0 && valleys.edge < 0.5)) throw ConfigError("edge guard must lie in [0, 0.5)");
    if (!(valleys.min_support >= 0.0)) throw ConfigError("min_support must be nonnegative");
    if (!(valleys.tau >= 0.0)) throw ConfigError("salience tau must be nonnegative");
    if (valleys.persistence_steps < 1) throw ConfigError("persistence steps must be >= 1");
    if (!(score_step >= 0.0 && score_step < 1.0)) throw ConfigError("score_step must lie in [0,1)");
  }
};

/// Audit record of one refresh.
struct Decision {
  std::uint64_t refresh = 0;
  std::uint64_t events = 0;
  double n_eff = 0.0;
  double h0 = 0.0;
  bool hold = false;
  DeployedCuts cuts;                     ///< deployed after gating
  std::vector<double> t_star;            ///< per cut, ascending order like cuts
  std::vector<double> proposed;          ///< pre-gate proposal per cut
  std::vector<double> t_star_density;    ///< f_hat(t*) per cut
  std::vector<std::string> gate;         ///< hysteresis reason per cut
  std::vector<std::string> guardrails;   ///< guardrails that fired this refresh
  std::vector<CandidateAudit> candidates;
  std::vector<double> valleys;           ///< admissible valley locations
  std::vector<double> births;
  std::vector<double> deaths;
  std::size_t pair_ties = 0;
  bool pair_fallback = false;
};

inline nlohmann::json to_json(const Decision& d) {
  using nlohmann::json;
  json cuts = json::array();
  for (std::size_t i = 0; i < d.cuts.cuts.size(); ++i) {
    const Cut& c = d.cuts.cuts[i];
    json row{{"location", c.location},
             {"trim", c.trim},
             {"fine_tune", c.fine_tune()},
             {"anchored", c.anchored},
             {"density", c.density},
             {"elasticity", c.elasticity}};
    if (i < d.t_star.size()) {
      row["t_star"] = d.t_star[i];
      row["t_star_density"] = d.t_star_density[i];
    }
    if (i < d.proposed.size()) row["proposed"] = d.proposed[i];
    if (i < d.gate.size()) row["gate"] = d.gate[i];
    cuts.push_back(std::move(row));
  }
  json cands = json::array();
  for (const auto& c : d.candidates)
    cands.push_back({{"location", c.location},
                     {"density_value", c.density_value},
                     {"salience", c.salience},
                     {"span_lo", c.span_lo},
                     {"span_hi", c.span_hi},
                     {"accepted", c.accepted},
                     {"reject_reason", c.reject_reason}});
  return json{{"refresh", d.refresh},
              {"events", d.events},
              {"hold", d.hold},
              {"heartbeat", {{"n_eff", d.n_eff}, {"h0", d.h0}, {"valley_count", d.valleys.size()}}},
              {"cuts", cuts},
              {"empty_standard", d.cuts.empty_standard},
              {"pair_ties", d.pair_ties},
              {"pair_fallback", d.pair_fallback},
              {"guardrails", d.guardrails},
              {"valleys", d.valleys},
              {"births", d.births},
              {"deaths", d.deaths},
              {"candidates", cands}};
}

class Engine {
 public:
  explicit Engine(EngineConfig config) : config_(std::move(config)), density_((config_.validate(), config_.density)) {
    hysteresis_.eta = config_.eta;
  }

  /// Adds one score. Invalid scores are counted and leave the state unchanged.
  bool ingest(double score) { return density_.ingest(score); }

  /// True when an event-driven refresh is due.
  bool refresh_due() const noexcept {
    return config_.refresh_period > 0 && density_.event_count() >= last_refresh_events_ + config_.refresh_period;
  }

  Decision refresh(const CapacityTarget& target) {
    target.validate();
    Decision d;
    d.refresh = ++refreshes_;
    d.events = density_.event_count();
    d.n_eff = density_.n_eff();
    d.h0 = density_.profile().h0;
    last_refresh_events_ = d.events;

    if (d.n_eff < config_.min_n_eff) {
      d.hold = true;
      if (hysteresis_.previous) d.cuts = *hysteresis_.previous;
      d.guardrails.push_back("min_n_eff");
      return d;
    }

    const DensitySnapshot snap = density_.snapshot();
    const TailMass curve(snap.grid, snap.f_hat);
    ValleyReport report = detect_valleys(snap, config_.valleys, d.refresh);
    d.candidates = report.audit;
    const std::vector<double> found = report.set.locations();
    const ValleyMatch match = match_valleys(previous_valleys_, found, config_.max_drift);
    for (std::size_t j : match.births) d.births.push_back(found[j]);
    for (std::size_t i : match.deaths) d.deaths.push_back(previous_valleys_[i]);
    previous_valleys_ = found;
    d.valleys = found;
    const std::vector<double> admissible = config_.snapping ? found : std::vector<double>{};

    const double lo = config_.valleys.edge, hi = 1.0 - config_.valleys.edge;
    auto place = [&](double c, bool& clamped) {
      c = avoid_knife_edge(c, config_.score_step);
      const double kept = std::clamp(c, lo, hi);
      clamped = clamped || kept != c;
      return kept;
    };

    DeployedCuts proposal;
    std::vector<double> kappas;
    bool clamped = false;
    if (!target.kappa_up_std) {
      const double t_star = quantile_cut(curve, target.kappa_up);
      const SnapResult s = snap_single(t_star, admissible, curve, target.kappa_up);
      proposal.cuts.push_back(Cut{place(s.location, clamped), 0.0, s.anchored});
      d.t_star = {t_star};
      kappas = {target.kappa_up};
    } else {
      const PairResult p = select_pair(admissible, curve, target);
      d.pair_ties = p.ties;
      d.pair_fallback = p.fallback;
      if (p.empty_standard) {
        proposal.cuts.push_back(Cut{place(p.c_up, clamped), 0.0, p.anchored_up});
        proposal.empty_standard = true;
        d.t_star = {p.t_up};
        kappas = {target.kappa_up};
      } else {
        const double c_std = place(p.c_std, clamped);
        const double c_up = place(p.c_up, clamped);
        if (c_std < c_up) {
          proposal.cuts.push_back(Cut{c_std, 0.0, p.anchored_std});
          proposal.cuts.push_back(Cut{c_up, 0.0, p.anchored_up});
          d.t_star = {p.t_std, p.t_up};
          kappas = {*target.kappa_up_std, target.kappa_up};
        } else {
          proposal.cuts.push_back(Cut{c_up, 0.0, p.anchored_up});
          proposal.empty_standard = true;
          d.t_star = {p.t_up};
          kappas = {target.kappa_up};
          d.guardrails.push_back("standard_collapsed");
        }
      }
    }
    if (clamped) d.guardrails.push_back("edge_clamp");
    for (const auto& c : proposal.cuts) d.proposed.push_back(c.location);
    for (double t : d.t_star) d.t_star_density.push_back(curve.density(t));

    // Gate each cut against the previous deployment.
    std::vector<GateContext> contexts;
    for (std::size_t i = 0; i < proposal.cuts.size(); ++i) {
      GateContext ctx;
      ctx.t_star = d.t_star[i];
      ctx.valleys = admissible;
      ctx.kappa = kappas[i];
      // Fine-tune can only trim upward, so a held cut must still reach the target.
      ctx.tolerance = config_.hold_slack;
      ctx.edge = config_.valleys.edge;
      ctx.min_mass = snap.n_eff > 0.0 ? config_.valleys.min_support / snap.n_eff : 0.0;
      ctx.max_drift = config_.max_drift;
      contexts.push_back(ctx);
    }
    GateResult gated;
    if (config_.hysteresis) {
      gated = hysteresis_gate(hysteresis_, proposal, contexts, curve);
    } else {
      gated.cuts = proposal;
      gated.reasons.assign(proposal.cuts.size(), "hysteresis_off");
      gated.moved.assign(proposal.cuts.size(), true);
    }
    d.gate = gated.reasons;
    for (const auto& r : gated.reasons)
      if (r.rfind("guardrail_", 0) == 0) d.guardrails.push_back(r);

    // A held cut stays anchored only while a current valley is within max_drift.
    DeployedCuts deployed = gated.cuts;
    for (std::size_t i = 0; i < deployed.cuts.size(); ++i) {
      Cut& c = deployed.cuts[i];
      if (!gated.moved[i] && c.anchored) {
        bool near = false;
        for (double v : admissible) near = near || std::abs(v - c.location) <= config_.max_drift;
        c.anchored = near;
      }
    }

    // Within-band trim points under the current density.
    const double volume = target.volume;
    if (deployed.cuts.size() == 1) {
      Cut& c = deployed.cuts[0];
      c.trim = fine_tune(c.location, curve, target.kappa_up);
    } else {
      Cut& s = deployed.cuts[0];
      Cut& u = deployed.cuts[1];
      u.trim = fine_tune(u.location, curve, target.kappa_up);
      s.trim = fine_tune_standard(s.location, u.location, curve, target.kappa_up, *target.kappa_up_std);
    }
    for (auto& c : deployed.cuts) {
      c.density = curve.density(c.location);
      c.elasticity = elasticity(volume, curve, c.location);
    }
    if (!deployed.strictly_increasing()) throw Error("engine produced non-increasing cuts");
    for (const auto& c : deployed.cuts)
      if (c.location < lo || c.location > hi) throw Error("engine produced a cut inside the edge guard");

    hysteresis_.previous = deployed;
    d.cuts = std::move(deployed);
    return d;
  }

  const DeployedCuts* deployed() const noexcept { return hysteresis_.previous ? &*hysteresis_.previous : nullptr; }
  const StreamDensity& density() const noexcept { return density_; }
  const EngineConfig& config() const noexcept { return config_; }
  std::uint64_t refreshes() const noexcept { return refreshes_; }

 private:
  EngineConfig config_;
  StreamDensity density_;
  HysteresisState hysteresis_;
  std::vector<double> previous_valleys_;
  std::uint64_t refreshes_ = 0;
  std::uint64_t last_refresh_events_ = 0;
};

}  // namespace vthresh
