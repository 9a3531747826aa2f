#pragma once

// Capacity matching: tail-mass quantile inversion, valley snapping, within-band
// fine-tune, two-threshold pair selection, hysteresis gating, quota split.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vthresh/density.hpp"
#include "vthresh/error.hpp"

namespace vthresh {

struct CapacityTarget {
  double kappa_up = 0.05;               ///< Escalation tail ratio
  std::optional<double> kappa_up_std;   ///< Escalation + Standard ratio (two-cut mode)
  double tolerance = 0.1;               ///< allowed intake deviation, relative to the target
  double volume = 1.0;                  ///< expected cases per interval (N)

  void validate() const {
    if (!(kappa_up > 0.0 && kappa_up <= 1.0)) throw DomainError("kappa_up must lie in (0,1]");
    if (kappa_up_std && !(*kappa_up_std >= kappa_up && *kappa_up_std <= 1.0))
      throw DomainError("targets must satisfy kappa_up <= kappa_up_std <= 1");
    if (!(tolerance >= 0.0)) throw DomainError("tolerance must be nonnegative");
    if (!(volume > 0.0)) throw DomainError("volume must be positive");
  }
};

/// One deployed boundary and its within-band trim point.
struct Cut {
  double location = 0.0;
  double trim = 0.0;         ///< interior point that sets this interval's intake
  bool anchored = false;     ///< location is a detected valley
  double density = 0.0;      ///< f_hat at the cut
  double elasticity = 0.0;   ///< N * f_hat at the cut

  double fine_tune() const noexcept { return trim - location; }
};

/// Deployed cuts in increasing order: {c} or {c_std, c_up}.
struct DeployedCuts {
  std::vector<Cut> cuts;
  bool empty_standard = false;  ///< two targets collapsed to one cut

  bool empty() const noexcept { return cuts.empty(); }
  bool two_cut() const noexcept { return cuts.size() == 2; }
  const Cut& escalation() const { return cuts.back(); }

  std::vector<double> locations() const {
    std::vector<double> out;
    for (const auto& c : cuts) out.push_back(c.location);
    return out;
  }

  bool strictly_increasing() const noexcept {
    for (std::size_t i = 1; i < cuts.size(); ++i)
      if (!(cuts[i - 1].location < cuts[i].location)) return false;
    return true;
  }
};

/// Capacity-true cut t* with U(t*) = kappa.
inline double quantile_cut(const TailMass& curve, double kappa) { return curve.quantile(kappa); }

/// Moves c off a score atom to the nearest midpoint between atoms of a
/// discretized score scale; identity when step <= 0.
inline double avoid_knife_edge(double c, double step) noexcept {
  if (!(step > 0.0)) return c;
  const double k = std::round(c / step - 0.5);
  return std::clamp((k + 0.5) * step, 0.5 * step, 1.0 - 0.5 * step);
}

struct SnapResult {
  double location = 0.0;
  bool anchored = false;
};

/// argmin of f_hat over {valleys with U(v) >= kappa} and t*. Ties go to the
/// candidate nearest t*, then to the larger location.
inline SnapResult snap_single(double t_star, std::span<const double> valleys, const TailMass& curve,
                              double kappa) {
  SnapResult best{t_star, false};
  double best_f = curve.density(t_star);
  for (double v : valleys) {
    if (curve(v) < kappa) continue;
    const double f = curve.density(v);
    const double d = std::abs(v - t_star), best_d = std::abs(best.location - t_star);
    const bool better = f < best_f || (f == best_f && (d < best_d || (d == best_d && v > best.location)));
    if (better) {
      best = {v, true};
      best_f = f;
    }
  }
  return best;
}

/// Trim point t' >= cut with U(t') = kappa. Returns cut itself when the band
/// holds no more than the target.
inline double fine_tune(double cut, const TailMass& curve, double kappa) {
  if (curve(cut) <= kappa) return cut;
  return std::max(cut, curve.quantile(kappa));
}

/// Local intake sensitivity N * f_hat(c).
inline double elasticity(double volume, const TailMass& curve, double c) noexcept {
  return volume * curve.density(c);
}

struct PairResult {
  double c_std = 0.0;
  double c_up = 0.0;
  bool anchored_std = false;
  bool anchored_up = false;
  bool fallback = false;         ///< no feasible pair; quantile cuts returned
  bool empty_standard = false;   ///< kappa_up == kappa_up_std, single cut in c_up
  std::size_t ties = 0;          ///< pairs tied with the winner on f_hat sum
  double t_std = 0.0;            ///< t* for kappa_up_std
  double t_up = 0.0;             ///< t* for kappa_up
};

/// Two-threshold selection: minimize f(v1) + f(v2) over ordered pairs from
/// valleys plus both quantile cuts, subject to U(v2) >= kappa_up and
/// U(v1) >= kappa_up_std. Ties go to the highest pair.
inline PairResult select_pair(std::span<const double> valleys, const TailMass& curve,
                              const CapacityTarget& target) {
  if (!target.kappa_up_std) throw DomainError("select_pair needs both capacity targets");
  PairResult out;
  const double k_up = target.kappa_up, k_all = *target.kappa_up_std;
  out.t_up = quantile_cut(curve, k_up);
  out.t_std = k_all < 1.0 ? quantile_cut(curve, k_all) : 0.0;
  if (k_up == k_all) {
    const SnapResult s = snap_single(out.t_up, valleys, curve, k_up);
    out.c_std = out.c_up = s.location;
    out.anchored_std = out.anchored_up = s.anchored;
    out.empty_standard = true;
    return out;
  }
  struct Point {
    double x;
    bool valley;
  };
  std::vector<Point> pts;
  for (double v : valleys) pts.push_back({v, true});
  pts.push_back({out.t_std, false});
  pts.push_back({out.t_up, false});
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.x < b.x; });

  // Quantile cuts are feasible by construction; testing them through U would
  // drop them whenever the inversion rounds a hair past the target.
  auto feasible = [&](const Point& p, double k, double t) { return p.valley ? curve(p.x) >= k : p.x <= t; };
  bool found = false;
  double best = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!feasible(pts[i], k_all, out.t_std)) continue;
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      if (!(pts[i].x < pts[j].x) || !feasible(pts[j], k_up, out.t_up)) continue;
      const double sum = curve.density(pts[i].x) + curve.density(pts[j].x);
      const bool higher = pts[j].x > out.c_up || (pts[j].x == out.c_up && pts[i].x > out.c_std);
      if (!found || sum < best) {
        found = true;
        best = sum;
        out.ties = 0;
      } else if (sum == best) {
        ++out.ties;
        if (!higher) continue;
      } else {
        continue;
      }
      out.c_std = pts[i].x;
      out.c_up = pts[j].x;
      out.anchored_std = pts[i].valley;
      out.anchored_up = pts[j].valley;
    }
  }
  if (!found) {
    out.c_std = out.t_std;
    out.c_up = out.t_up;
    out.anchored_std = out.anchored_up = false;
    out.fallback = true;
  }
  return out;
}

/// Trim point of the Standard band [c_std, c_up) that brings the Standard
/// intake to (kappa_up_std - kappa_up).
inline double fine_tune_standard(double c_std, double c_up, const TailMass& curve, double kappa_up,
                                 double kappa_up_std) {
  const double want = curve(c_up) + (kappa_up_std - kappa_up);
  if (curve(c_std) <= want) return c_std;
  return std::clamp(curve.quantile(std::min(want, 1.0 - 1e-15)), c_std, c_up);
}

struct HysteresisState {
  std::optional<DeployedCuts> previous;
  double eta = 0.15;
};

/// Context for gating one cut.
struct GateContext {
  double t_star = 0.0;                 ///< unconstrained quantile for this cut's target
  std::span<const double> valleys;     ///< current admissible valleys
  double kappa = 0.0;                  ///< cumulative tail target for this cut
  double tolerance = 0.1;              ///< relative capacity tolerance
  double edge = 0.02;
  double min_mass = 0.0;               ///< minimum queue mass M_min / N
  double max_drift = 0.05;
};

struct GateDecision {
  bool move = false;
  std::string reason;
};

namespace detail {

inline std::optional<double> nearest(std::span<const double> xs, double x, double limit) {
  std::optional<double> best;
  for (double v : xs)
    if (std::abs(v - x) <= limit && (!best || std::abs(v - x) < std::abs(*best - x))) best = v;
  return best;
}

}  // namespace detail

/// Hysteresis rule for one cut: keep `previous` unless the proposal lowers
/// f_hat by a fraction eta, t* has crossed the midpoint toward the next valley,
/// or the previous cut now violates a guardrail.
inline GateDecision gate_cut(double previous, bool previous_anchored, double proposed, const TailMass& curve,
                             const GateContext& ctx, double eta) {
  if (proposed == previous) return {false, "unchanged"};
  if (previous < ctx.edge || previous > 1.0 - ctx.edge) return {true, "guardrail_edge"};
  const double mass = curve(previous);
  if (mass < ctx.kappa * (1.0 - ctx.tolerance)) return {true, "guardrail_capacity"};
  if (mass < ctx.min_mass) return {true, "guardrail_support"};
  if (curve.density(proposed) <= (1.0 - eta) * curve.density(previous)) return {true, "elasticity_gain"};
  if (previous_anchored) {
    auto anchor = detail::nearest(ctx.valleys, previous, ctx.max_drift);
    if (!anchor) anchor = detail::nearest(ctx.valleys, previous, std::numeric_limits<double>::infinity());
    if (!anchor) return {true, "valley_lost"};
    const bool up = proposed > previous;
    std::optional<double> next;
    for (double v : ctx.valleys) {
      if (up && v > *anchor && (!next || v < *next)) next = v;
      if (!up && v < *anchor && (!next || v > *next)) next = v;
    }
    const double mid = 0.5 * (*anchor + next.value_or(proposed));
    if (up ? ctx.t_star >= mid : ctx.t_star <= mid) return {true, "midpoint_crossed"};
  }
  return {false, "suppressed"};
}

struct GateResult {
  DeployedCuts cuts;
  std::vector<std::string> reasons;  ///< per cut
  std::vector<bool> moved;
};

/// Applies gate_cut to every cut. A change in the number of cuts, or a gated
/// result that is not strictly increasing, deploys the proposal as is.
inline GateResult hysteresis_gate(const HysteresisState& state, const DeployedCuts& proposed,
                                  std::span<const GateContext> contexts, const TailMass& curve) {
  GateResult out;
  if (!state.previous || state.previous->cuts.size() != proposed.cuts.size()) {
    out.cuts = proposed;
    out.reasons.assign(proposed.cuts.size(), "first_deployment");
    out.moved.assign(proposed.cuts.size(), true);
    return out;
  }
  out.cuts = proposed;
  for (std::size_t i = 0; i < proposed.cuts.size(); ++i) {
    const Cut& prev = state.previous->cuts[i];
    const GateDecision d = gate_cut(prev.location, prev.anchored, proposed.cuts[i].location, curve,
                                    contexts[i], state.eta);
    out.reasons.push_back(d.reason);
    out.moved.push_back(d.move);
    if (!d.move) {
      out.cuts.cuts[i].location = prev.location;
      out.cuts.cuts[i].anchored = prev.anchored;
    }
  }
  if (!out.cuts.strictly_increasing()) {
    out.cuts = proposed;
    for (std::size_t i = 0; i < out.reasons.size(); ++i) {
      out.reasons[i] = "order_violation";
      out.moved[i] = true;
    }
  }
  return out;
}

/// Splits a global capacity by fixed nonnegative weights.
inline std::vector<double> allocate_quotas(double total, std::span<const double> weights) {
  if (!(total > 0.0)) throw ConfigError("total capacity must be positive");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ConfigError("quota weights must be nonnegative");
    sum += w;
  }
  if (!(sum > 0.0)) throw ConfigError("quota weights must not all be zero");
  std::vector<double> out;
  for (double w : weights) out.push_back(total * w / sum);
  return out;
}

}  // namespace vthresh
