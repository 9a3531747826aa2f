#pragma once

// Valley (local-minimum) detection on a gridded density, with scale
// persistence across a bandwidth ladder, salience against the bracketing
// maxima, edge and minimum-support guards, and identity tracking over time.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vthresh/density.hpp"
#include "vthresh/grid.hpp"

namespace vthresh {

struct ValleyParams {
  double edge = 0.02;                ///< forbidden neighbourhood of 0 and 1
  double min_support = 5.0;          ///< expected cases required on each side
  double tau = 1.0;                  ///< salience threshold in standard-error units
  std::size_t persistence_steps = 3; ///< consecutive ladder steps incl. m = 1
  std::size_t window = 3;            ///< +/- grid points searched at each ladder step
};

struct Valley {
  double location = 0.0;
  double density_value = 0.0;
  double salience = 0.0;
  double span_lo = 1.0;  ///< smallest ladder multiplier at which the valley survives
  double span_hi = 1.0;
  double left_mass = 0.0;
  double right_mass = 0.0;
  std::size_t index = 0;  ///< grid index of the discrete minimum
};

struct ValleySet {
  std::vector<Valley> valleys;
  std::uint64_t source_snapshot_id = 0;

  std::vector<double> locations() const {
    std::vector<double> out;
    out.reserve(valleys.size());
    for (const auto& v : valleys) out.push_back(v.location);
    return out;
  }
  bool empty() const noexcept { return valleys.empty(); }
  std::size_t size() const noexcept { return valleys.size(); }
};

/// One audit row per detected candidate.
struct CandidateAudit {
  double location = 0.0;
  double density_value = 0.0;
  double salience = 0.0;
  double span_lo = 0.0;
  double span_hi = 0.0;
  bool accepted = false;
  std::string reject_reason;
};

struct Candidate {
  std::size_t index = 0;
  double location = 0.0;
};

/// Interior discrete minima: the first difference goes negative, then
/// (possibly through a flat stretch) positive, with a positive second
/// difference. Locations are refined by a parabola through the three points
/// around the minimum; flat bottoms report their midpoint.
inline std::vector<Candidate> detect_candidates(const Grid& grid, std::span<const double> f) {
  std::vector<Candidate> out;
  const std::size_t n = f.size();
  std::size_t j = 1;
  while (j + 1 < n) {
    if (!(f[j] < f[j - 1])) {
      ++j;
      continue;
    }
    std::size_t k = j;
    while (k + 1 < n && f[k + 1] == f[k]) ++k;
    if (k + 1 >= n) break;
    if (f[k + 1] > f[k]) {
      const std::size_t mid = (j + k) / 2;
      const double second = f[j - 1] - f[j] - f[k] + f[k + 1];
      if (second > 0.0) {
        double loc;
        if (j == k) {
          const double curv = f[j - 1] - 2.0 * f[j] + f[j + 1];
          const double offset = std::clamp(0.5 * (f[j - 1] - f[j + 1]) / curv, -0.5, 0.5);
          loc = grid.point(j) + offset * grid.spacing();
        } else {
          loc = 0.5 * (grid.point(j) + grid.point(k));
        }
        out.push_back({mid, loc});
      }
    }
    j = k + 1;
  }
  return out;
}

struct Persistence {
  bool accepted = false;
  double span_lo = 0.0;
  double span_hi = 0.0;
  std::size_t steps = 0;
};

namespace detail {

// Index of the minimum inside [c - w, c + w] if the density descends into and
// climbs out of that window (f' < 0 on the left, f' > 0 on the right).
inline std::optional<std::size_t> valley_in_window(std::span<const double> f, std::size_t c, std::size_t w) {
  if (f.size() < 3) return std::nullopt;
  const std::size_t lo = c > w ? c - w : 0;
  const std::size_t hi = std::min(c + w, f.size() - 1);
  std::size_t k = lo;
  for (std::size_t i = lo + 1; i <= hi; ++i)
    if (f[i] < f[k]) k = i;
  if (k == lo || k == hi) return std::nullopt;
  if (!(f[lo] > f[k] && f[hi] > f[k])) return std::nullopt;
  return k;
}

}  // namespace detail

/// SiZer-style scale check. `multipliers` must be ascending and contain 1.0;
/// `ladder[i]` is the density re-smoothed at multipliers[i]. The valley is
/// followed outward from m = 1, re-centring the search window at each step.
/// The run of surviving steps must reach min_steps - 1 steps above m = 1 (or
/// the top of the ladder): features that survive only at finer scales are
/// noise. Finer steps still count toward the run length and the span.
inline Persistence persistence_filter(std::size_t index, std::span<const double> multipliers,
                                      const std::vector<std::vector<double>>& ladder,
                                      std::size_t min_steps, std::size_t window = 3) {
  Persistence p;
  if (multipliers.empty() || ladder.size() != multipliers.size()) return p;
  const auto one = std::find(multipliers.begin(), multipliers.end(), 1.0);
  if (one == multipliers.end()) return p;
  const auto base = static_cast<std::size_t>(one - multipliers.begin());

  auto here = detail::valley_in_window(ladder[base], index, window);
  if (!here) return p;
  std::size_t lo = base, hi = base;
  for (std::size_t i = base + 1, c = *here; i < ladder.size(); ++i) {
    const auto k = detail::valley_in_window(ladder[i], c, window);
    if (!k) break;
    c = *k;
    hi = i;
  }
  for (std::size_t i = base, c = *here; i-- > 0;) {
    const auto k = detail::valley_in_window(ladder[i], c, window);
    if (!k) break;
    c = *k;
    lo = i;
  }
  p.steps = hi - lo + 1;
  p.span_lo = multipliers[lo];
  p.span_hi = multipliers[hi];
  const std::size_t need = std::max<std::size_t>(min_steps, 1);
  const std::size_t reach = std::min(base + need - 1, ladder.size() - 1);
  p.accepted = p.steps >= need && hi >= reach;
  return p;
}

/// min of the two drops from the bracketing maxima to the valley.
inline double salience(double left_max, double valley, double right_max) noexcept {
  return std::min(left_max - valley, right_max - valley);
}

/// Salience of the valley at grid index `index`, walking uphill to the nearest
/// maximum on each side (domain endpoints count). nullopt when either side
/// never rises above the valley.
inline std::optional<double> compute_salience(std::size_t index, std::span<const double> f) {
  if (index == 0 || index + 1 >= f.size()) return std::nullopt;
  std::size_t l = index;
  while (l > 0 && f[l - 1] >= f[l]) --l;
  std::size_t r = index;
  while (r + 1 < f.size() && f[r + 1] >= f[r]) ++r;
  if (!(f[l] > f[index]) || !(f[r] > f[index])) return std::nullopt;
  return salience(f[l], f[index], f[r]);
}

/// Local standard-error scale used to judge salience.
inline double salience_threshold(double tau, double density, double n_eff, double h) noexcept {
  if (!(n_eff > 0.0) || !(h > 0.0)) return std::numeric_limits<double>::infinity();
  return tau * std::sqrt(std::max(density, 0.0) / (n_eff * h));
}

/// Edge and minimum-support guards. Adjacent masses are measured to the
/// neighbouring entry of `locations` (or to the endpoint), so the outcome for
/// one candidate does not depend on which others survive. Returns one reject
/// reason per location; empty means retained.
inline std::vector<std::string> apply_guards(std::span<const double> locations, const TailMass& curve,
                                             double edge, double min_support, double n_eff,
                                             std::vector<std::pair<double, double>>* masses = nullptr) {
  std::vector<std::string> reasons(locations.size());
  if (masses) masses->assign(locations.size(), {0.0, 0.0});
  const double floor = n_eff > 0.0 ? min_support / n_eff : std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < locations.size(); ++i) {
    const double v = locations[i];
    const double left_edge = i == 0 ? 0.0 : locations[i - 1];
    const double right_edge = i + 1 == locations.size() ? 1.0 : locations[i + 1];
    const double left = curve(left_edge) - curve(v);
    const double right = curve(v) - curve(right_edge);
    if (masses) (*masses)[i] = {left, right};
    if (v < edge || v > 1.0 - edge)
      reasons[i] = "edge";
    else if (left < floor || right < floor)
      reasons[i] = "min_support";
  }
  return reasons;
}

struct ValleyReport {
  ValleySet set;
  std::vector<CandidateAudit> audit;
};

/// Full detection pipeline on one snapshot: candidates, salience, persistence,
/// guards, and minimum separation of two grid spacings.
inline ValleyReport detect_valleys(const DensitySnapshot& snap, const ValleyParams& params,
                                   std::uint64_t snapshot_id = 0) {
  ValleyReport report;
  report.set.source_snapshot_id = snapshot_id;
  const Grid& grid = snap.grid;
  const auto candidates = detect_candidates(grid, snap.f_hat);
  if (candidates.empty()) return report;

  const TailMass curve(grid, snap.f_hat);
  std::vector<double> locs;
  for (const auto& c : candidates) locs.push_back(c.location);
  std::vector<std::pair<double, double>> masses;
  const auto guard = apply_guards(locs, curve, params.edge, params.min_support, snap.n_eff, &masses);

  std::vector<Valley> kept;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    CandidateAudit row;
    row.location = c.location;
    row.density_value = curve.density(c.location);
    const auto sal = compute_salience(c.index, snap.f_hat);
    const Persistence per =
        persistence_filter(c.index, snap.multipliers, snap.ladder, params.persistence_steps, params.window);
    row.salience = sal.value_or(0.0);
    row.span_lo = per.span_lo;
    row.span_hi = per.span_hi;
    const double h = interpolate(grid, snap.h, c.location);
    if (!sal)
      row.reject_reason = "no_bracketing_max";
    else if (!(*sal > salience_threshold(params.tau, snap.f_hat[c.index], snap.n_eff, h)))
      row.reject_reason = "low_salience";
    else if (!per.accepted)
      row.reject_reason = "not_persistent";
    else if (!guard[i].empty())
      row.reject_reason = guard[i];
    row.accepted = row.reject_reason.empty();
    if (row.accepted) {
      Valley v;
      v.location = c.location;
      v.density_value = row.density_value;
      v.salience = row.salience;
      v.span_lo = per.span_lo;
      v.span_hi = per.span_hi;
      v.left_mass = masses[i].first;
      v.right_mass = masses[i].second;
      v.index = c.index;
      kept.push_back(v);
    }
    report.audit.push_back(std::move(row));
  }

  // Enforce pairwise separation >= 2 grid spacings, keeping the deeper valley.
  const double min_gap = 2.0 * grid.spacing();
  for (const auto& v : kept) {
    auto& out = report.set.valleys;
    if (!out.empty() && v.location - out.back().location < min_gap) {
      const bool replace = v.density_value < out.back().density_value;
      const double dropped = replace ? out.back().location : v.location;
      for (auto& row : report.audit)
        if (row.location == dropped) {
          row.accepted = false;
          row.reject_reason = "too_close";
        }
      if (replace) out.back() = v;
      continue;
    }
    out.push_back(v);
  }
  return report;
}

struct ValleyMatch {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  ///< (previous, current) indices
  std::vector<std::size_t> births;                         ///< unmatched current
  std::vector<std::size_t> deaths;                         ///< unmatched previous
};

/// Greedy nearest-neighbour matching by location under a drift limit; each
/// valley is matched at most once.
inline ValleyMatch match_valleys(std::span<const double> previous, std::span<const double> current,
                                 double max_drift) {
  struct Edge {
    double distance;
    std::size_t prev, curr;
  };
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < previous.size(); ++i)
    for (std::size_t j = 0; j < current.size(); ++j) {
      const double d = std::abs(previous[i] - current[j]);
      if (d <= max_drift) edges.push_back({d, i, j});
    }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.distance < b.distance; });
  std::vector<bool> used_prev(previous.size(), false), used_curr(current.size(), false);
  ValleyMatch m;
  for (const auto& e : edges) {
    if (used_prev[e.prev] || used_curr[e.curr]) continue;
    used_prev[e.prev] = used_curr[e.curr] = true;
    m.pairs.emplace_back(e.prev, e.curr);
  }
  std::sort(m.pairs.begin(), m.pairs.end());
  for (std::size_t j = 0; j < current.size(); ++j)
    if (!used_curr[j]) m.births.push_back(j);
  for (std::size_t i = 0; i < previous.size(); ++i)
    if (!used_prev[i]) m.deaths.push_back(i);
  return m;
}

inline ValleyMatch match_valleys(const ValleySet& previous, const ValleySet& current, double max_drift) {
  const auto p = previous.locations();
  const auto c = current.locations();
  return match_valleys(p, c, max_drift);
}

}  // namespace vthresh
