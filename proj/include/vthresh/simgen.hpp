#pragma once

// Deterministic synthetic score streams: Beta mixtures with drift keyframes,
// seasonal weight modulation, regime shifts, discretization and stress events,
// plus the capacity schedule and the backlog recursion.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "vthresh/error.hpp"

namespace vthresh {

struct BetaComponent {
  double alpha = 1.0;
  double beta = 1.0;
  double weight = 1.0;
};

inline double beta_pdf(double x, double a, double b) {
  if (x < 0.0 || x > 1.0) return 0.0;
  if ((x == 0.0 && a < 1.0) || (x == 1.0 && b < 1.0)) return std::numeric_limits<double>::infinity();
  if ((x == 0.0 && a > 1.0) || (x == 1.0 && b > 1.0)) return 0.0;
  const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  const double lx = x > 0.0 ? (a - 1.0) * std::log(x) : 0.0;
  const double l1x = x < 1.0 ? (b - 1.0) * std::log1p(-x) : 0.0;
  return std::exp(log_norm + lx + l1x);
}

/// Finite Beta mixture on [0,1] with analytic density and CDF.
struct Mixture {
  std::vector<BetaComponent> components;

  /// Weights rescaled to sum to one.
  Mixture normalized() const {
    Mixture m = *this;
    double sum = 0.0;
    for (const auto& c : m.components) sum += c.weight;
    if (!(sum > 0.0)) throw ConfigError("mixture weights must not all be zero");
    for (auto& c : m.components) c.weight /= sum;
    return m;
  }

  double pdf(double x) const {
    double f = 0.0;
    for (const auto& c : components)
      if (c.weight > 0.0) f += c.weight * beta_pdf(x, c.alpha, c.beta);
    return f;
  }

  double cdf(double x) const {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double F = 0.0;
    for (const auto& c : components)
      if (c.weight > 0.0) F += c.weight * boost::math::ibeta(c.alpha, c.beta, x);
    return F;
  }

  double tail(double x) const { return 1.0 - cdf(x); }

  /// Interior local minima of the density found by a sign scan of its
  /// differences on a uniform grid of `points` points.
  std::vector<double> interior_minima(std::size_t points = 4001) const {
    std::vector<double> f(points);
    const double dx = 1.0 / static_cast<double>(points - 1);
    for (std::size_t j = 0; j < points; ++j) f[j] = pdf(static_cast<double>(j) * dx);
    std::vector<double> out;
    for (std::size_t j = 1; j + 1 < points; ++j)
      if (f[j] < f[j - 1] && f[j] < f[j + 1]) out.push_back(static_cast<double>(j) * dx);
    return out;
  }
};

struct DriftKeyframe {
  std::size_t t = 0;
  std::vector<BetaComponent> components;
};

/// Sinusoidal modulation of one component's weight.
struct Seasonality {
  double amplitude = 0.0;
  double period = 288.0;
  std::size_t component = 0;
};

struct RegimeShift {
  std::size_t t = 0;
  std::vector<BetaComponent> components;
};

enum class StressKind { tail_explosion, valley_vanish, rounding_shift };

inline StressKind parse_stress_kind(const std::string& s) {
  if (s == "tail_explosion") return StressKind::tail_explosion;
  if (s == "valley_vanish") return StressKind::valley_vanish;
  if (s == "rounding_shift") return StressKind::rounding_shift;
  throw ConfigError("unknown stress kind: " + s);
}

inline std::string to_string(StressKind k) {
  switch (k) {
    case StressKind::tail_explosion:
      return "tail_explosion";
    case StressKind::valley_vanish:
      return "valley_vanish";
    case StressKind::rounding_shift:
      return "rounding_shift";
  }
  return "?";
}

struct StressEvent {
  StressKind kind = StressKind::tail_explosion;
  std::size_t start = 0;
  std::size_t duration = 0;
  double magnitude = 0.0;     ///< surge weight, or new discretization step
  std::size_t first = 0;      ///< valley_vanish: components merged
  std::size_t second = 1;

  bool active(std::size_t t) const noexcept { return t >= start && t < start + duration; }
};

struct CapacityBurst {
  std::size_t start = 0;
  std::size_t duration = 1;
  std::optional<double> factor;  ///< drawn from {0.5, 1.5} when absent
};

/// C_t = kappa_t * rate, with kappa_t = kappa (1 + a sin(2 pi t / period)) and bursts.
struct CapacitySchedule {
  double kappa = 0.05;
  double drift_amplitude = 0.0;
  double drift_period = 2016.0;
  std::vector<CapacityBurst> bursts;
};

struct BAStreamProfile {
  std::string name = "stream";
  std::vector<BetaComponent> components;
  std::vector<DriftKeyframe> drift;
  Seasonality seasonality;
  double discretization_step = 0.0;
  std::vector<RegimeShift> regime_shifts;
  std::size_t rate = 1000;
  CapacitySchedule capacity;
  std::vector<StressEvent> stress;
  std::uint64_t seed = 0;

  void validate() const {
    if (components.empty()) throw ConfigError("profile '" + name + "' has no components");
    auto check = [&](const std::vector<BetaComponent>& cs) {
      for (const auto& c : cs)
        if (!(c.alpha > 0.0 && c.beta > 0.0 && c.weight >= 0.0))
          throw ConfigError("profile '" + name + "': Beta parameters must be positive, weights nonnegative");
    };
    check(components);
    for (const auto& k : drift) check(k.components);
    for (const auto& r : regime_shifts) check(r.components);
    for (std::size_t i = 1; i < drift.size(); ++i)
      if (drift[i].components.size() != drift[0].components.size() || drift[i].t <= drift[i - 1].t)
        throw ConfigError("profile '" + name + "': drift keyframes need equal sizes and increasing times");
    if (!(discretization_step >= 0.0 && discretization_step < 1.0))
      throw ConfigError("profile '" + name + "': discretization step must lie in [0,1)");
    if (!(capacity.kappa > 0.0 && capacity.kappa < 1.0)) throw ConfigError("profile '" + name + "': kappa must lie in (0,1)");
  }
};

namespace detail {

inline double lerp(double a, double b, double w) noexcept { return a + w * (b - a); }

inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t t, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t >> 32),
                    static_cast<std::uint32_t>(salt), 0x5eedu};
  return std::mt19937_64(seq);
}

// Triangular progress of an event: 0 at start and end, 1 at its midpoint.
inline double event_progress(const StressEvent& e, std::size_t t) noexcept {
  if (!e.active(t) || e.duration == 0) return 0.0;
  const double u = (static_cast<double>(t - e.start) + 0.5) / static_cast<double>(e.duration);
  return 1.0 - std::abs(2.0 * u - 1.0);
}

}  // namespace detail

/// Round to the nearest multiple of `step` (identity when step <= 0).
inline double discretize(double x, double step) noexcept {
  if (!(step > 0.0)) return x;
  return std::clamp(std::round(x / step) * step, 0.0, 1.0);
}

/// Mixture in force at interval t (weights normalized). Precedence: latest
/// regime shift, else drift keyframes, else base components; then seasonality;
/// then active stress events.
inline Mixture mixture_at(const BAStreamProfile& p, std::size_t t) {
  Mixture m{p.components};
  const RegimeShift* shift = nullptr;
  for (const auto& r : p.regime_shifts)
    if (r.t <= t && (!shift || r.t >= shift->t)) shift = &r;
  if (shift) {
    m.components = shift->components;
  } else if (!p.drift.empty()) {
    if (t <= p.drift.front().t) {
      m.components = p.drift.front().components;
    } else if (t >= p.drift.back().t) {
      m.components = p.drift.back().components;
    } else {
      std::size_t i = 1;
      while (p.drift[i].t < t) ++i;
      const auto& a = p.drift[i - 1];
      const auto& b = p.drift[i];
      const double w = static_cast<double>(t - a.t) / static_cast<double>(b.t - a.t);
      m.components.clear();
      for (std::size_t k = 0; k < a.components.size(); ++k)
        m.components.push_back({detail::lerp(a.components[k].alpha, b.components[k].alpha, w),
                                detail::lerp(a.components[k].beta, b.components[k].beta, w),
                                detail::lerp(a.components[k].weight, b.components[k].weight, w)});
    }
  }
  if (p.seasonality.amplitude != 0.0 && p.seasonality.component < m.components.size()) {
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / p.seasonality.period;
    auto& w = m.components[p.seasonality.component].weight;
    w = std::max(0.0, w * (1.0 + p.seasonality.amplitude * std::sin(phase)));
  }
  m = m.normalized();
  for (const auto& e : p.stress) {
    if (!e.active(t)) continue;
    if (e.kind == StressKind::tail_explosion) {
      for (auto& c : m.components) c.weight *= 1.0 - e.magnitude;
      m.components.push_back({20.0, 2.0, e.magnitude});
    } else if (e.kind == StressKind::valley_vanish && e.first < m.components.size() &&
               e.second < m.components.size()) {
      auto& a = m.components[e.first];
      auto& b = m.components[e.second];
      const double mu_a = a.alpha / (a.alpha + a.beta), mu_b = b.alpha / (b.alpha + b.beta);
      const double target = 0.5 * (mu_a + mu_b);
      const double p_ = detail::event_progress(e, t);
      for (auto* c : {&a, &b}) {
        const double conc = c->alpha + c->beta;
        const double mu = c->alpha / conc;
        const double moved = detail::lerp(mu, target, p_);
        c->alpha = moved * conc;
        c->beta = (1.0 - moved) * conc;
      }
    }
  }
  return m.normalized();
}

inline double step_at(const BAStreamProfile& p, std::size_t t) noexcept {
  double step = p.discretization_step;
  for (const auto& e : p.stress)
    if (e.kind == StressKind::rounding_shift && e.active(t)) step = e.magnitude;
  return step;
}

/// Draws `rate` scores for interval t; a pure function of (profile, t, salt).
inline std::vector<double> generate_interval(const BAStreamProfile& p, std::size_t t, std::uint64_t salt = 0) {
  const Mixture m = mixture_at(p, t);
  const double step = step_at(p, t);
  auto rng = detail::stream_rng(p.seed, t, salt);
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& c : m.components) cumulative.push_back(acc += c.weight);
  std::uniform_real_distribution<double> pick(0.0, 1.0);
  std::vector<double> out;
  out.reserve(p.rate);
  for (std::size_t i = 0; i < p.rate; ++i) {
    const double u = pick(rng) * acc;
    const auto k = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    const auto& c = m.components[std::min(k, m.components.size() - 1)];
    std::gamma_distribution<double> ga(c.alpha, 1.0), gb(c.beta, 1.0);
    const double x = ga(rng), y = gb(rng);
    out.push_back(discretize(x / (x + y), step));
  }
  return out;
}

/// Target intake ratio at interval t (slow drift and bursts applied).
inline double kappa_at(const BAStreamProfile& p, std::size_t t) {
  const auto& cs = p.capacity;
  double k = cs.kappa;
  if (cs.drift_amplitude != 0.0)
    k *= 1.0 + cs.drift_amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / cs.drift_period);
  for (std::size_t i = 0; i < cs.bursts.size(); ++i) {
    const auto& b = cs.bursts[i];
    if (t < b.start || t >= b.start + b.duration) continue;
    double factor = 0.0;
    if (b.factor) {
      factor = *b.factor;
    } else {
      auto rng = detail::stream_rng(p.seed, b.start, 0xB0057 + i);
      factor = (rng() & 1u) ? 1.5 : 0.5;
    }
    k *= factor;
  }
  return std::clamp(k, 1e-6, 0.999);
}

inline double capacity_at(const BAStreamProfile& p, std::size_t t) {
  return kappa_at(p, t) * static_cast<double>(p.rate);
}

/// Adds a stress event of the given kind; the profile reverts after start + duration.
inline BAStreamProfile stress_event(BAStreamProfile p, StressKind kind, std::size_t start, std::size_t duration,
                                    std::optional<double> magnitude = std::nullopt) {
  StressEvent e;
  e.kind = kind;
  e.start = start;
  e.duration = duration;
  switch (kind) {
    case StressKind::tail_explosion:
      e.magnitude = magnitude.value_or(0.3);
      if (!(e.magnitude > 0.0 && e.magnitude < 1.0)) throw ConfigError("tail_explosion weight must lie in (0,1)");
      break;
    case StressKind::rounding_shift:
      e.magnitude = magnitude.value_or(0.05);
      if (!(e.magnitude > 0.0 && e.magnitude < 1.0)) throw ConfigError("rounding_shift step must lie in (0,1)");
      break;
    case StressKind::valley_vanish: {
      // Merge the lowest-mean and highest-mean components.
      const auto& cs = p.components;
      std::size_t lo = 0, hi = 0;
      for (std::size_t i = 0; i < cs.size(); ++i) {
        const double mu = cs[i].alpha / (cs[i].alpha + cs[i].beta);
        if (mu < cs[lo].alpha / (cs[lo].alpha + cs[lo].beta)) lo = i;
        if (mu > cs[hi].alpha / (cs[hi].alpha + cs[hi].beta)) hi = i;
      }
      e.first = lo;
      e.second = hi;
      break;
    }
  }
  p.stress.push_back(e);
  return p;
}

/// The three preset shapes: unimodal skewed, bimodal with a valley at 0.5, and
/// trimodal with a crowded upper tail.
inline std::array<BAStreamProfile, 3> builtin_profiles() {
  std::array<BAStreamProfile, 3> out;
  out[0].name = "unimodal";
  out[0].components = {{2.0, 5.0, 1.0}};
  out[1].name = "bimodal";
  out[1].components = {{2.0, 8.0, 0.5}, {8.0, 2.0, 0.5}};
  out[2].name = "trimodal";
  out[2].components = {{2.0, 9.0, 0.55}, {14.0, 10.0, 0.30}, {45.0, 4.0, 0.15}};
  for (std::size_t i = 0; i < out.size(); ++i) out[i].seed = 1000 + i;
  return out;
}

inline std::optional<BAStreamProfile> builtin_profile(const std::string& name) {
  for (auto& p : builtin_profiles())
    if (p.name == name) return p;
  return std::nullopt;
}

struct BacklogState {
  double backlog = 0.0;
  double breach_threshold = 0.0;  ///< beta * C
  bool breached = false;
};

/// B_t = max(0, B_{t-1} + A_t - R_t); also flags B_t > breach_threshold.
inline BacklogState backlog_step(BacklogState state, double arrivals, double review) {
  if (!(arrivals >= 0.0) || !(review >= 0.0)) throw DomainError("backlog inputs must be nonnegative");
  state.backlog = std::max(0.0, state.backlog + arrivals - review);
  state.breached = state.backlog > state.breach_threshold;
  return state;
}

}  // namespace vthresh
