#pragma once

// Online adaptive kernel density estimation on a fixed grid over [0,1].
//
// Every arriving score contributes one reflected Epanechnikov stencil
//   k(x) = K_h(x - s) + K_h(x + s) + K_h(x - (2 - s))
// evaluated with the per-grid-point bandwidth h(x_j) of the current adaptive
// profile. The stencil is normalized to unit trapezoidal mass on the grid, so
// both the exponential-forgetting recursion
//   f_t = (1 - alpha) f_{t-1} + alpha k_t
// and the sliding-window average conserve mass exactly (up to rounding).
//
// The bandwidth profile follows Abramson's square-root law on a fixed-bandwidth
// pilot: h(x) = clip(h0 sqrt(g / pilot(x)), h_min, h_max), g the geometric mean
// of the pilot. It is refreshed on an event-count cadence, not per event.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vthresh/error.hpp"
#include "vthresh/grid.hpp"
#include "vthresh/kernel.hpp"

namespace vthresh {

struct SlidingWindow {
  std::size_t width = 2000;
};

struct ExponentialForgetting {
  double alpha = 0.01;
};

using EstimatorMode = std::variant<SlidingWindow, ExponentialForgetting>;

inline void validate_mode(const EstimatorMode& mode) {
  if (const auto* w = std::get_if<SlidingWindow>(&mode)) {
    if (w->width < 50) throw ConfigError("window width must be >= 50, got " + std::to_string(w->width));
  } else {
    const double a = std::get<ExponentialForgetting>(mode).alpha;
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("forgetting factor must lie in (0,1), got " + std::to_string(a));
  }
}

inline bool is_windowed(const EstimatorMode& mode) noexcept {
  return std::holds_alternative<SlidingWindow>(mode);
}

/// Floor applied to pilot values before logs and ratios.
inline constexpr double kPilotFloor = 1e-4;

/// Epanechnikov normal-scale AMISE constant (40 sqrt(pi))^(1/5).
inline const double kNormalScaleConstant = std::pow(40.0 * std::sqrt(std::numbers::pi), 0.2);

struct BandwidthProfile {
  double h0 = 0.0;
  std::vector<double> per_point;
  double h_min = 0.0;
  double h_max = 0.0;
  double geo_mean = 1.0;

  // Running max of x_j + h_j and running min (from the right) of x_j - h_j;
  // they bound the grid points a score's stencil can reach.
  std::vector<double> reach_right;
  std::vector<double> reach_left;
  std::vector<double> inv_h;

  double widest() const noexcept {
    return per_point.empty() ? 0.0 : *std::max_element(per_point.begin(), per_point.end());
  }

  /// Rebuilds the reach envelopes; call after editing per_point.
  void index(const Grid& grid) {
    const std::size_t n = per_point.size();
    reach_right.resize(n);
    reach_left.resize(n);
    inv_h.resize(n);
    for (std::size_t j = 0; j < n; ++j) inv_h[j] = 1.0 / per_point[j];
    double run = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) reach_right[j] = run = std::max(run, grid.point(j) + per_point[j]);
    run = std::numeric_limits<double>::infinity();
    for (std::size_t j = n; j-- > 0;) reach_left[j] = run = std::min(run, grid.point(j) - per_point[j]);
  }
};

using ProfileHandle = std::shared_ptr<const BandwidthProfile>;

inline BandwidthProfile constant_profile(const Grid& grid, double h, double h_min, double h_max) {
  BandwidthProfile p;
  p.h0 = h;
  p.per_point.assign(grid.size(), h);
  p.h_min = h_min;
  p.h_max = h_max;
  p.index(grid);
  return p;
}

/// exp of the trapezoidal integral of log(max(pilot, floor)) over [0,1].
inline double geometric_mean(const Grid& grid, std::span<const double> pilot,
                             double floor = kPilotFloor) {
  std::vector<double> logs(pilot.size());
  std::transform(pilot.begin(), pilot.end(), logs.begin(),
                 [floor](double v) { return std::log(std::max(v, floor)); });
  return std::exp(trapezoid(logs, grid.spacing()));
}

/// Abramson square-root-law bandwidth profile from a pilot density.
inline BandwidthProfile abramson_profile(const Grid& grid, std::span<const double> pilot, double h0,
                                         double h_min, double h_max, double floor = kPilotFloor) {
  if (!(h0 > 0.0)) throw InvalidBandwidth("h0 must be positive");
  BandwidthProfile p;
  p.h0 = h0;
  p.h_min = h_min;
  p.h_max = h_max;
  p.geo_mean = geometric_mean(grid, pilot, floor);
  p.per_point.resize(pilot.size());
  for (std::size_t j = 0; j < pilot.size(); ++j) {
    const double h = h0 * std::sqrt(p.geo_mean / std::max(pilot[j], floor));
    p.per_point[j] = std::clamp(h, h_min, h_max);
  }
  p.index(grid);
  return p;
}

/// Normal-reference global bandwidth for the Epanechnikov kernel, before clipping.
/// The scale is capped at 0.5, the largest standard deviation on [0,1].
inline double h0_normal_reference(double n_eff, double sample_std) {
  if (!(n_eff >= 1.0)) throw InsufficientData("normal-reference bandwidth needs n_eff >= 1");
  return kNormalScaleConstant * std::min(sample_std, 0.5) * std::pow(n_eff, -0.2);
}

namespace detail {

inline double hermite_density(int order, double x) noexcept {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  const double x2 = x * x;
  if (order == 4) return (x2 * x2 - 6.0 * x2 + 3.0) * phi;
  return (x2 * x2 * x2 - 15.0 * x2 * x2 + 45.0 * x2 - 15.0) * phi;  // order 6
}

// Binned estimate of psi_r = int f^(r) f with a Gaussian kernel at bandwidth g.
inline double binned_psi(int order, double g, std::span<const double> lag_sums, double delta, double n) {
  double sum = hermite_density(order, 0.0) * lag_sums[0];
  for (std::size_t d = 1; d < lag_sums.size(); ++d) {
    const double u = static_cast<double>(d) * delta / g;
    if (u > 12.0) break;
    sum += 2.0 * hermite_density(order, u) * lag_sums[d];
  }
  return sum / (n * n * std::pow(g, order + 1));
}

inline double robust_scale(std::vector<double> xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  std::sort(xs.begin(), xs.end());
  auto q = [&](double p) {
    const double pos = p * (n - 1.0);
    const auto i = static_cast<std::size_t>(pos);
    const double w = pos - static_cast<double>(i);
    return i + 1 < xs.size() ? xs[i] * (1.0 - w) + xs[i + 1] * w : xs[i];
  };
  const double iqr = (q(0.75) - q(0.25)) / 1.349;
  return iqr > 0.0 ? std::min(sd, iqr) : sd;
}

}  // namespace detail

namespace detail {

// Two-stage direct plug-in on linearly binned counts (summing to n) with bin
// width delta and scale estimate sigma.
inline double sheather_jones_binned(std::span<const double> counts, double delta, double n, double sigma) {
  if (!(sigma > 0.0)) throw InsufficientData("Sheather-Jones needs a nondegenerate sample");
  const std::size_t bins = counts.size();
  std::vector<double> lag_sums(bins, 0.0);
  for (std::size_t d = 0; d < bins; ++d)
    for (std::size_t k = 0; k + d < bins; ++k) lag_sums[d] += counts[k] * counts[k + d];

  const double root2pi = std::sqrt(2.0 * std::numbers::pi);
  const double psi8 = 105.0 / (32.0 * std::sqrt(std::numbers::pi) * std::pow(sigma, 9));
  const double g1 = std::pow(30.0 / (root2pi * psi8 * n), 1.0 / 9.0);
  const double psi6 = binned_psi(6, g1, lag_sums, delta, n);
  if (!(psi6 < 0.0)) throw InsufficientData("Sheather-Jones: nonnegative psi6 estimate");
  const double g2 = std::pow(6.0 / (root2pi * -psi6 * n), 1.0 / 7.0);
  const double psi4 = binned_psi(4, g2, lag_sums, delta, n);
  if (!(psi4 > 0.0)) throw InsufficientData("Sheather-Jones: nonpositive psi4 estimate");
  // R(K) / mu2(K)^2 = (3/5) / (1/5)^2 = 15 for the Epanechnikov kernel.
  return std::pow(15.0 / (psi4 * n), 0.2);
}

}  // namespace detail

/// Two-stage direct plug-in (Sheather-Jones) bandwidth for the Epanechnikov kernel,
/// before clipping. Functionals are estimated with Gaussian pilots on linearly
/// binned data.
inline double h0_sheather_jones(std::span<const double> scores) {
  constexpr std::size_t kMinScores = 100;
  constexpr std::size_t kBins = 401;
  if (scores.size() < kMinScores)
    throw InsufficientData("Sheather-Jones needs at least 100 scores, got " + std::to_string(scores.size()));
  const double n = static_cast<double>(scores.size());
  const double sigma = detail::robust_scale({scores.begin(), scores.end()});
  if (!(sigma > 0.0)) throw InsufficientData("Sheather-Jones needs a nondegenerate sample");

  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it, hi = *hi_it;
  const double delta = (hi - lo) / static_cast<double>(kBins - 1);
  std::vector<double> counts(kBins, 0.0);
  for (double s : scores) {
    const double pos = (s - lo) / delta;
    const auto i = std::min(static_cast<std::size_t>(pos), kBins - 2);
    const double w = pos - static_cast<double>(i);
    counts[i] += 1.0 - w;
    counts[i + 1] += w;
  }
  return detail::sheather_jones_binned(counts, delta, n, sigma);
}

/// The same plug-in applied to a gridded density standing in for n_eff
/// observations (grid masses act as bin counts). Used when raw scores are
/// not retained.
inline double h0_sheather_jones_grid(const Grid& grid, std::span<const double> values, double n_eff) {
  if (!(n_eff >= 100.0)) throw InsufficientData("Sheather-Jones needs n_eff >= 100");
  const std::size_t g = grid.size();
  const double dx = grid.spacing();
  std::vector<double> mass(g);
  double total = 0.0;
  for (std::size_t j = 0; j < g; ++j) {
    mass[j] = std::max(values[j], 0.0) * dx * ((j == 0 || j + 1 == g) ? 0.5 : 1.0);
    total += mass[j];
  }
  if (!(total > 0.0)) throw InsufficientData("Sheather-Jones: empty density");
  double mean = 0.0, var = 0.0;
  for (std::size_t j = 0; j < g; ++j) mean += mass[j] * grid.point(j);
  mean /= total;
  for (std::size_t j = 0; j < g; ++j) var += mass[j] * (grid.point(j) - mean) * (grid.point(j) - mean);
  var /= total;
  // Interquartile range from the cumulative grid mass.
  auto quantile = [&](double p) {
    double acc = 0.0;
    for (std::size_t j = 0; j < g; ++j) {
      acc += mass[j] / total;
      if (acc >= p) return grid.point(j);
    }
    return 1.0;
  };
  const double iqr = (quantile(0.75) - quantile(0.25)) / 1.349;
  const double sd = std::sqrt(var);
  const double sigma = iqr > 0.0 ? std::min(sd, iqr) : sd;
  // Rebin fine grids so the pairwise lag sums stay cheap.
  constexpr std::size_t kBins = 257;
  std::vector<double> counts(std::min(g, kBins), 0.0);
  const double delta = 1.0 / static_cast<double>(counts.size() - 1);
  for (std::size_t j = 0; j < g; ++j) {
    const double pos = grid.point(j) / delta;
    const auto i = std::min(static_cast<std::size_t>(pos), counts.size() - 2);
    const double w = pos - static_cast<double>(i);
    counts[i] += (1.0 - w) * mass[j] * n_eff / total;
    counts[i + 1] += w * mass[j] * n_eff / total;
  }
  return detail::sheather_jones_binned(counts, delta, n_eff, sigma);
}

namespace detail {

// Branchless searches over a sorted array; the data-dependent branches of
// std::lower_bound mispredict on nearly every step here.
inline std::size_t count_below(const double* a, std::size_t n, double x) noexcept {
  if (n == 0) return 0;
  const double* base = a;
  while (n > 1) {
    const std::size_t half = n / 2;
    base += static_cast<std::size_t>(base[half - 1] < x) * half;
    n -= half;
  }
  return static_cast<std::size_t>(base - a) + (*base < x ? 1 : 0);
}

inline std::size_t count_not_above(const double* a, std::size_t n, double x) noexcept {
  if (n == 0) return 0;
  const double* base = a;
  while (n > 1) {
    const std::size_t half = n / 2;
    base += static_cast<std::size_t>(base[half - 1] <= x) * half;
    n -= half;
  }
  return static_cast<std::size_t>(base - a) + (*base <= x ? 1 : 0);
}

}  // namespace detail

/// Index range [lo, hi] of grid points touched by one stencil.
struct StencilRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

struct RawStencil {
  StencilRange range;
  double scale = 1.0;  ///< multiply out[lo..hi] by this to get unit mass
};

/// Fills out[lo..hi] with the unnormalized stencil for `score` and returns the
/// factor that brings it to unit trapezoidal mass.
inline RawStencil fill_stencil_raw(const Grid& grid, double score, const BandwidthProfile& profile, bool reflect,
                                   std::span<double> out) {
  StencilRange r;
  const std::size_t last = grid.size() - 1;
  if (profile.reach_right.size() == grid.size()) {
    // Any point with a nonzero direct or mirrored term has x + h >= s and x - h <= s.
    const auto& rr = profile.reach_right;
    const auto& rl = profile.reach_left;
    r.lo = detail::count_below(rr.data(), rr.size(), score);
    r.hi = detail::count_not_above(rl.data(), rl.size(), score);
    r.lo = std::min(r.lo, last);
    r.hi = r.hi == 0 ? 0 : r.hi - 1;
    if (r.hi < r.lo) r.hi = r.lo;
  } else {
    const double widest = profile.widest();
    r.lo = grid.floor_index(std::max(0.0, score - widest));
    r.hi = grid.ceil_index(std::min(1.0, score + widest));
  }
  const auto& h = profile.per_point;
  double mass = 0.0;
  if (profile.inv_h.size() == grid.size()) {
    // Same sum as detail::reflected with the divisions hoisted out.
    const double* inv = profile.inv_h.data();
    const double dx = grid.spacing();
    for (std::size_t j = r.lo; j <= r.hi; ++j) {
      const double x = j == last ? 1.0 : static_cast<double>(j) * dx;
      const double ih = inv[j];
      const double u = (x - score) * ih;
      double k = std::max(0.0, 1.0 - u * u);
      if (reflect) {
        // Both mirror arguments are nonnegative, so clipping 1 - a^2 at 0 matches a < 1.
        const double a = (x + score) * ih;
        const double b = (2.0 - score - x) * ih;
        k += std::max(0.0, 1.0 - a * a) + std::max(0.0, 1.0 - b * b);
      }
      k *= 0.75 * ih;
      out[j] = k;
      mass += k;
    }
    if (r.lo == 0) mass -= 0.5 * out[0];
    if (r.hi == last) mass -= 0.5 * out[last];
  } else {
    for (std::size_t j = r.lo; j <= r.hi; ++j) {
      const double x = grid.point(j);
      const double k = reflect ? detail::reflected(x, score, h[j]) : detail::scaled_kernel(x, score, h[j]);
      out[j] = k;
      mass += (j == 0 || j == last) ? 0.5 * k : k;
    }
  }
  mass *= grid.spacing();
  if (mass > 0.0) return {r, 1.0 / mass};
  // Bandwidth below the grid resolution: fall back to linear binning onto the
  // two neighbouring grid points.
  for (std::size_t j = r.lo; j <= r.hi; ++j) out[j] = 0.0;
  const std::size_t j = grid.cell(score);
  const double w = (score - grid.point(j)) / grid.spacing();
  const double wl = (j == 0 ? 0.5 : 1.0), wr = (j + 1 == last ? 0.5 : 1.0);
  const double m = ((1.0 - w) * wl + w * wr) * grid.spacing();
  r.lo = std::min(r.lo, j);
  r.hi = std::max(r.hi, j + 1);
  out[j] = (1.0 - w) / m;
  out[j + 1] = w / m;
  return {r, 1.0};
}

/// Fills out[lo..hi] with the stencil for `score` normalized to unit trapezoidal
/// mass on the grid. With reflect = false the mirror terms are dropped and the
/// direct kernel is renormalized over [0,1]. Entries outside the range are untouched.
inline StencilRange fill_stencil(const Grid& grid, double score, const BandwidthProfile& profile,
                                 bool reflect, std::span<double> out) {
  const RawStencil raw = fill_stencil_raw(grid, score, profile, reflect, out);
  if (raw.scale != 1.0)
    for (std::size_t j = raw.range.lo; j <= raw.range.hi; ++j) out[j] *= raw.scale;
  return raw.range;
}

/// Density state on a fixed grid, updated one score at a time.
///
/// Forgetting mode keeps values = scale * acc so that the (1 - alpha) decay is a
/// scalar update; only the stencil support is written per event.
class OnlineDensity {
 public:
  OnlineDensity(Grid grid, EstimatorMode mode, bool reflect = true)
      : grid_(grid), mode_(mode), reflect_(reflect), stencil_(grid.size(), 0.0) {
    validate_mode(mode_);
    acc_.assign(grid_.size(), is_windowed(mode_) ? 0.0 : 1.0);
  }

  /// Adds one score using `profile` for its stencil. Scores outside [0,1] throw
  /// DomainError and leave the state unchanged.
  void add(double score, const ProfileHandle& profile) {
    if (!(score >= 0.0 && score <= 1.0)) throw DomainError("score outside [0,1]: " + std::to_string(score));
    if (!profile || profile->per_point.size() != grid_.size())
      throw ConfigError("bandwidth profile does not match grid");
    ++events_;
    if (is_windowed(mode_))
      add_windowed(score, profile);
    else
      add_forgetting(score, *profile);
  }

  double value(std::size_t j) const noexcept {
    if (is_windowed(mode_)) return window_.empty() ? 1.0 : acc_[j] / static_cast<double>(window_.size());
    return scale_ * acc_[j];
  }

  std::vector<double> values() const {
    std::vector<double> v(grid_.size());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = value(j);
    return v;
  }

  double n_eff() const noexcept {
    if (const auto* w = std::get_if<SlidingWindow>(&mode_))
      return static_cast<double>(std::min<std::size_t>(window_.size(), w->width));
    const double cap = 1.0 / std::get<ExponentialForgetting>(mode_).alpha;
    return std::min(static_cast<double>(events_), cap);
  }

  std::vector<double> window_scores() const {
    std::vector<double> out;
    out.reserve(window_.size());
    for (const auto& r : window_) out.push_back(r.score);
    return out;
  }

  const Grid& grid() const noexcept { return grid_; }
  const EstimatorMode& mode() const noexcept { return mode_; }
  bool reflect() const noexcept { return reflect_; }
  std::uint64_t event_count() const noexcept { return events_; }
  /// Number of grid-point writes performed so far (complexity accounting).
  std::uint64_t grid_touches() const noexcept { return touches_; }

 private:
  struct Retained {
    double score;
    ProfileHandle profile;
  };

  void add_forgetting(double score, const BandwidthProfile& profile) {
    const double alpha = std::get<ExponentialForgetting>(mode_).alpha;
    scale_ *= 1.0 - alpha;
    const auto [r, norm] = fill_stencil_raw(grid_, score, profile, reflect_, stencil_);
    const double w = alpha / scale_ * norm;
    for (std::size_t j = r.lo; j <= r.hi; ++j) acc_[j] += w * stencil_[j];
    touches_ += r.hi - r.lo + 1;
    if (scale_ < 1e-30) {
      for (double& a : acc_) a *= scale_;
      scale_ = 1.0;
      touches_ += acc_.size();
    }
  }

  void add_windowed(double score, const ProfileHandle& profile) {
    const std::size_t width = std::get<SlidingWindow>(mode_).width;
    accumulate(score, *profile, 1.0);
    window_.push_back({score, profile});
    if (window_.size() > width) {
      const Retained old = window_.front();
      window_.pop_front();
      accumulate(old.score, *old.profile, -1.0);
      if (++evictions_ >= width) resum();
    }
  }

  void accumulate(double score, const BandwidthProfile& profile, double sign) {
    const auto [r, norm] = fill_stencil_raw(grid_, score, profile, reflect_, stencil_);
    const double w = sign * norm;
    for (std::size_t j = r.lo; j <= r.hi; ++j) acc_[j] += w * stencil_[j];
    touches_ += r.hi - r.lo + 1;
  }

  // Rebuilds the window sum from scratch so rounding from add/subtract pairs
  // cannot accumulate; amortized over `width` evictions.
  void resum() {
    evictions_ = 0;
    std::fill(acc_.begin(), acc_.end(), 0.0);
    for (const auto& r : window_) accumulate(r.score, *r.profile, 1.0);
  }

  Grid grid_;
  EstimatorMode mode_;
  bool reflect_;
  std::vector<double> acc_;
  double scale_ = 1.0;
  std::deque<Retained> window_;
  std::size_t evictions_ = 0;
  std::vector<double> stencil_;
  std::uint64_t events_ = 0;
  std::uint64_t touches_ = 0;
};

/// Tail-mass curve U(c) = int_c^1 f of a gridded density (piecewise-linear f).
class TailMass {
 public:
  TailMass(const Grid& grid, std::span<const double> values)
      : grid_(grid), values_(values.begin(), values.end()), tail_(values.size(), 0.0) {
    const double half = 0.5 * grid_.spacing();
    for (std::size_t j = values_.size() - 1; j-- > 0;)
      tail_[j] = tail_[j + 1] + half * (values_[j] + values_[j + 1]);
  }

  double operator()(double c) const noexcept {
    if (c <= 0.0) return tail_[0];
    if (c >= 1.0) return 0.0;
    const std::size_t j = grid_.cell(c);
    const double fc = density(c);
    return tail_[j + 1] + 0.5 * (grid_.point(j + 1) - c) * (fc + values_[j + 1]);
  }

  double density(double c) const noexcept { return interpolate(grid_, values_, c); }

  /// Largest t with U(t) = kappa, for kappa in (0, U(0)].
  double quantile(double kappa) const {
    if (!(kappa > 0.0 && kappa < 1.0)) throw DomainError("capacity ratio must lie in (0,1), got " + std::to_string(kappa));
    if (kappa >= tail_[0]) return 0.0;
    // tail_ is nonincreasing; find the largest j with tail_[j] >= kappa.
    std::size_t lo = 0, hi = tail_.size() - 1;  // tail_[lo] >= kappa > tail_[hi] = 0
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      (tail_[mid] >= kappa ? lo : hi) = mid;
    }
    const double dx = grid_.spacing();
    const double a = values_[lo], b = values_[lo + 1];
    const double q = (kappa - tail_[lo + 1]) / dx;  // required mass in cell, in units of dx
    const double disc = std::max(0.0, b * b - 2.0 * (b - a) * q);
    const double denom = b + std::sqrt(disc);
    double w = denom > 0.0 ? 2.0 * q / denom : 1.0;  // fraction of the cell above t
    w = std::clamp(w, 0.0, 1.0);
    return std::clamp(grid_.point(lo + 1) - w * dx, 0.0, 1.0);
  }

  double total() const noexcept { return tail_[0]; }
  const Grid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  Grid grid_;
  std::vector<double> values_;
  std::vector<double> tail_;
};

/// U(c) = int_c^1 f with linear interpolation at c.
inline double tail_mass(const Grid& grid, std::span<const double> values, double c) {
  return TailMass(grid, values)(c);
}

/// Which global-bandwidth rule drives h0 at each refresh.
enum class BandwidthSelector {
  normal_reference,  ///< normal reference with the [0,1] variance cap
  plug_in,           ///< Sheather-Jones on the window / AMISE plug-in on the pilot
};

/// Default persistence ladder: one octave each way in half-octave steps.
inline std::vector<double> default_ladder() {
  return {0.5, std::sqrt(0.5), 1.0, std::sqrt(2.0), 2.0};
}

struct DensityConfig {
  std::size_t grid_size = 512;
  EstimatorMode mode = ExponentialForgetting{0.01};
  double h_min = 0.005;
  double h_max = 0.25;
  std::size_t bandwidth_refresh = 500;  ///< events between h0 refreshes
  bool adaptive = true;                 ///< Abramson profile vs. constant h0
  bool reflect = true;
  BandwidthSelector selector = BandwidthSelector::plug_in;
  std::vector<double> ladder = default_ladder();  ///< re-smoothing multipliers tracked alongside

  void validate() const {
    Grid{grid_size};
    validate_mode(mode);
    if (!(h_min > 0.0 && h_min <= h_max && h_max <= 1.0))
      throw ConfigError("bandwidth bounds must satisfy 0 < h_min <= h_max <= 1");
    if (bandwidth_refresh < 1) throw ConfigError("bandwidth refresh period must be >= 1");
    for (double m : ladder)
      if (!(m > 0.0)) throw ConfigError("ladder multipliers must be positive");
  }
};

/// Immutable view of a stream's density between updates.
struct DensitySnapshot {
  Grid grid{Grid::kMinPoints};
  std::vector<double> f_hat;
  std::vector<double> pilot;
  std::vector<double> h;
  double n_eff = 0.0;
  double h0 = 0.0;
  double geo_mean = 1.0;
  std::uint64_t events = 0;
  std::vector<double> multipliers;            ///< ascending, contains 1.0
  std::vector<std::vector<double>> ladder;    ///< density at each multiplier
};

inline void write_snapshot_csv(std::ostream& os, const DensitySnapshot& snap) {
  os << "x,f_hat,pilot,h\n";
  os.precision(17);
  for (std::size_t j = 0; j < snap.grid.size(); ++j)
    os << snap.grid.point(j) << ',' << snap.f_hat[j] << ',' << snap.pilot[j] << ',' << snap.h[j] << '\n';
}

/// Per-stream density state: adaptive estimate, fixed-bandwidth pilot, the
/// Abramson profile, and the persistence ladder. Ladder multipliers below 1
/// are tracked online (they cannot be recovered from a smoother state);
/// multipliers above 1 are derived from the estimate when a snapshot is taken.
class StreamDensity {
 public:
  explicit StreamDensity(DensityConfig config)
      : config_(std::move(config)),
        grid_(config_.grid_size),
        main_(grid_, config_.mode, config_.reflect),
        pilot_(grid_, config_.mode, config_.reflect) {
    config_.validate();
    for (double m : config_.ladder) {
      if (m < 1.0) ladder_.push_back({m, OnlineDensity(grid_, config_.mode, config_.reflect), nullptr});
      if (m > 1.0) coarse_.push_back(m);
    }
    std::sort(ladder_.begin(), ladder_.end(), [](const auto& a, const auto& b) { return a.multiplier < b.multiplier; });
    std::sort(coarse_.begin(), coarse_.end());
    refresh_bandwidth();
  }

  /// Adds one score to every tracked density. Returns false (and counts a
  /// rejection) for scores outside [0,1].
  bool ingest(double score) {
    if (!(score >= 0.0 && score <= 1.0)) {
      ++rejected_;
      return false;
    }
    main_.add(score, profile_);
    pilot_.add(score, pilot_profile_);
    for (auto& l : ladder_) l.density.add(score, l.profile);
    update_moments(score);
    if (refresh_due()) refresh_bandwidth();
    return true;
  }

  /// Recomputes h0, the pilot bandwidth and the Abramson profile.
  void refresh_bandwidth() {
    const double n = std::max(1.0, main_.n_eff());
    const double sigma = scale_estimate();
    const double h_nr = clip(h0_normal_reference(n, sigma));
    double h0 = h_nr;
    if (config_.selector == BandwidthSelector::plug_in && main_.n_eff() >= 100.0) {
      try {
        if (is_windowed(config_.mode))
          h0 = clip(h0_sheather_jones(main_.window_scores()));
        else
          h0 = clip(h0_sheather_jones_grid(grid_, main_.values(), n));
      } catch (const InsufficientData&) {
        h0 = h_nr;
      }
    }
    pilot_profile_ = std::make_shared<const BandwidthProfile>(
        constant_profile(grid_, h_nr, config_.h_min, config_.h_max));
    BandwidthProfile p = config_.adaptive
                             ? abramson_profile(grid_, pilot_.values(), h0, config_.h_min, config_.h_max)
                             : constant_profile(grid_, h0, config_.h_min, config_.h_max);
    for (auto& l : ladder_) {
      BandwidthProfile scaled = p;
      for (double& h : scaled.per_point) h = std::min(1.0, h * l.multiplier);
      scaled.index(grid_);
      l.profile = std::make_shared<const BandwidthProfile>(std::move(scaled));
    }
    profile_ = std::make_shared<const BandwidthProfile>(std::move(p));
    last_refresh_ = main_.event_count();
    ++refreshes_;
  }

  DensitySnapshot snapshot() const {
    DensitySnapshot s;
    s.grid = grid_;
    s.f_hat = main_.values();
    s.pilot = pilot_.values();
    s.h = profile_->per_point;
    s.n_eff = main_.n_eff();
    s.h0 = profile_->h0;
    s.geo_mean = profile_->geo_mean;
    s.events = main_.event_count();
    for (const auto& l : ladder_) {
      s.multipliers.push_back(l.multiplier);
      s.ladder.push_back(l.density.values());
    }
    s.multipliers.push_back(1.0);
    s.ladder.push_back(s.f_hat);
    for (double m : coarse_) {
      BandwidthProfile extra = *profile_;
      for (double& h : extra.per_point) h *= std::sqrt(m * m - 1.0);
      extra.index(grid_);
      s.multipliers.push_back(m);
      s.ladder.push_back(resmooth(grid_, s.f_hat, extra, config_.reflect));
    }
    return s;
  }

  const DensityConfig& config() const noexcept { return config_; }
  const Grid& grid() const noexcept { return grid_; }
  const OnlineDensity& density() const noexcept { return main_; }
  const OnlineDensity& pilot() const noexcept { return pilot_; }
  const BandwidthProfile& profile() const noexcept { return *profile_; }
  double n_eff() const noexcept { return main_.n_eff(); }
  std::uint64_t event_count() const noexcept { return main_.event_count(); }
  std::uint64_t rejected() const noexcept { return rejected_; }
  std::uint64_t bandwidth_refreshes() const noexcept { return refreshes_; }

  std::uint64_t grid_touches() const noexcept {
    std::uint64_t t = main_.grid_touches() + pilot_.grid_touches();
    for (const auto& l : ladder_) t += l.density.grid_touches();
    return t;
  }

  /// Number of grid densities updated per event.
  std::size_t tracked_densities() const noexcept { return 2 + ladder_.size(); }

  /// Density `f` smoothed once more with `extra`; widths add in quadrature, so
  /// an extra width sqrt(m^2 - 1) h approximates smoothing at m h.
  static std::vector<double> resmooth(const Grid& grid, std::span<const double> f, const BandwidthProfile& extra,
                                      bool reflect) {
    const std::size_t g = grid.size();
    std::vector<double> out(g, 0.0), stencil(g, 0.0);
    for (std::size_t j = 0; j < g; ++j) {
      const double mass = f[j] * grid.spacing() * ((j == 0 || j + 1 == g) ? 0.5 : 1.0);
      if (!(mass > 0.0)) continue;
      const StencilRange r = fill_stencil(grid, grid.point(j), extra, reflect, stencil);
      for (std::size_t i = r.lo; i <= r.hi; ++i) out[i] += mass * stencil[i];
    }
    return out;
  }

 private:
  struct LadderDensity {
    double multiplier;
    OnlineDensity density;
    ProfileHandle profile;
  };

  double clip(double h) const noexcept { return std::clamp(h, config_.h_min, config_.h_max); }

  // Refresh every `bandwidth_refresh` events, plus doubling warm-up refreshes
  // (32, 64, 128, ...) before the first full period.
  bool refresh_due() const noexcept {
    const std::uint64_t n = main_.event_count();
    const std::uint64_t period = config_.bandwidth_refresh;
    if (n - last_refresh_ >= period) return true;
    return n < period && n >= 32 && n >= 2 * std::max<std::uint64_t>(last_refresh_, 16);
  }

  void update_moments(double s) {
    if (const auto* w = std::get_if<SlidingWindow>(&config_.mode)) {
      (void)w;
      return;  // windowed scale comes from the retained scores
    }
    const double a = std::get<ExponentialForgetting>(config_.mode).alpha;
    const double d = s - mean_;
    mean_ += a * d;
    var_ = (1.0 - a) * (var_ + a * d * d);
  }

  double scale_estimate() const {
    if (is_windowed(config_.mode)) {
      if (main_.n_eff() >= 2.0) {
        const double s = detail::robust_scale(main_.window_scores());
        if (s > 0.0) return std::min(s, 0.5);
      }
      return 1.0 / std::sqrt(12.0);
    }
    return std::min(std::sqrt(std::max(var_, 0.0)), 0.5);
  }

  DensityConfig config_;
  Grid grid_;
  OnlineDensity main_;
  OnlineDensity pilot_;
  std::vector<LadderDensity> ladder_;  ///< multipliers below 1, updated per event
  std::vector<double> coarse_;         ///< multipliers above 1, re-smoothed on demand
  ProfileHandle profile_;
  ProfileHandle pilot_profile_;
  // Exponentially weighted moments start from the uniform prior on [0,1].
  double mean_ = 0.5;
  double var_ = 1.0 / 12.0;
  std::uint64_t last_refresh_ = 0;
  std::uint64_t refreshes_ = 0;
  std::uint64_t rejected_ = 0;
};

/// Fresh per-stream state: uniform density, n_eff = 0, profile at the
/// normal-reference value under the uniform prior.
inline StreamDensity init_state(std::size_t grid_size, EstimatorMode mode, double h_min, double h_max) {
  DensityConfig c;
  c.grid_size = grid_size;
  c.mode = mode;
  c.h_min = h_min;
  c.h_max = h_max;
  c.validate();
  return StreamDensity(std::move(c));
}

}  // namespace vthresh
