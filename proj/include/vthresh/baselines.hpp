#pragma once

// Baseline threshold policies: batch top-K, Greenwald-Khanna quantile sketch
// (plain and over a sliding window of interval blocks), and an EWMA-gain
// proportional controller. The fixed-bandwidth and non-reflected KDE baselines
// are DensityConfig switches (adaptive = false, reflect = false).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "vthresh/error.hpp"

namespace vthresh {

/// The C-th largest score, so exactly C scores (ties included on the high
/// side) are >= the cut. C = 0 returns a cut above every score; C >= count
/// takes everything.
inline double batch_topk_cut(std::vector<double> scores, std::size_t capacity) {
  if (capacity == 0 || scores.empty())
    return scores.empty() ? 1.0 : std::nextafter(*std::max_element(scores.begin(), scores.end()),
                                                 std::numeric_limits<double>::infinity());
  capacity = std::min(capacity, scores.size());
  std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(capacity - 1), scores.end(),
                   std::greater<>());
  return scores[capacity - 1];
}

/// Greenwald-Khanna epsilon-approximate quantile summary.
class GKSketch {
 public:
  explicit GKSketch(double epsilon) : eps_(epsilon) {
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw ConfigError("GK epsilon must lie in (0, 0.5)");
    period_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(1.0 / (2.0 * eps_))));
  }

  void insert(double v) {
    const auto it = std::upper_bound(tuples_.begin(), tuples_.end(), v,
                                     [](double x, const Tuple& t) { return x < t.v; });
    std::size_t delta = 0;
    if (it != tuples_.begin() && it != tuples_.end())
      delta = static_cast<std::size_t>(std::floor(2.0 * eps_ * static_cast<double>(n_)));
    tuples_.insert(it, Tuple{v, 1, delta});
    ++n_;
    if (n_ % period_ == 0) compress();
  }

  /// A value whose rank is within epsilon * n of q * n.
  double query(double q) const {
    if (n_ == 0) throw InsufficientData("GK sketch is empty");
    if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level outside [0,1]");
    const double rank = std::max(1.0, std::ceil(q * static_cast<double>(n_)));
    const double slack = eps_ * static_cast<double>(n_);
    std::size_t rmin = 0;
    for (std::size_t i = 0; i < tuples_.size(); ++i) {
      rmin += tuples_[i].g;
      const double rmax = static_cast<double>(rmin + tuples_[i].delta);
      if (static_cast<double>(rmin) >= rank - slack && rmax <= rank + slack) return tuples_[i].v;
    }
    return tuples_.back().v;
  }

  /// Weighted summary entries (value, g) for combining blocks.
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& t : tuples_) f(t.v, t.g, t.delta);
  }

  std::size_t count() const noexcept { return n_; }
  std::size_t size() const noexcept { return tuples_.size(); }
  double epsilon() const noexcept { return eps_; }

 private:
  struct Tuple {
    double v;
    std::size_t g;
    std::size_t delta;
  };

  void compress() {
    const auto cap = static_cast<std::size_t>(std::floor(2.0 * eps_ * static_cast<double>(n_)));
    // Merge right-to-left, never absorbing the first (minimum) tuple.
    for (std::size_t i = tuples_.size() - 1; i >= 2; --i) {
      Tuple& prev = tuples_[i - 1];
      Tuple& cur = tuples_[i];
      if (prev.g + cur.g + cur.delta <= cap) {
        cur.g += prev.g;
        tuples_.erase(tuples_.begin() + static_cast<std::ptrdiff_t>(i - 1));
      }
    }
  }

  double eps_;
  std::size_t period_;
  std::size_t n_ = 0;
  std::vector<Tuple> tuples_;
};

/// Sliding-window quantile over the most recent `blocks` intervals, one GK
/// sketch per interval. Querying combines the block summaries by weight.
class WindowQuantile {
 public:
  WindowQuantile(std::size_t blocks, double epsilon) : blocks_(blocks), eps_(epsilon) {
    if (blocks == 0) throw ConfigError("window quantile needs at least one block");
    GKSketch probe(epsilon);
    (void)probe;
  }

  void start_block() {
    window_.emplace_back(eps_);
    if (window_.size() > blocks_) window_.pop_front();
  }

  void insert(double v) {
    if (window_.empty()) start_block();
    window_.back().insert(v);
  }

  double query(double q) const {
    std::vector<std::pair<double, double>> items;
    double total = 0.0;
    for (const auto& s : window_)
      s.for_each([&](double v, std::size_t g, std::size_t) {
        items.emplace_back(v, static_cast<double>(g));
        total += static_cast<double>(g);
      });
    if (items.empty()) throw InsufficientData("window quantile is empty");
    std::sort(items.begin(), items.end());
    const double rank = std::max(1.0, std::ceil(q * total));
    double acc = 0.0;
    for (const auto& [v, g] : items) {
      acc += g;
      if (acc >= rank) return v;
    }
    return items.back().first;
  }

  /// Cut with an upper tail of kappa.
  double cut(double kappa) const { return query(1.0 - kappa); }

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (const auto& s : window_) n += s.count();
    return n;
  }

 private:
  std::size_t blocks_;
  double eps_;
  std::deque<GKSketch> window_;
};

/// Proportional controller on realized intake:
///   cut' = cut + gain * (A - C) / (N * max(f(cut), floor)),
/// where f is read from an exponentially weighted histogram of raw scores.
class EwmaController {
 public:
  EwmaController(double initial_cut, double gain = 0.5, double smoothing = 0.3, std::size_t bins = 100,
                 double floor = 1e-4)
      : cut_(initial_cut), gain_(gain), smoothing_(smoothing), floor_(floor), hist_(bins, 1.0) {
    if (!(smoothing > 0.0 && smoothing <= 1.0)) throw ConfigError("EWMA smoothing must lie in (0,1]");
    if (bins < 2) throw ConfigError("EWMA histogram needs at least two bins");
  }

  /// Folds one interval's scores into the histogram density.
  void observe(std::span<const double> scores) {
    if (scores.empty()) return;
    std::vector<double> h(hist_.size(), 0.0);
    const double nb = static_cast<double>(hist_.size());
    for (double s : scores) h[std::min(hist_.size() - 1, static_cast<std::size_t>(s * nb))] += 1.0;
    const double norm = nb / static_cast<double>(scores.size());
    for (std::size_t i = 0; i < h.size(); ++i)
      hist_[i] = (1.0 - smoothing_) * hist_[i] + smoothing_ * h[i] * norm;
  }

  double density(double x) const noexcept {
    const double nb = static_cast<double>(hist_.size());
    return hist_[std::min(hist_.size() - 1, static_cast<std::size_t>(std::clamp(x, 0.0, 1.0) * nb))];
  }

  /// Control step after an interval with realized intake A, target C, volume N.
  double update(double intake, double target, double volume) {
    if (!(volume > 0.0)) return cut_;
    cut_ += gain_ * (intake - target) / (volume * std::max(density(cut_), floor_));
    cut_ = std::clamp(cut_, 0.0, 1.0);
    return cut_;
  }

  double cut() const noexcept { return cut_; }

 private:
  double cut_;
  double gain_;
  double smoothing_;
  double floor_;
  std::vector<double> hist_;
};

}  // namespace vthresh
