#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vthresh/error.hpp"

namespace vthresh {

/// Uniform grid of G points spanning [0,1], endpoints included.
class Grid {
 public:
  static constexpr std::size_t kMinPoints = 64;

  explicit Grid(std::size_t size) : size_(size) {
    if (size < kMinPoints)
      throw ConfigError("grid size must be at least " + std::to_string(kMinPoints) + ", got " +
                        std::to_string(size));
    spacing_ = 1.0 / static_cast<double>(size - 1);
  }

  std::size_t size() const noexcept { return size_; }
  double spacing() const noexcept { return spacing_; }

  double point(std::size_t j) const noexcept {
    return j + 1 == size_ ? 1.0 : static_cast<double>(j) * spacing_;
  }

  std::vector<double> points() const {
    std::vector<double> xs(size_);
    for (std::size_t j = 0; j < size_; ++j) xs[j] = point(j);
    return xs;
  }

  /// Index of the cell [x_j, x_{j+1}] containing x (clamped to [0, G-2]).
  std::size_t cell(double x) const noexcept {
    if (!(x > 0.0)) return 0;
    auto j = static_cast<std::size_t>(x / spacing_);
    return std::min(j, size_ - 2);
  }

  /// Smallest index with x_j >= x (clamped).
  std::size_t ceil_index(double x) const noexcept {
    if (!(x > 0.0)) return 0;
    const double r = std::ceil(x / spacing_ - 1e-12);
    return std::min(static_cast<std::size_t>(r), size_ - 1);
  }

  /// Largest index with x_j <= x (clamped).
  std::size_t floor_index(double x) const noexcept {
    if (!(x > 0.0)) return 0;
    const double r = std::floor(x / spacing_ + 1e-12);
    return std::min(static_cast<std::size_t>(r), size_ - 1);
  }

  bool operator==(const Grid& other) const noexcept { return size_ == other.size_; }

 private:
  std::size_t size_;
  double spacing_;
};

/// Trapezoidal rule over uniformly spaced samples.
inline double trapezoid(std::span<const double> values, double dx) noexcept {
  if (values.size() < 2) return 0.0;
  double sum = 0.5 * (values.front() + values.back());
  for (std::size_t j = 1; j + 1 < values.size(); ++j) sum += values[j];
  return sum * dx;
}

/// Piecewise-linear interpolation of grid values at x in [0,1].
inline double interpolate(const Grid& grid, std::span<const double> values, double x) noexcept {
  x = std::clamp(x, 0.0, 1.0);
  const std::size_t j = grid.cell(x);
  const double w = (x - grid.point(j)) / grid.spacing();
  return values[j] + w * (values[j + 1] - values[j]);
}

}  // namespace vthresh
