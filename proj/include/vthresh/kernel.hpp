#pragma once

#include <cmath>
#include <string>

#include "vthresh/error.hpp"

namespace vthresh {

/// Derivative order of the Epanechnikov kernel: density, first or second derivative.
enum class KernelOrder : int { density = 0, first = 1, second = 2 };

inline KernelOrder kernel_order(int m) {
  if (m < 0 || m > 2) throw ConfigError("kernel order must be 0, 1 or 2, got " + std::to_string(m));
  return static_cast<KernelOrder>(m);
}

/// K^(m)(u) for the Epanechnikov kernel K(u) = 3/4 (1 - u^2) on |u| <= 1.
/// Derivatives are taken as zero on the support edge |u| = 1.
constexpr double eval_kernel(double u, KernelOrder m = KernelOrder::density) noexcept {
  const double a = u < 0 ? -u : u;
  switch (m) {
    case KernelOrder::density:
      return a <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
    case KernelOrder::first:
      return a < 1.0 ? -1.5 * u : 0.0;
    case KernelOrder::second:
      return a < 1.0 ? -1.5 : 0.0;
  }
  return 0.0;
}

namespace detail {

// Unchecked (1/h) K((x - c)/h) for the hot loops.
inline double scaled_kernel(double x, double center, double h) noexcept {
  const double u = (x - center) / h;
  return u * u < 1.0 ? 0.75 * (1.0 - u * u) / h : 0.0;
}

inline double reflected(double x, double s, double h) noexcept {
  return scaled_kernel(x, s, h) + scaled_kernel(x, -s, h) + scaled_kernel(x, 2.0 - s, h);
}

}  // namespace detail

/// K_h(x - center) = (1/h) K((x - center)/h).
inline double eval_kernel_scaled(double x, double center, double h) {
  if (!(h > 0.0)) throw InvalidBandwidth("bandwidth must be positive, got " + std::to_string(h));
  return eval_kernel((x - center) / h) / h;
}

/// Reflected stencil at grid point x for score s: the direct kernel plus the mirror
/// images at -s and 2 - s. Mirror terms vanish outside the kernel support.
inline double reflected_stencil(double x, double s, double h) {
  if (!(s >= 0.0 && s <= 1.0)) throw DomainError("score outside [0,1]: " + std::to_string(s));
  if (!(h > 0.0)) throw InvalidBandwidth("bandwidth must be positive, got " + std::to_string(h));
  return eval_kernel_scaled(x, s, h) + eval_kernel_scaled(x, -s, h) +
         eval_kernel_scaled(x, 2.0 - s, h);
}

}  // namespace vthresh
