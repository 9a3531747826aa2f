#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "vthresh/grid.hpp"
#include "vthresh/kernel.hpp"

using namespace vthresh;

TEST(Kernel, PointValues) {
  EXPECT_DOUBLE_EQ(eval_kernel(0.0), 0.75);
  EXPECT_DOUBLE_EQ(eval_kernel(1.0), 0.0);
  EXPECT_DOUBLE_EQ(eval_kernel(0.5), 0.5625);
  EXPECT_DOUBLE_EQ(eval_kernel(0.5, KernelOrder::first), -0.75);
  EXPECT_DOUBLE_EQ(eval_kernel(0.3, KernelOrder::second), -1.5);
  EXPECT_DOUBLE_EQ(eval_kernel(1.0, KernelOrder::first), 0.0);
  EXPECT_DOUBLE_EQ(eval_kernel(-1.2), 0.0);
}

TEST(Kernel, OrderOutOfRange) {
  EXPECT_THROW(kernel_order(3), ConfigError);
  EXPECT_THROW(kernel_order(-1), ConfigError);
  EXPECT_EQ(kernel_order(1), KernelOrder::first);
}

TEST(Kernel, Scaled) {
  EXPECT_DOUBLE_EQ(eval_kernel_scaled(0.5, 0.5, 0.1), 7.5);
  EXPECT_DOUBLE_EQ(eval_kernel_scaled(0.7, 0.5, 0.1), 0.0);
  EXPECT_NEAR(eval_kernel_scaled(0.55, 0.5, 0.1), 5.625, 1e-12);
  EXPECT_THROW(eval_kernel_scaled(0.5, 0.5, 0.0), InvalidBandwidth);
  EXPECT_THROW(eval_kernel_scaled(0.5, 0.5, -1.0), InvalidBandwidth);
}

TEST(Kernel, ReflectedStencil) {
  EXPECT_DOUBLE_EQ(reflected_stencil(0.0, 0.0, 0.1), 15.0);
  EXPECT_DOUBLE_EQ(reflected_stencil(0.5, 0.5, 0.1), 7.5);
  EXPECT_DOUBLE_EQ(reflected_stencil(1.0, 1.0, 0.1), 15.0);
  EXPECT_THROW(reflected_stencil(0.5, 1.1, 0.1), DomainError);
  EXPECT_THROW(reflected_stencil(0.5, -0.1, 0.1), DomainError);
  EXPECT_THROW(reflected_stencil(0.5, 0.5, 0.0), InvalidBandwidth);
}

TEST(KernelProperty, NonnegativeAndSymmetric) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = u(rng);
    EXPECT_GE(eval_kernel(x), 0.0);
    EXPECT_EQ(eval_kernel(x), eval_kernel(-x));
  }
}

TEST(KernelProperty, DerivativeMatchesFiniteDifference) {
  const double eps = 1e-6;
  for (int i = -99; i <= 99; ++i) {
    const double u = i / 100.0;
    const double fd = (eval_kernel(u + eps) - eval_kernel(u - eps)) / (2.0 * eps);
    EXPECT_NEAR(eval_kernel(u, KernelOrder::first), fd, 1e-6) << "u=" << u;
  }
}

// Trapezoid mass of the raw reflected stencil: unit up to O(dx^2 / h^2).
TEST(KernelProperty, ReflectedStencilUnitMass) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> s(0.0, 1.0), h(0.02, 0.3);
  for (std::size_t g : {128u, 512u, 2048u}) {
    const Grid grid(g);
    const double dx = grid.spacing();
    for (int rep = 0; rep < 200; ++rep) {
      const double score = rep == 0 ? 0.0 : rep == 1 ? 1.0 : s(rng);
      const double bw = h(rng);
      std::vector<double> v(g);
      for (std::size_t j = 0; j < g; ++j) v[j] = reflected_stencil(grid.point(j), score, bw);
      EXPECT_NEAR(trapezoid(v, dx), 1.0, 2.0 * dx * dx / (bw * bw)) << "G=" << g << " s=" << score << " h=" << bw;
    }
  }
}

TEST(Grid, Basics) {
  EXPECT_THROW(Grid(32), ConfigError);
  const Grid g(65);
  EXPECT_DOUBLE_EQ(g.spacing(), 1.0 / 64.0);
  EXPECT_EQ(g.point(0), 0.0);
  EXPECT_EQ(g.point(64), 1.0);
  const auto xs = g.points();
  for (std::size_t j = 1; j < xs.size(); ++j) EXPECT_LT(xs[j - 1], xs[j]);
  EXPECT_EQ(g.cell(1.0), 63u);
  EXPECT_EQ(g.ceil_index(0.5), 32u);
  EXPECT_EQ(g.floor_index(0.5), 32u);
  EXPECT_EQ(g.floor_index(0.51), 32u);
  EXPECT_EQ(g.ceil_index(0.51), 33u);
}
