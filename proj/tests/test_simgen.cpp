#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <boost/math/distributions/beta.hpp>

#include "vthresh/simgen.hpp"

using namespace vthresh;

namespace {

// Brute-force sign scan of the analytic mixture's differences, independent of
// Mixture::interior_minima.
std::size_t count_minima(const Mixture& m) {
  const int n = 100000;
  std::vector<double> f(n + 1);
  for (int i = 0; i <= n; ++i) {
    double v = 0.0;
    for (const auto& c : m.components)
      v += c.weight * boost::math::pdf(boost::math::beta_distribution<>(c.alpha, c.beta), static_cast<double>(i) / n);
    f[i] = v;
  }
  std::size_t k = 0;
  for (int i = 1; i < n; ++i) k += f[i] < f[i - 1] && f[i] < f[i + 1];
  return k;
}

}  // namespace

TEST(Generate, Deterministic) {
  const auto p = *builtin_profile("trimodal");
  EXPECT_EQ(generate_interval(p, 5), generate_interval(p, 5));
  EXPECT_NE(generate_interval(p, 5), generate_interval(p, 6));
  auto q = p;
  q.seed += 1;
  EXPECT_NE(generate_interval(p, 5), generate_interval(q, 5));
}

TEST(Generate, UniformMean) {
  BAStreamProfile p;
  p.components = {{1.0, 1.0, 1.0}};
  p.rate = 200000;
  const auto xs = generate_interval(p, 0);
  double mean = 0.0;
  for (double x : xs) mean += x;
  EXPECT_NEAR(mean / xs.size(), 0.5, 0.005);
  for (double x : xs) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
}

TEST(Generate, MatchesMixtureCdf) {
  auto p = *builtin_profile("bimodal");
  p.rate = 50000;
  auto xs = generate_interval(p, 0);
  std::sort(xs.begin(), xs.end());
  const Mixture m = mixture_at(p, 0);
  double ks = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    ks = std::max(ks, std::abs(m.cdf(xs[i]) - (i + 0.5) / xs.size()));
  EXPECT_LT(ks, 1.36 / std::sqrt(static_cast<double>(xs.size())));
}

TEST(Discretize, Rounding) {
  EXPECT_DOUBLE_EQ(discretize(0.12345, 0.01), 0.12);
  EXPECT_DOUBLE_EQ(discretize(0.125001, 0.01), 0.13);
  EXPECT_EQ(discretize(0.12345, 0.0), 0.12345);
}

TEST(Presets, Shapes) {
  const auto uni = mixture_at(*builtin_profile("unimodal"), 0);
  const auto bi = mixture_at(*builtin_profile("bimodal"), 0);
  const auto tri = mixture_at(*builtin_profile("trimodal"), 0);
  EXPECT_EQ(count_minima(uni), 0u);
  EXPECT_EQ(count_minima(bi), 1u);
  EXPECT_EQ(count_minima(tri), 2u);
  EXPECT_LT(bi.pdf(0.5), bi.pdf(0.49));
  EXPECT_LT(bi.pdf(0.5), bi.pdf(0.51));
  EXPECT_NEAR(bi.pdf(0.5 - 1e-3), bi.pdf(0.5 + 1e-3), 1e-12);
  EXPECT_EQ(tri.interior_minima().size(), 2u);
  EXPECT_FALSE(builtin_profile("nope").has_value());
}

TEST(Stress, TailExplosionRaisesUpperTail) {
  const auto base = *builtin_profile("unimodal");
  const auto p = stress_event(base, StressKind::tail_explosion, 10, 5);
  const double before = mixture_at(p, 9).tail(0.8);
  for (std::size_t t = 10; t < 15; ++t) EXPECT_GT(mixture_at(p, t).tail(0.8), before);
  EXPECT_DOUBLE_EQ(mixture_at(p, 15).tail(0.8), before);
}

TEST(Stress, ValleyVanishFullMergeAtPeak) {
  const auto p = stress_event(*builtin_profile("bimodal"), StressKind::valley_vanish, 10, 20);
  EXPECT_EQ(count_minima(mixture_at(p, 9)), 1u);
  // Progress peaks in the middle intervals of the event.
  EXPECT_EQ(count_minima(mixture_at(p, 19)), 0u);
  EXPECT_EQ(count_minima(mixture_at(p, 20)), 0u);
  EXPECT_EQ(count_minima(mixture_at(p, 30)), 1u);
}

TEST(Stress, RoundingShiftAtoms) {
  auto base = *builtin_profile("trimodal");
  base.discretization_step = 0.01;
  base.rate = 20000;
  const auto p = stress_event(base, StressKind::rounding_shift, 3, 2, 0.05);
  std::set<double> before, during;
  for (double x : generate_interval(p, 2)) before.insert(x);
  for (double x : generate_interval(p, 3)) during.insert(x);
  EXPECT_GT(before.size(), 21u);
  EXPECT_LE(during.size(), 21u);
  for (double x : during) EXPECT_NEAR(x / 0.05, std::round(x / 0.05), 1e-9);
}

TEST(Drift, KeyframesInterpolate) {
  BAStreamProfile p;
  p.components = {{2, 8, 0.5}, {8, 2, 0.5}};
  p.drift = {{0, {{2, 8, 0.5}, {8, 2, 0.5}}}, {10, {{4, 8, 0.5}, {8, 2, 0.5}}}};
  EXPECT_DOUBLE_EQ(mixture_at(p, 5).components[0].alpha, 3.0);
  EXPECT_DOUBLE_EQ(mixture_at(p, 50).components[0].alpha, 4.0);
  p.regime_shifts = {{7, {{1, 1, 1}}}};
  EXPECT_EQ(mixture_at(p, 8).components.size(), 1u);
  EXPECT_EQ(mixture_at(p, 6).components.size(), 2u);
}

TEST(Capacity, Schedule) {
  BAStreamProfile p = *builtin_profile("bimodal");
  p.rate = 1000;
  p.capacity.kappa = 0.05;
  EXPECT_DOUBLE_EQ(capacity_at(p, 3), 50.0);
  p.capacity.bursts = {{2, 2, 1.5}};
  EXPECT_DOUBLE_EQ(capacity_at(p, 2), 75.0);
  EXPECT_DOUBLE_EQ(capacity_at(p, 4), 50.0);
  p.capacity.bursts = {{2, 1, std::nullopt}};
  const double c = capacity_at(p, 2);
  EXPECT_TRUE(std::abs(c - 25.0) < 1e-9 || std::abs(c - 75.0) < 1e-9) << c;
}

TEST(Backlog, Recursion) {
  BacklogState s;
  s = backlog_step(s, 10, 8);
  EXPECT_EQ(s.backlog, 2.0);
  s = backlog_step(s, 10, 8);
  EXPECT_EQ(s.backlog, 4.0);
  BacklogState t;
  t.backlog = 3;
  EXPECT_EQ(backlog_step(t, 0, 5).backlog, 0.0);
  BacklogState e;
  e.backlog = 7;
  for (int i = 0; i < 5; ++i) e = backlog_step(e, 4, 4);
  EXPECT_EQ(e.backlog, 7.0);
  EXPECT_THROW(backlog_step(e, -1, 4), DomainError);
}

// Closed form: B_t = max_{0<=k<=t} sum_{i=k+1}^{t} (A_i - R_i), with B_0 = 0.
TEST(BacklogProperty, MatchesClosedForm) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> a(0, 20);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> A(60), R(60);
    for (int i = 0; i < 60; ++i) {
      A[i] = a(rng);
      R[i] = a(rng);
    }
    BacklogState s;
    for (int t = 0; t < 60; ++t) {
      s = backlog_step(s, A[t], R[t]);
      double best = 0.0, run = 0.0;
      for (int k = t; k >= 0; --k) {
        run += A[k] - R[k];
        best = std::max(best, run);
      }
      ASSERT_EQ(s.backlog, best);
    }
  }
}

TEST(Profile, Validation) {
  BAStreamProfile p;
  EXPECT_THROW(p.validate(), ConfigError);
  p.components = {{0.0, 1.0, 1.0}};
  EXPECT_THROW(p.validate(), ConfigError);
  p.components = {{1.0, 1.0, 1.0}};
  EXPECT_NO_THROW(p.validate());
  EXPECT_THROW(parse_stress_kind("meteor"), ConfigError);
}
