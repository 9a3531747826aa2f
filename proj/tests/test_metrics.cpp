#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "vthresh/metrics.hpp"

using namespace vthresh;

namespace {

std::vector<IntervalRecord> rows(const std::vector<double>& a, const std::vector<double>& c) {
  std::vector<IntervalRecord> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    IntervalRecord r;
    r.policy = "ours";
    r.ba = "b";
    r.interval = i;
    r.intake = a[i];
    r.target = c[i];
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST(Adherence, Examples) {
  const auto s = adherence_summary(rows({100, 110, 90}, {100, 100, 100}));
  EXPECT_NEAR(s.mean_abs, 20.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.mean_rel, 0.2 / 3.0, 1e-12);
  EXPECT_EQ(s.within, 1.0);
  const auto e = adherence_summary(rows({5, 5}, {5, 5}));
  EXPECT_EQ(e.mean_abs, 0.0);
  EXPECT_EQ(e.within, 1.0);
  EXPECT_EQ(adherence_summary(rows({80}, {100})).within, 0.0);
  EXPECT_THROW(adherence_summary({}), EmptyReport);
}

TEST(Stability, Examples) {
  EXPECT_EQ(*stability_summary(rows({10, 10, 10}, {1, 1, 1})).intake_cov, 0.0);
  auto r = rows({1, 2, 3}, {1, 1, 1});
  r[0].cut = 0.8;
  r[1].cut = 0.8;
  r[2].cut = 0.85;
  const auto s = stability_summary(r);
  ASSERT_EQ(s.jitter.size(), 2u);
  EXPECT_EQ(s.jitter[0], 0.0);
  EXPECT_NEAR(s.jitter[1], 0.05, 1e-12);
  EXPECT_FALSE(stability_summary(rows({0, 0}, {1, 1})).intake_cov.has_value());
}

TEST(Backlog, Examples) {
  auto r = rows({0, 0, 0, 0}, {4, 4, 4, 4});
  const auto zero = backlog_summary(r, 0.5);
  EXPECT_EQ(zero.exceedance, 0.0);
  EXPECT_FALSE(zero.mtbb.has_value());
  const double b[] = {1, 3, 1, 3};
  for (int i = 0; i < 4; ++i) r[i].backlog = b[i];
  const auto s = backlog_summary(r, 0.5);
  EXPECT_EQ(s.exceedance, 0.5);
  EXPECT_EQ(s.onsets, 2u);
  EXPECT_EQ(*s.mtbb, 2.0);
  r[3].backlog = 1;
  EXPECT_FALSE(backlog_summary(r, 0.5).mtbb.has_value());
  EXPECT_EQ(backlog_summary(r, 0.5, 100.0).exceedance, 0.0);
}

TEST(Portability, Examples) {
  auto r = rows({1, 1, 1}, {1, 1, 1});
  for (auto& x : r) {
    x.anchored = true;
    x.elasticity = 5;
  }
  const auto p = portability_summary(r);
  EXPECT_EQ(p.anchored, 1.0);
  EXPECT_EQ(p.elasticity_dispersion, 0.0);
  EXPECT_EQ(p.tie_volatility, 0.0);
  r[1].ba = "c";
  r[1].elasticity = 9;
  r[0].at_atom = 10;
  r[0].tie_flips = 4;
  const auto q = portability_summary(r);
  EXPECT_NEAR(q.elasticity_dispersion, 2.0, 1e-12);
  EXPECT_NEAR(q.tie_volatility, 0.4, 1e-12);
}

TEST(Runtime, Examples) {
  std::vector<std::pair<std::size_t, std::vector<double>>> lin, flat;
  for (std::size_t g : {128u, 512u, 2048u}) {
    lin.emplace_back(g, std::vector<double>{3e-9 * g, 3.1e-9 * g, 2.9e-9 * g});
    flat.emplace_back(g, std::vector<double>{1e-6, 1e-6});
  }
  EXPECT_NEAR(runtime_profile(lin).slope, 1.0, 0.05);
  EXPECT_NEAR(runtime_profile(flat).slope, 0.0, 1e-12);
  lin.pop_back();
  EXPECT_THROW(runtime_profile(lin), InsufficientData);
}

TEST(Quantile, Type7) {
  EXPECT_EQ(quantile_type7({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_EQ(quantile_type7({4, 1, 3, 2}, 0.25), 1.75);
  EXPECT_EQ(median({7}), 7.0);
  EXPECT_THROW(median({}), EmptyReport);
}

TEST(RecordsCsv, RoundTrip) {
  auto r = rows({12, 13}, {10, 10});
  r[0].cut = 0.123456789012345;
  r[1].anchored = true;
  r[1].tie_flips = 3;
  std::stringstream ss;
  ss << "# provenance line\n";
  write_records_csv(ss, r);
  const auto back = read_records_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].cut, r[0].cut);
  EXPECT_TRUE(back[1].anchored);
  EXPECT_EQ(back[1].tie_flips, 3u);
  std::stringstream bad("policy,ba\n");
  EXPECT_THROW(read_records_csv(bad), ConfigError);
}
