// Acceptance run: one PASS/FAIL line per criterion, also written to
// VTHRESH_RESULTS. Exits 0 once every criterion has been evaluated; failing
// criteria are reported in the output, not in the exit code.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <json.hpp>

#include "vthresh/vthresh.hpp"

using namespace vthresh;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> g_lines;

void report(int n, bool pass, const std::string& detail) {
  char head[64];
  std::snprintf(head, sizeof head, "criterion %2d: %s  ", n, pass ? "PASS" : "FAIL");
  g_lines.push_back(head + detail);
  std::printf("%s\n", g_lines.back().c_str());
  std::fflush(stdout);
}

void info(const std::string& text) {
  g_lines.push_back("  info: " + text);
  std::printf("%s\n", g_lines.back().c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::vector<std::uint64_t> seeds(std::size_t n) {
  std::vector<std::uint64_t> s;
  for (std::uint64_t i = 1; i <= n; ++i) s.push_back(i);
  return s;
}

Scenario scenario(const char* name) { return load_scenario(std::string(VTHRESH_CONFIGS) + "/" + name + ".json"); }

std::vector<IntervalRecord> steady(const RunOutput& r, std::size_t warmup) {
  return {r.records.begin() + static_cast<std::ptrdiff_t>(warmup), r.records.end()};
}

std::vector<nlohmann::json> decisions(const RunOutput& r) {
  std::vector<nlohmann::json> out;
  std::istringstream in(r.decisions);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  return out;
}

double trapezoid_of(const StreamDensity& s) { return trapezoid(s.density().values(), s.grid().spacing()); }

// Anchored deployments across every engine run; checked by criterion 6.
std::size_t g_anchored = 0, g_anchored_bad = 0;
double g_worst_excess = 0.0;

void collect_anchored(const std::vector<nlohmann::json>& ds) {
  for (const auto& d : ds)
    for (const auto& c : d["cuts"]) {
      if (!c["anchored"].get<bool>() || !c.contains("t_star_density")) continue;
      ++g_anchored;
      const double excess = c["density"].get<double>() - c["t_star_density"].get<double>();
      g_worst_excess = std::max(g_worst_excess, excess);
      if (excess > 1e-12) ++g_anchored_bad;
    }
}

void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::mt19937_64 pick(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (int windowed = 0; windowed < 2; ++windowed) {
      DensityConfig c;
      c.grid_size = 128;
      c.mode = windowed ? EstimatorMode{SlidingWindow{50 + static_cast<std::size_t>(4950 * u(pick))}}
                        : EstimatorMode{ExponentialForgetting{std::pow(10.0, -4.0 + 3.0 * u(pick))}};
      StreamDensity s(c);
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> x(0.0, 1.0);
      for (int i = 0; i < 100000; ++i) {
        s.ingest(x(rng));
        worst = std::max(worst, std::abs(trapezoid_of(s) - 1.0));
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(1, worst <= 1e-6 && secs < 30.0,
         fmt("mass conservation: max |int f - 1| = %.2e (<= 1e-6) over 40 streams x 1e5 updates, %.1f s (< 30 s)",
             worst, secs));
}

void criterion2() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t w = 50 + static_cast<std::size_t>(450 * u(rng));
    const std::size_t n = 1 + static_cast<std::size_t>(5.0 * static_cast<double>(w) * u(rng));
    DensityConfig c;
    c.grid_size = 128;
    c.mode = SlidingWindow{w};
    c.bandwidth_refresh = 25 + rep;
    StreamDensity s(c);
    const Grid& g = s.grid();
    std::vector<std::pair<double, std::vector<double>>> hist;
    for (std::size_t i = 0; i < n; ++i) {
      double x = u(rng);
      if (rep % 3 == 1) x = x < 0.5 ? 0.3 * x : 1.0 - 0.3 * x;
      if (rep % 3 == 2) x = std::round(x * 10.0) / 10.0;
      hist.emplace_back(x, s.profile().per_point);
      s.ingest(x);
    }
    // Batch recomputation over the retained window with each score's own profile.
    std::vector<double> want(g.size(), 0.0), k(g.size());
    const std::size_t first = n > w ? n - w : 0;
    for (std::size_t i = first; i < n; ++i) {
      for (std::size_t j = 0; j < g.size(); ++j) k[j] = reflected_stencil(g.point(j), hist[i].first, hist[i].second[j]);
      const double m = trapezoid(k, g.spacing());
      for (std::size_t j = 0; j < g.size(); ++j) want[j] += k[j] / m / static_cast<double>(n - first);
    }
    const auto got = s.density().values();
    for (std::size_t j = 0; j < g.size(); ++j) worst = std::max(worst, std::abs(got[j] - want[j]));
  }
  report(2, worst <= 1e-9, fmt("window stream vs batch: max pointwise |diff| = %.2e (<= 1e-9) on 100 sequences", worst));
}

void criteria3and4() {
  const Scenario s = scenario("steady_presets");
  const auto out = run_all(s, run_keys(s, seeds(20)));
  const double dx = 1.0 / static_cast<double>(s.engine.density.grid_size - 1);
  std::vector<double> hit;
  std::map<std::string, std::vector<double>> within;
  for (const auto& r : out) {
    const std::string ba = s.bas[r.key.ba].profile.name;
    within[ba].push_back(adherence_summary(steady(r, s.warmup), s.engine.tolerance).within);
    const auto ds = decisions(r);
    collect_anchored(ds);
    if (ba != "bimodal") continue;
    std::size_t n = 0, ok = 0;
    for (const auto& d : ds) {
      if (d["interval"].get<std::size_t>() < s.warmup) continue;
      ++n;
      bool near = false;
      for (double v : d["valleys"]) near = near || std::abs(v - 0.5) <= 2.0 * dx + 1e-12;
      ok += near ? 1 : 0;
    }
    hit.push_back(static_cast<double>(ok) / static_cast<double>(n));
  }
  const double m3 = median(hit);
  report(3, m3 >= 0.95,
         fmt("bimodal valley within 2 grid spacings of 0.5: median fraction %.3f (>= 0.95), min seed %.3f", m3,
             *std::min_element(hit.begin(), hit.end())));
  bool pass = true;
  std::string detail = "within +/-10% band, median over 20 seeds (>= 0.90):";
  for (const auto& [ba, xs] : within) {
    const double m = median(xs);
    pass = pass && m >= 0.90;
    detail += " " + ba + fmt("=%.3f", m);
  }
  report(4, pass, detail);
}

void criterion5() {
  const Scenario s = scenario("drift_bimodal");
  const auto out = run_all(s, run_keys(s, seeds(20)));
  std::map<std::string, std::vector<double>> jit, trim, within;
  for (const auto& r : out) {
    const auto rows = steady(r, s.warmup);
    const auto st = stability_summary(rows);
    jit[r.key.policy].push_back(st.jitter_median);
    trim[r.key.policy].push_back(st.trim_jitter_median);
    within[r.key.policy].push_back(adherence_summary(rows, s.engine.tolerance).within);
    collect_anchored(decisions(r));
  }
  const double jo = median(jit["ours"]), jw = median(jit["window_quantile"]);
  const double ao = median(within["ours"]), aw = median(within["window_quantile"]);
  // Equal adherence: both policies meet the band criterion at the same level.
  const bool pass = jo < jw && ao >= 0.90 && aw >= 0.90;
  report(5, pass,
         fmt("drift jitter median: ours %.5f < window_quantile %.5f; within-band ours %.3f, window %.3f (both >= 0.90)",
             jo, jw, ao, aw));
  info(fmt("trim-point jitter median: ours %.5f, window_quantile %.5f", median(trim["ours"]),
           median(trim["window_quantile"])));
}

void criterion6() {
  report(6, g_anchored > 0 && g_anchored_bad == 0,
         fmt("anchored deployments with f(cut) <= f(t*): %.0f of %.0f (100%% required), worst excess %.2e",
             static_cast<double>(g_anchored - g_anchored_bad), static_cast<double>(g_anchored), g_worst_excess));
}

void criterion7() {
  const boost::math::beta_distribution<double> truth(8.0, 2.0);
  const double f1 = boost::math::pdf(truth, 1.0);
  std::vector<double> plain, refl;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (int reflect = 0; reflect < 2; ++reflect) {
      DensityConfig c;
      c.grid_size = 512;
      c.mode = ExponentialForgetting{1e-4};
      c.reflect = reflect == 1;
      StreamDensity s(c);
      BAStreamProfile p;
      p.components = {{8.0, 2.0, 1.0}};
      p.rate = 60000;
      p.seed = seed;
      for (double x : generate_interval(p, 0)) s.ingest(x);
      (reflect ? refl : plain).push_back(s.density().values().back());
    }
  }
  const double mp = median(plain), mr = median(refl);
  // Relative error against the analytic value; undefined (infinite) when f(1) = 0.
  const double under = f1 > 0.0 ? (f1 - mp) / f1 : -INFINITY;
  const double err = f1 > 0.0 ? std::abs(mr - f1) / f1 : INFINITY;
  report(7, under >= 0.25 && err <= 0.15,
         fmt("Beta(8,2) at x=1: analytic %.3g, no-reflect %.4f, reflected %.4f; relative under-estimate %.3g (>= 0.25)",
             f1, mp, mr, under) +
             fmt(", reflected relative error %.3g (<= 0.15)", err));
  info("the analytic density at x=1 is 0, so both relative errors are undefined; see the decisions ledger");
}

void criterion8() {
  const Scenario s = scenario("routine_variability");
  const auto out = run_all(s, run_keys(s, seeds(20)));
  std::size_t n = 0, breach = 0;
  for (const auto& r : out)
    for (const auto& row : steady(r, s.warmup)) {
      ++n;
      breach += row.backlog > s.backlog_beta * row.target ? 1 : 0;
    }
  const double pr = static_cast<double>(breach) / static_cast<double>(n);

  // Closed form: B_t = max(0, max_k sum_{i=k..t} (A_i - R_i)).
  bool exact = true;
  const std::vector<std::vector<std::pair<double, double>>> seqs{
      {{5, 3}, {1, 4}, {6, 2}, {0, 0}, {2, 7}},
      {{10, 10}, {11, 10}, {9, 10}, {12, 10}},
      {{0, 5}, {0, 5}, {7, 1}, {1, 1}, {1, 8}, {3, 0}}};
  const std::vector<std::vector<double>> hand{{2, 0, 4, 4, 0}, {0, 1, 0, 2}, {0, 0, 6, 6, 0, 3}};
  for (std::size_t k = 0; k < seqs.size(); ++k) {
    BacklogState st;
    for (std::size_t t = 0; t < seqs[k].size(); ++t) {
      st = backlog_step(st, seqs[k][t].first, seqs[k][t].second);
      double closed = 0.0;
      for (std::size_t a = 0; a <= t; ++a) {
        double sum = 0.0;
        for (std::size_t i = a; i <= t; ++i) sum += seqs[k][i].first - seqs[k][i].second;
        closed = std::max(closed, sum);
      }
      exact = exact && st.backlog == hand[k][t] && st.backlog == closed;
    }
  }
  report(8, pr <= 0.05 && exact,
         fmt("routine variability Pr(B > 0.5 C) = %.4f (<= 0.05) over %.0f intervals; recursion vs closed form: ", pr,
             static_cast<double>(n)) +
             (exact ? "exact" : "MISMATCH"));
}

void criterion9() {
  std::size_t bad = 0, checked = 0;
  for (std::uint64_t stream = 0; stream < 10; ++stream) {
    std::mt19937_64 rng(1000 + stream);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double eps = stream % 2 ? 0.001 : 0.01;
    GKSketch sk(eps);
    std::vector<double> xs;
    xs.reserve(100000);
    for (int i = 0; i < 100000; ++i) {
      double x = u(rng);
      if (stream == 2) x = i / 1e5;
      if (stream == 3) x = 1.0 - i / 1e5;
      if (stream == 4) x = std::round(x * 50.0) / 50.0;
      if (stream == 5) x = x * x * x;
      xs.push_back(x);
      sk.insert(x);
    }
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    for (int k = 0; k <= 1000; ++k) {
      const double q = k / 1000.0;
      const double v = sk.query(q);
      const double want = std::max(1.0, std::ceil(q * n));
      const double lo = static_cast<double>(std::lower_bound(xs.begin(), xs.end(), v) - xs.begin() + 1);
      const double hi = static_cast<double>(std::upper_bound(xs.begin(), xs.end(), v) - xs.begin());
      ++checked;
      if (!(lo <= want + eps * n && hi >= want - eps * n)) ++bad;
    }
  }
  report(9, bad == 0,
         fmt("GK rank guarantee vs exact sort: %.0f violations in %.0f queries (10 streams x 1e5)",
             static_cast<double>(bad), static_cast<double>(checked)));
}

void criterion10() {
  BenchOptions o;
  const RuntimeProfile p = run_bench(o);
  std::string detail = fmt("bench log-log slope %.3f in [0.8, 1.2];", p.slope);
  for (const auto& [g, secs] : p.medians) detail += fmt(" G=%.0f %.0f ns", g, secs * 1e9);
  report(10, p.slope >= 0.8 && p.slope <= 1.2, detail);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void criterion11() {
  const fs::path base = fs::temp_directory_path() / "vthresh_acceptance_det";
  fs::remove_all(base);
  const std::string cfg = std::string(VTHRESH_CONFIGS) + "/two_cut_bursts.json";
  Scenario s = load_scenario(cfg);
  s.outputs.routing = true;
  s.outputs.decisions = true;
  s.outputs.snapshots = {s.warmup};
  for (const char* run : {"a", "b"}) {
    simulate(s, s.seeds, base / run / "out", cfg);
    build_report(base / run / "out", base / run / "report");
  }
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(base / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path twin = base / "b" / fs::relative(e.path(), base / "a");
    if (!fs::exists(twin) || slurp(e.path()) != slurp(twin)) ++differ;
  }
  fs::remove_all(base);
  report(11, files > 0 && differ == 0,
         fmt("two runs of one manifest: %.0f of %.0f output files byte-identical (logs and report)",
             static_cast<double>(files - differ), static_cast<double>(files)));
}

void criterion12() {
  const Scenario s = scenario("valley_vanish");
  const auto out = run_all(s, run_keys(s, seeds(10)));
  double worst = 0.0, worst_over = 0.0, worst_under = 0.0;
  std::size_t stale = 0, steps = 0;
  for (const auto& r : out) {
    for (const auto& row : steady(r, s.warmup)) {
      const double dev = (row.intake - row.target) / row.target;
      worst = std::max(worst, std::abs(dev));
      worst_over = std::max(worst_over, dev);
      worst_under = std::min(worst_under, dev);
    }
    // A deployed anchored cut must sit on a valley the current estimate still has.
    for (const auto& d : decisions(r)) {
      if (d["interval"].get<std::size_t>() < s.warmup) continue;
      ++steps;
      for (const auto& c : d["cuts"]) {
        if (!c["anchored"].get<bool>()) continue;
        bool alive = false;
        for (double v : d["valleys"]) alive = alive || std::abs(v - c["location"].get<double>()) <= s.engine.max_drift;
        stale += alive ? 0 : 1;
      }
    }
  }
  const double bound = 2.0 * s.engine.tolerance;
  report(12, worst <= bound && stale == 0,
         fmt("valley vanish: max |A-C|/C = %.3f (<= %.2f); over %.3f, under %.3f", worst, bound, worst_over,
             worst_under) +
             fmt("; anchored on a dead valley in %.0f of %.0f refreshes", static_cast<double>(stale),
                 static_cast<double>(steps)));
  info(fmt("overshoot-only reading (A <= C (1 + %.2f)): ", bound) + (worst_over <= bound ? "holds" : "violated"));
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criteria3and4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  criterion9();
  criterion10();
  criterion11();
  criterion12();
  std::ofstream os(VTHRESH_RESULTS);
  for (const auto& l : g_lines) os << l << '\n';
  return 0;
}
