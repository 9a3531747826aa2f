#pragma once

// Report over a simulate output tree: metric tables with medians and IQRs over
// seeds, and the three figure series (intake vs capacity, cut trajectories,
// backlog). A pure function of the record files.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "vthresh/error.hpp"
#include "vthresh/metrics.hpp"

namespace vthresh {

/// Raised when the report input directory or one of its files is missing.
class MissingInput : public Error {
 public:
  using Error::Error;
};

struct Spread {
  std::optional<double> median, q25, q75;
  std::size_t missing = 0;  ///< seeds where the statistic was undefined
};

inline Spread spread(const std::vector<std::optional<double>>& xs) {
  Spread s;
  std::vector<double> v;
  for (const auto& x : xs) {
    if (x)
      v.push_back(*x);
    else
      ++s.missing;
  }
  if (!v.empty()) {
    s.median = quantile_type7(v, 0.5);
    s.q25 = quantile_type7(v, 0.25);
    s.q75 = quantile_type7(v, 0.75);
  }
  return s;
}

inline nlohmann::json to_json(const Spread& s) {
  auto opt = [](const std::optional<double>& x) { return x ? nlohmann::json(*x) : nlohmann::json(nullptr); };
  return {{"median", opt(s.median)}, {"q25", opt(s.q25)}, {"q75", opt(s.q75)}, {"missing", s.missing}};
}

struct RunMetrics {
  AdherenceSummary adherence;
  StabilitySummary stability;
  BacklogSummary backlog;
};

struct LoadedRuns {
  nlohmann::json manifest;
  /// (policy, ba) -> seed -> records after warm-up, in interval order
  std::map<std::pair<std::string, std::string>, std::map<std::uint64_t, std::vector<IntervalRecord>>> steady;
  /// (policy, ba) -> seed -> all records
  std::map<std::pair<std::string, std::string>, std::map<std::uint64_t, std::vector<IntervalRecord>>> all;
};

inline LoadedRuns load_runs(const std::filesystem::path& in_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(in_dir)) throw MissingInput("input directory not found: " + in_dir.string());
  std::ifstream mf(in_dir / "manifest.json");
  if (!mf) throw MissingInput("manifest.json not found in " + in_dir.string());
  LoadedRuns runs;
  try {
    runs.manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("manifest.json: malformed: ") + e.what());
  }
  if (!runs.manifest.contains("records") || !runs.manifest.contains("warmup"))
    throw ConfigError("manifest.json: missing 'records' or 'warmup'");
  const auto warmup = runs.manifest.at("warmup").get<std::uint64_t>();
  for (const auto& rel : runs.manifest.at("records")) {
    const fs::path p = in_dir / rel.get<std::string>();
    std::ifstream is(p);
    if (!is) throw MissingInput("record file not found: " + p.string());
    for (auto& r : read_records_csv(is)) {
      auto key = std::make_pair(r.policy, r.ba);
      if (r.interval >= warmup) runs.steady[key][r.seed].push_back(r);
      runs.all[key][r.seed].push_back(std::move(r));
    }
  }
  if (runs.all.empty()) throw EmptyReport("no records found");
  return runs;
}

namespace detail {

inline std::string cell(const std::optional<double>& x) {
  if (!x) return "";
  std::ostringstream os;
  os << std::setprecision(10) << *x;
  return os.str();
}

inline std::string cell(double x) { return cell(std::optional<double>(x)); }

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
  if (!os) throw Error("failed writing " + p.string());
}

}  // namespace detail

/// Builds the report and writes report.json, adherence.csv, stability.csv,
/// backlog.csv, portability.csv, fig6a.csv, fig6b.csv and fig6c.csv.
inline nlohmann::json build_report(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir) {
  using nlohmann::json;
  using detail::cell;
  const LoadedRuns runs = load_runs(in_dir);
  const double beta = runs.manifest.value("backlog_beta", 0.5);
  const double tol = runs.manifest.value("tolerance", 0.10);
  const std::string hash = runs.manifest.value("scenario_hash", "");
  const std::string stamp = std::string("# vthresh ") + runs.manifest.value("tool_version", "") + " scenario " + hash + "\n";

  std::ostringstream adh, stab, back, port, f6a, f6b, f6c;
  for (auto* os : {&adh, &stab, &back, &port, &f6a, &f6b, &f6c}) *os << stamp;
  adh << "policy,ba,seeds,within_median,within_q25,within_q75,mean_abs_median,mean_rel_median\n";
  stab << "policy,ba,seeds,cov_median,cov_q25,cov_q75,cov_missing,jitter_median,jitter_q25,jitter_q75,"
          "jitter_max_median,trim_jitter_median,elasticity_median\n";
  back << "policy,ba,seeds,exceedance_median,exceedance_q25,exceedance_q75,mtbb_median,mtbb_missing\n";
  port << "policy,seeds,dispersion_median,anchored_median,tie_volatility_median\n";

  json table = json::object();
  std::map<std::string, std::map<std::uint64_t, std::vector<IntervalRecord>>> per_policy;
  for (const auto& [key, seeds] : runs.steady) {
    const auto& [policy, ba] = key;
    std::vector<std::optional<double>> within, mabs, mrel, cov, jit, jmax, tjit, el, exc, mtbb;
    for (const auto& [seed, rows] : seeds) {
      const auto a = adherence_summary(rows, tol);
      const auto s = stability_summary(rows);
      const auto b = backlog_summary(rows, beta);
      within.push_back(a.within);
      mabs.push_back(a.mean_abs);
      mrel.push_back(a.mean_rel);
      cov.push_back(s.intake_cov);
      jit.push_back(s.jitter_median);
      jmax.push_back(s.jitter_max);
      tjit.push_back(s.trim_jitter_median);
      el.push_back(s.elasticity_median);
      exc.push_back(b.exceedance);
      mtbb.push_back(b.mtbb);
      auto& dst = per_policy[policy][seed];
      dst.insert(dst.end(), rows.begin(), rows.end());
    }
    const std::size_t n = seeds.size();
    const Spread w = spread(within), c = spread(cov), j = spread(jit), e = spread(exc), m = spread(mtbb);
    adh << policy << ',' << ba << ',' << n << ',' << cell(w.median) << ',' << cell(w.q25) << ',' << cell(w.q75)
        << ',' << cell(spread(mabs).median) << ',' << cell(spread(mrel).median) << '\n';
    stab << policy << ',' << ba << ',' << n << ',' << cell(c.median) << ',' << cell(c.q25) << ',' << cell(c.q75)
         << ',' << c.missing << ',' << cell(j.median) << ',' << cell(j.q25) << ',' << cell(j.q75) << ','
         << cell(spread(jmax).median) << ',' << cell(spread(tjit).median) << ',' << cell(spread(el).median) << '\n';
    back << policy << ',' << ba << ',' << n << ',' << cell(e.median) << ',' << cell(e.q25) << ',' << cell(e.q75)
         << ',' << cell(m.median) << ',' << m.missing << '\n';
    table[policy][ba] = {{"seeds", n},
                         {"adherence", {{"within", to_json(w)},
                                        {"mean_abs", to_json(spread(mabs))},
                                        {"mean_rel", to_json(spread(mrel))}}},
                         {"stability", {{"intake_cov", to_json(c)},
                                        {"jitter_median", to_json(j)},
                                        {"jitter_max", to_json(spread(jmax))},
                                        {"trim_jitter_median", to_json(spread(tjit))},
                                        {"elasticity_median", to_json(spread(el))}}},
                         {"backlog", {{"exceedance", to_json(e)}, {"mtbb", to_json(m)}}}};
  }

  json portability = json::object();
  for (const auto& [policy, seeds] : per_policy) {
    std::vector<std::optional<double>> disp, anch, vol;
    for (const auto& [seed, rows] : seeds) {
      const auto p = portability_summary(rows);
      disp.push_back(p.elasticity_dispersion);
      anch.push_back(p.anchored);
      vol.push_back(p.tie_volatility);
    }
    port << policy << ',' << seeds.size() << ',' << cell(spread(disp).median) << ',' << cell(spread(anch).median)
         << ',' << cell(spread(vol).median) << '\n';
    portability[policy] = {{"seeds", seeds.size()},
                           {"elasticity_dispersion", to_json(spread(disp))},
                           {"anchored", to_json(spread(anch))},
                           {"tie_volatility", to_json(spread(vol))}};
  }

  // Figure series: per (policy, BA, interval), spread over seeds.
  f6a << "policy,ba,interval,intake_median,intake_q25,intake_q75,target_median,band_lo,band_hi\n";
  f6b << "policy,ba,interval,cut_median,cut_q25,cut_q75,trim_median,t_star_median\n";
  f6c << "policy,ba,interval,backlog_median,backlog_q25,backlog_q75,threshold_median\n";
  for (const auto& [key, seeds] : runs.all) {
    std::map<std::uint64_t, std::vector<const IntervalRecord*>> by_t;
    for (const auto& [seed, rows] : seeds)
      for (const auto& r : rows) by_t[r.interval].push_back(&r);
    for (const auto& [t, rs] : by_t) {
      std::vector<std::optional<double>> a, c, cut, trim, ts, b, th;
      for (const auto* r : rs) {
        a.push_back(r->intake);
        c.push_back(r->target);
        cut.push_back(r->cut);
        trim.push_back(r->trim);
        ts.push_back(r->t_star);
        b.push_back(r->backlog);
        th.push_back(beta * r->target);
      }
      const Spread sa = spread(a), sc = spread(c), scut = spread(cut), sb = spread(b);
      const std::string head = key.first + ',' + key.second + ',' + std::to_string(t) + ',';
      f6a << head << cell(sa.median) << ',' << cell(sa.q25) << ',' << cell(sa.q75) << ',' << cell(sc.median) << ','
          << cell(*sc.median * (1.0 - tol)) << ',' << cell(*sc.median * (1.0 + tol)) << '\n';
      f6b << head << cell(scut.median) << ',' << cell(scut.q25) << ',' << cell(scut.q75) << ','
          << cell(spread(trim).median) << ',' << cell(spread(ts).median) << '\n';
      f6c << head << cell(sb.median) << ',' << cell(sb.q25) << ',' << cell(sb.q75) << ','
          << cell(spread(th).median) << '\n';
    }
  }

  json report{{"tool_version", runs.manifest.value("tool_version", "")},
              {"scenario_hash", hash},
              {"scenario", runs.manifest.value("scenario", "")},
              {"warmup", runs.manifest.at("warmup")},
              {"tolerance", tol},
              {"backlog_beta", beta},
              {"quantile_convention", "linear interpolation, inclusive (type 7)"},
              {"metrics", table},
              {"portability", portability},
              {"tables", {"adherence.csv", "stability.csv", "backlog.csv", "portability.csv"}},
              {"figures", {{"fig6a", "fig6a.csv"}, {"fig6b", "fig6b.csv"}, {"fig6c", "fig6c.csv"}}}};

  std::filesystem::create_directories(out_dir);
  detail::write_file(out_dir / "adherence.csv", adh.str());
  detail::write_file(out_dir / "stability.csv", stab.str());
  detail::write_file(out_dir / "backlog.csv", back.str());
  detail::write_file(out_dir / "portability.csv", port.str());
  detail::write_file(out_dir / "fig6a.csv", f6a.str());
  detail::write_file(out_dir / "fig6b.csv", f6b.str());
  detail::write_file(out_dir / "fig6c.csv", f6c.str());
  detail::write_file(out_dir / "report.json", report.dump(2) + "\n");
  return report;
}

}  // namespace vthresh
