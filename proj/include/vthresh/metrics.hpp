#pragma once

// Operational metrics over per-interval records: capacity adherence, intake
// and cut stability, backlog exceedance, cross-BA portability, and the
// log-log runtime slope. Quantiles use linear interpolation between order
// statistics (inclusive, "type 7").

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vthresh/error.hpp"

namespace vthresh {

class EmptyReport : public Error {
 public:
  using Error::Error;
};

/// One row per (policy, BA, seed, interval).
struct IntervalRecord {
  std::string policy;
  std::string ba;
  std::uint64_t seed = 0;
  std::uint64_t interval = 0;
  double volume = 0.0;        ///< N_t, scores arriving this interval
  double intake = 0.0;        ///< A_t, cases taken into the top queue
  double target = 0.0;        ///< C_t
  double cut = 0.0;           ///< deployed top-queue boundary
  double cut_std = 0.0;       ///< deployed Standard boundary (two-cut mode, else 0)
  double trim = 0.0;          ///< within-band trim point
  double t_star = 0.0;        ///< capacity-true quantile cut
  bool anchored = false;
  double elasticity = 0.0;    ///< N * f_hat at the deployed cut
  double backlog = 0.0;       ///< B_t after this interval
  double review = 0.0;        ///< R_t
  bool hold = false;          ///< refresh held for insufficient n_eff
  double n_eff = 0.0;
  double h0 = 0.0;
  std::size_t valleys = 0;
  std::size_t at_atom = 0;    ///< scores sitting on the score atom at the trim
  std::size_t tie_flips = 0;  ///< of those, intake status changed since last interval
  double update_ns = 0.0;     ///< median per-event update time
};

inline const char* kRecordHeader =
    "policy,ba,seed,interval,volume,intake,target,cut,cut_std,trim,t_star,anchored,elasticity,"
    "backlog,review,hold,n_eff,h0,valleys,at_atom,tie_flips,update_ns";

inline void write_records_csv(std::ostream& os, std::span<const IntervalRecord> rows, bool timing = false) {
  os << kRecordHeader << '\n';
  const auto old = os.precision(17);
  for (const auto& r : rows)
    os << r.policy << ',' << r.ba << ',' << r.seed << ',' << r.interval << ',' << r.volume << ',' << r.intake << ','
       << r.target << ',' << r.cut << ',' << r.cut_std << ',' << r.trim << ',' << r.t_star << ','
       << (r.anchored ? 1 : 0) << ',' << r.elasticity << ',' << r.backlog << ',' << r.review << ','
       << (r.hold ? 1 : 0) << ',' << r.n_eff << ',' << r.h0 << ',' << r.valleys << ',' << r.at_atom << ','
       << r.tie_flips << ',' << (timing ? r.update_ns : 0.0) << '\n';
  os.precision(old);
}

inline std::vector<IntervalRecord> read_records_csv(std::istream& is) {
  std::string line;
  // Leading '#' lines carry provenance (tool version, scenario hash).
  while (std::getline(is, line) && !line.empty() && line[0] == '#') {
  }
  if (line != kRecordHeader) throw ConfigError("record file has an unexpected header");
  std::vector<IntervalRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 22) throw ConfigError("record row has " + std::to_string(f.size()) + " fields");
    IntervalRecord r;
    std::size_t i = 0;
    r.policy = f[i++];
    r.ba = f[i++];
    r.seed = std::stoull(f[i++]);
    r.interval = std::stoull(f[i++]);
    r.volume = std::stod(f[i++]);
    r.intake = std::stod(f[i++]);
    r.target = std::stod(f[i++]);
    r.cut = std::stod(f[i++]);
    r.cut_std = std::stod(f[i++]);
    r.trim = std::stod(f[i++]);
    r.t_star = std::stod(f[i++]);
    r.anchored = f[i++] == "1";
    r.elasticity = std::stod(f[i++]);
    r.backlog = std::stod(f[i++]);
    r.review = std::stod(f[i++]);
    r.hold = f[i++] == "1";
    r.n_eff = std::stod(f[i++]);
    r.h0 = std::stod(f[i++]);
    r.valleys = std::stoull(f[i++]);
    r.at_atom = std::stoull(f[i++]);
    r.tie_flips = std::stoull(f[i++]);
    r.update_ns = std::stod(f[i++]);
    out.push_back(std::move(r));
  }
  return out;
}

/// Linear-interpolation quantile of an unsorted sample (inclusive convention).
inline double quantile_type7(std::vector<double> xs, double p) {
  if (xs.empty()) throw EmptyReport("quantile of an empty sample");
  std::sort(xs.begin(), xs.end());
  const double h = (static_cast<double>(xs.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

inline double median(std::vector<double> xs) { return quantile_type7(std::move(xs), 0.5); }

inline double iqr(const std::vector<double>& xs) { return quantile_type7(xs, 0.75) - quantile_type7(xs, 0.25); }

struct AdherenceSummary {
  double mean_abs = 0.0;
  double mean_rel = 0.0;
  double within = 0.0;  ///< fraction of intervals with |A - C| / C <= tolerance
};

inline AdherenceSummary adherence_summary(std::span<const IntervalRecord> rows, double tolerance = 0.10) {
  if (rows.empty()) throw EmptyReport("adherence over no records");
  AdherenceSummary s;
  std::size_t inside = 0;
  for (const auto& r : rows) {
    if (!(r.target > 0.0)) throw DomainError("adherence needs positive targets");
    const double dev = std::abs(r.intake - r.target);
    s.mean_abs += dev;
    s.mean_rel += dev / r.target;
    // Small slack so that a deviation of exactly the tolerance counts as inside.
    if (dev / r.target <= tolerance + 1e-12) ++inside;
  }
  const double n = static_cast<double>(rows.size());
  s.mean_abs /= n;
  s.mean_rel /= n;
  s.within = static_cast<double>(inside) / n;
  return s;
}

struct StabilitySummary {
  std::optional<double> intake_cov;  ///< empty when mean intake is 0
  std::vector<double> jitter;        ///< |c_t - c_{t-1}| of the deployed cut
  double jitter_median = 0.0;
  double jitter_max = 0.0;
  double trim_jitter_median = 0.0;   ///< same for the trim point
  double elasticity_median = 0.0;
};

inline StabilitySummary stability_summary(std::span<const IntervalRecord> rows) {
  if (rows.empty()) throw EmptyReport("stability over no records");
  StabilitySummary s;
  double mean = 0.0;
  for (const auto& r : rows) mean += r.intake;
  mean /= static_cast<double>(rows.size());
  if (mean > 0.0) {
    double var = 0.0;
    for (const auto& r : rows) var += (r.intake - mean) * (r.intake - mean);
    var /= static_cast<double>(rows.size());
    s.intake_cov = std::sqrt(var) / mean;
  }
  std::vector<double> trim_jitter, el;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    el.push_back(rows[i].elasticity);
    if (i == 0) continue;
    s.jitter.push_back(std::abs(rows[i].cut - rows[i - 1].cut));
    trim_jitter.push_back(std::abs(rows[i].trim - rows[i - 1].trim));
  }
  if (!s.jitter.empty()) {
    s.jitter_median = median(s.jitter);
    s.jitter_max = *std::max_element(s.jitter.begin(), s.jitter.end());
    s.trim_jitter_median = median(trim_jitter);
  }
  s.elasticity_median = median(el);
  return s;
}

struct BacklogSummary {
  double exceedance = 0.0;
  std::optional<double> mtbb;  ///< empty with fewer than two breach onsets
  std::size_t onsets = 0;
};

/// Breach at interval t means B_t > beta * C, with C = c_ref when given,
/// else that interval's target. MTBB is the mean gap between breach onsets.
inline BacklogSummary backlog_summary(std::span<const IntervalRecord> rows, double beta,
                                      std::optional<double> c_ref = std::nullopt) {
  if (rows.empty()) throw EmptyReport("backlog over no records");
  BacklogSummary s;
  std::vector<std::size_t> onset_at;
  bool prev = false;
  std::size_t breaches = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double c = c_ref.value_or(rows[i].target);
    const bool breach = rows[i].backlog > beta * c;
    if (breach) ++breaches;
    if (breach && !prev) onset_at.push_back(i);
    prev = breach;
  }
  s.exceedance = static_cast<double>(breaches) / static_cast<double>(rows.size());
  s.onsets = onset_at.size();
  if (onset_at.size() >= 2)
    s.mtbb = static_cast<double>(onset_at.back() - onset_at.front()) / static_cast<double>(onset_at.size() - 1);
  return s;
}

struct PortabilitySummary {
  double elasticity_dispersion = 0.0;  ///< IQR of per-BA median elasticities
  double anchored = 0.0;               ///< anchored intervals / all intervals
  double tie_volatility = 0.0;         ///< flips / scores on the trim atom
};

inline PortabilitySummary portability_summary(std::span<const IntervalRecord> rows) {
  if (rows.empty()) throw EmptyReport("portability over no records");
  std::map<std::string, std::vector<double>> per_ba;
  std::size_t anchored = 0, at_atom = 0, flips = 0;
  for (const auto& r : rows) {
    per_ba[r.ba].push_back(r.elasticity);
    anchored += r.anchored ? 1 : 0;
    at_atom += r.at_atom;
    flips += r.tie_flips;
  }
  std::vector<double> medians;
  for (auto& [ba, el] : per_ba) medians.push_back(median(el));
  PortabilitySummary s;
  s.elasticity_dispersion = iqr(medians);
  s.anchored = static_cast<double>(anchored) / static_cast<double>(rows.size());
  s.tie_volatility = at_atom ? static_cast<double>(flips) / static_cast<double>(at_atom) : 0.0;
  return s;
}

struct RuntimeProfile {
  std::vector<std::pair<double, double>> medians;  ///< (G, median seconds per event)
  double slope = 0.0;                              ///< least-squares slope on log-log axes
};

/// Fits median per-event time against G on log-log axes.
inline RuntimeProfile runtime_profile(std::span<const std::pair<std::size_t, std::vector<double>>> timings) {
  std::map<std::size_t, std::vector<double>> by_g;
  for (const auto& [g, ts] : timings) {
    if (ts.empty()) throw InsufficientData("no timings for grid size " + std::to_string(g));
    by_g[g].insert(by_g[g].end(), ts.begin(), ts.end());
  }
  if (by_g.size() < 3) throw InsufficientData("runtime profile needs at least three grid sizes");
  RuntimeProfile p;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (auto& [g, ts] : by_g) {
    const double m = median(ts);
    if (!(m > 0.0)) throw InsufficientData("nonpositive median timing");
    p.medians.emplace_back(static_cast<double>(g), m);
    const double x = std::log(static_cast<double>(g)), y = std::log(m);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(by_g.size());
  p.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return p;
}

}  // namespace vthresh
