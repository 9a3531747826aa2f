#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "vthresh/capacity.hpp"
#include "vthresh/density.hpp"
#include "vthresh/error.hpp"

namespace vthresh {

/// Queues in increasing priority order.
enum class QueueLabel : int { hibernation = 0, standard = 1, escalation = 2 };

constexpr std::string_view to_string(QueueLabel q) noexcept {
  switch (q) {
    case QueueLabel::escalation:
      return "escalation";
    case QueueLabel::standard:
      return "standard";
    case QueueLabel::hibernation:
      return "hibernation";
  }
  return "?";
}

struct RoutingDecision {
  double score = 0.0;
  QueueLabel queue = QueueLabel::hibernation;
  bool taken = false;          ///< false when behind the band's trim point
  std::uint64_t interval_id = 0;
  std::uint64_t arrival = 0;   ///< arrival order within the interval
};

/// Routing rule, closed on the high side: a score exactly at a cut goes to the
/// higher-priority queue. Without cuts everything hibernates.
inline QueueLabel route(double score, const DeployedCuts& cuts) {
  if (!(score >= 0.0 && score <= 1.0)) throw DomainError("score outside [0,1]: " + std::to_string(score));
  if (cuts.empty()) return QueueLabel::hibernation;
  if (score >= cuts.escalation().location) return QueueLabel::escalation;
  if (cuts.two_cut() && score >= cuts.cuts.front().location) return QueueLabel::standard;
  return QueueLabel::hibernation;
}

inline RoutingDecision route_event(double score, const DeployedCuts& cuts, std::uint64_t interval_id,
                                   std::uint64_t arrival = 0) {
  RoutingDecision d;
  d.score = score;
  d.queue = route(score, cuts);
  d.interval_id = interval_id;
  d.arrival = arrival;
  switch (d.queue) {
    case QueueLabel::escalation:
      d.taken = score >= cuts.escalation().trim;
      break;
    case QueueLabel::standard:
      d.taken = score >= cuts.cuts.front().trim;
      break;
    case QueueLabel::hibernation:
      d.taken = false;
      break;
  }
  return d;
}

struct QueueCounts {
  double escalation = 0.0;
  double standard = 0.0;
  double hibernation = 0.0;
};

/// Expected per-queue volumes N * U(...) under the current density.
inline QueueCounts expected_counts(const TailMass& curve, const DeployedCuts& cuts, double volume) {
  QueueCounts q;
  if (cuts.empty()) {
    q.hibernation = volume;
    return q;
  }
  const double total = curve.total();
  const double u_up = curve(cuts.escalation().location);
  const double u_low = cuts.two_cut() ? curve(cuts.cuts.front().location) : u_up;
  q.escalation = volume * u_up;
  q.standard = volume * (u_low - u_up);
  q.hibernation = volume * (total - u_low);
  return q;
}

/// Stable descending sort by score; equal scores keep arrival order.
inline std::vector<RoutingDecision> within_queue_order(std::vector<RoutingDecision> decisions) {
  std::stable_sort(decisions.begin(), decisions.end(),
                   [](const RoutingDecision& a, const RoutingDecision& b) { return a.score > b.score; });
  return decisions;
}

inline void write_routing_header(std::ostream& os) { os << "interval_id,score,queue,taken\n"; }

inline void write_routing_row(std::ostream& os, const RoutingDecision& d) {
  os << d.interval_id << ',' << d.score << ',' << to_string(d.queue) << ',' << (d.taken ? 1 : 0) << '\n';
}

}  // namespace vthresh
