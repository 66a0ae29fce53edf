#pragma once

// Accuracy metrics against ground truth, lane-change match classification and
// the two non-integrated baselines (pure car-following chain, field integration).

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "trajfuse/core.hpp"
#include "trajfuse/fusion.hpp"
#include "trajfuse/ingest.hpp"
#include "trajfuse/macro_state.hpp"
#include "trajfuse/micro_candidates.hpp"

namespace trajfuse {

struct VehicleError {
  VehicleId vehicle_id;
  std::size_t samples = 0;
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;
};

struct AccuracyReport {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  ///< percent
  std::size_t samples = 0;
  std::vector<VehicleError> per_vehicle;
};

namespace detail {

struct ErrorSums {
  std::size_t n = 0;
  double abs = 0.0;
  double sq = 0.0;
  std::size_t n_pct = 0;
  double pct = 0.0;

  void add(double err, double denom) {
    ++n;
    abs += std::abs(err);
    sq += err * err;
    if (denom > 0.0) {
      ++n_pct;
      pct += std::abs(err) / denom * 100.0;
    }
  }
  [[nodiscard]] double mae() const { return n ? abs / n : 0.0; }
  [[nodiscard]] double rmse() const { return n ? std::sqrt(sq / n) : 0.0; }
  [[nodiscard]] double mape() const { return n_pct ? pct / n_pct : 0.0; }
};

}  // namespace detail

/// Pooled MAE, RMSE and MAPE at the truth timestamps inside each
/// reconstruction's window. MAPE measures positions from x_origin and skips
/// terms whose true position is not past it.
inline AccuracyReport score_accuracy(const std::map<VehicleId, Trajectory>& recon, const TrajectorySet& truth,
                                     double x_origin) {
  AccuracyReport report;
  detail::ErrorSums pooled;
  for (const auto& [id, r] : recon) {
    auto it = truth.trajectories.find(id);
    if (it == truth.trajectories.end() || r.empty()) continue;
    detail::ErrorSums mine;
    for (const auto& p : it->second.points) {
      if (!r.covers(p.time)) continue;
      const double err = r.position_at(p.time) - p.position;
      mine.add(err, p.position - x_origin);
      pooled.add(err, p.position - x_origin);
    }
    if (mine.n == 0) continue;
    report.per_vehicle.push_back({id, mine.n, mine.mae(), mine.rmse(), mine.mape()});
  }
  if (pooled.n == 0) throw ValidationError("no common vehicle samples between reconstruction and truth");
  report.mae = pooled.mae();
  report.rmse = pooled.rmse();
  report.mape = pooled.mape();
  report.samples = pooled.n;
  return report;
}

/// Reconstructed ids with no truth trajectory.
inline std::vector<VehicleId> orphan_ids(const std::map<VehicleId, Trajectory>& recon, const TrajectorySet& truth) {
  std::vector<VehicleId> out;
  for (const auto& [id, r] : recon) {
    if (!truth.contains(id)) out.push_back(id);
  }
  return out;
}

struct TruthLc {
  VehicleId vehicle_id;
  double lc_time = 0.0;
  double lc_position = 0.0;
  LaneId origin_lane = 0;
  LaneId target_lane = 0;
};

/// Estimated LC of one vehicle; paired == false means no consistent LC point.
struct LcEstimate {
  VehicleId vehicle_id;
  bool paired = false;
  double lc_time = 0.0;
  double lc_position = 0.0;
};

enum class MatchClass { well, moderate, failed };

inline const char* to_string(MatchClass m) {
  switch (m) {
    case MatchClass::well: return "well";
    case MatchClass::moderate: return "moderate";
    case MatchClass::failed: return "failed";
  }
  return "?";
}

struct LcMatch {
  VehicleId vehicle_id;
  MatchClass match = MatchClass::failed;
  std::optional<double> distance;
};

struct LcMatchReport {
  std::size_t well = 0;
  std::size_t moderate = 0;
  std::size_t failed = 0;
  std::vector<LcMatch> matches;

  [[nodiscard]] std::size_t total() const { return well + moderate + failed; }
  [[nodiscard]] double success_rate() const {
    return total() ? 100.0 * static_cast<double>(well + moderate) / static_cast<double>(total()) : 0.0;
  }
};

/// Classifies each estimate whose vehicle changes lane in the truth.
inline LcMatchReport classify_lc_matches(const std::vector<LcEstimate>& estimates, const std::vector<TruthLc>& truth,
                                         double threshold = 30.0) {
  std::map<VehicleId, const TruthLc*> by_id;
  for (const auto& t : truth) by_id[t.vehicle_id] = &t;
  LcMatchReport report;
  for (const auto& e : estimates) {
    auto it = by_id.find(e.vehicle_id);
    if (it == by_id.end()) continue;
    LcMatch m{e.vehicle_id, MatchClass::failed, std::nullopt};
    if (e.paired) {
      m.distance = std::abs(e.lc_position - it->second->lc_position);
      m.match = *m.distance < threshold ? MatchClass::well : MatchClass::moderate;
    }
    (m.match == MatchClass::well ? report.well : m.match == MatchClass::moderate ? report.moderate : report.failed)++;
    report.matches.push_back(std::move(m));
  }
  return report;
}

inline std::vector<LcEstimate> estimates_from(const std::vector<LcOutcome>& outcomes) {
  std::vector<LcEstimate> out;
  for (const auto& o : outcomes) {
    LcEstimate e{o.vehicle_id, o.status == LcStatus::paired && o.decision.has_value(), 0.0, 0.0};
    if (e.paired) {
      e.lc_time = o.decision->lc_time;
      e.lc_position = o.decision->lc_position;
    }
    out.push_back(e);
  }
  return out;
}

/// LC point implied by a trajectory: the first sample on a new lane.
inline std::optional<LcEstimate> lane_switch_of(const Trajectory& traj) {
  for (std::size_t k = 1; k < traj.size(); ++k) {
    if (traj.points[k].lane != traj.points[k - 1].lane) {
      return LcEstimate{traj.vehicle_id, true, traj.points[k].time, traj.points[k].position};
    }
  }
  return std::nullopt;
}

/// Truth LC events: the first lane switch of each truth trajectory.
inline std::vector<TruthLc> truth_lc_events(const TrajectorySet& truth) {
  std::vector<TruthLc> out;
  for (const auto& [id, traj] : truth.trajectories) {
    for (std::size_t k = 1; k < traj.size(); ++k) {
      if (traj.points[k].lane != traj.points[k - 1].lane) {
        out.push_back({id, traj.points[k].time, traj.points[k].position, traj.points[k - 1].lane, traj.points[k].lane});
        break;
      }
    }
  }
  return out;
}

/// Each hidden vehicle's forward car-following chain, unfused.
inline std::map<VehicleId, Trajectory> baseline_micro(const std::vector<std::vector<CandidateSet>>& candidates) {
  std::map<VehicleId, Trajectory> out;
  for (const auto& region : candidates) {
    for (const auto& set : region) {
      if (set.cff && !out.count(set.vehicle_id)) out.emplace(set.vehicle_id, *set.cff);
    }
  }
  return out;
}

struct MacroBaseline {
  std::map<VehicleId, Trajectory> trajectories;
  std::vector<std::string> diagnostics;
};

/// Integrates x(t+dt) = x(t) + v(x, t) dt on the field of the upstream
/// detection lane, from the upstream crossing to x_down. Stalls past the
/// field's time hull truncate the trajectory.
inline MacroBaseline baseline_macro(const std::map<LaneId, VelocityField>& fields, const DetectionLog& log,
                                    const SegmentGeometry& geometry, const std::vector<VehicleId>& vehicles,
                                    double dt) {
  if (!(dt > 0.0)) throw ValidationError("baseline_macro: dt must be positive");
  MacroBaseline out;
  for (const auto& id : vehicles) {
    const auto* up = log.find(id, Station::upstream);
    if (!up) {
      out.diagnostics.push_back("vehicle " + id + ": no upstream detection");
      continue;
    }
    auto f = fields.find(up->lane);
    if (f == fields.end()) {
      out.diagnostics.push_back("vehicle " + id + ": no field for lane " + std::to_string(up->lane));
      continue;
    }
    const auto& field = f->second;
    Trajectory traj{id, {{up->arrival_time, geometry.x_up, up->lane}}, dt};
    double x = geometry.x_up;
    double t = up->arrival_time;
    while (x < geometry.x_down) {
      if (t > field.t_max()) {
        out.diagnostics.push_back("vehicle " + id + ": integration stalled at x=" + std::to_string(x));
        break;
      }
      x += std::max(0.0, query_field_clamped(field, x, t)) * dt;
      t += dt;
      traj.points.push_back({t, x, up->lane});
    }
    out.trajectories.emplace(id, std::move(traj));
  }
  return out;
}

/// (other - proposed) / proposed * 100.
inline double percent_delta(double proposed, double other) {
  if (proposed == 0.0) return other == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (other - proposed) / proposed * 100.0;
}

struct ComparisonRow {
  double penetration = 0.0;
  AccuracyReport proposed, micro, macro;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
};

}  // namespace trajfuse
