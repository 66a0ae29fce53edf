#pragma once

// Two-stage fusion. Stage 1 merges each forward/inverse candidate pair with
// per-vehicle weights that decrease strictly down the platoon, chosen by a
// layered shortest-path search against the velocity field. Stage 2 blends the
// upstream- and downstream-anchored results of lane-keepers and places the
// lane-change point of lane-changing vehicles.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trajfuse/core.hpp"
#include "trajfuse/ingest.hpp"
#include "trajfuse/macro_state.hpp"
#include "trajfuse/micro_candidates.hpp"

namespace trajfuse {

class InfeasibleWeightGrid : public Error {
public:
  using Error::Error;
};

class UnmatchableLc : public Error {
public:
  using Error::Error;
};

class SafetyInfeasible : public Error {
public:
  using Error::Error;
};

struct FusionConfig {
  double v_threshold = 0.1;   ///< m/s, keeps the LC objective numerator positive
  double dis_threshold = 0.5; ///< m, keeps the LC objective denominator positive
  double l_safe = 5.0;        ///< m, minimum headway around an LC point
  double weight_grid_step = 0.01;

  [[nodiscard]] std::size_t weight_levels() const {
    return static_cast<std::size_t>(std::llround(1.0 / weight_grid_step));
  }

  void validate() const {
    if (!(v_threshold > 0.0) || !(dis_threshold > 0.0) || !(l_safe > 0.0) || !(weight_grid_step > 0.0)) {
      throw ValidationError("fusion: thresholds, l_safe and weight_grid_step must be positive");
    }
    const double n = 1.0 / weight_grid_step;
    if (weight_grid_step > 1.0 || std::abs(n - std::round(n)) > 1e-9 * n) {
      throw ValidationError("fusion: weight_grid_step must divide 1 evenly");
    }
  }
};

/// Point-wise convex combination w*c1 + (1-w)*c2 on c1's samples inside the
/// common window.
inline Trajectory fuse_pair(const Trajectory& c1, const Trajectory& c2, double w) {
  if (w < 0.0 || w > 1.0) throw ValidationError("fusion weight outside [0, 1]");
  const auto window = common_window(c1, c2);
  if (!window) throw WindowError("candidates " + c1.vehicle_id + " have disjoint windows");
  Trajectory out{c1.vehicle_id, {}, c1.sample_interval};
  for (const auto& p : c1.points) {
    if (p.time < window->first - kTimeEps || p.time > window->second + kTimeEps) continue;
    out.points.push_back({p.time, w * p.position + (1.0 - w) * c2.position_at(p.time), p.lane});
  }
  return out;
}

/// Squared speed deviation of the fused pair from the field along its path.
inline double pair_cost(const Trajectory& c1, const Trajectory& c2, double w, const VelocityField& field) {
  const auto fused = fuse_pair(c1, c2, w);
  const auto speeds = velocity_profile(fused);
  double cost = 0.0;
  for (std::size_t k = 0; k < fused.size(); ++k) {
    const double d = speeds[k].speed - query_field_clamped(field, fused.points[k].position, fused.points[k].time);
    cost += d * d;
  }
  return cost;
}

struct PassMember {
  VehicleId vehicle_id;
  const Trajectory* primary = nullptr;    ///< CFF (upstream pass) or CFB (downstream pass)
  const Trajectory* secondary = nullptr;  ///< ICFF or ICFB
};

struct WeightAssignment {
  std::vector<VehicleId> vehicle_ids;
  std::vector<double> weights;  ///< primary weight; the secondary gets 1 - w
  double objective = 0.0;
};

/// Minimises the summed cost over weight chains w_1 > w_2 > ... > w_N on the
/// grid {0, step, ..., 1}. Layer n holds vehicle n; an edge joins level j of
/// layer n to any lower level of layer n+1. Among equal-cost chains the
/// lexicographically largest weights win.
inline WeightAssignment solve_weights_from_costs(std::span<const std::vector<double>> costs) {
  WeightAssignment out;
  const std::size_t n = costs.size();
  if (n == 0) return out;
  const std::size_t levels = costs.front().size();
  if (levels < n) {
    throw InfeasibleWeightGrid("weight grid has " + std::to_string(levels) + " levels for " + std::to_string(n) +
                               " vehicles; use a finer weight_grid_step");
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Costs closer than this count as tied so the tie-break is stable under rounding.
  auto clearly_less = [](double a, double b) { return a < b - 1e-12 * (1.0 + std::abs(b)); };

  // suffix[i][k]: best cost of vehicles i..n-1 with vehicle i at level k.
  std::vector<std::vector<double>> suffix(n, std::vector<double>(levels, inf));
  suffix[n - 1] = costs[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) {
    double prefix_min = inf;  // min over levels j < k of suffix[i+1][j]
    for (std::size_t k = 0; k < levels; ++k) {
      if (prefix_min < inf) suffix[i][k] = costs[i][k] + prefix_min;
      prefix_min = std::min(prefix_min, suffix[i + 1][k]);
    }
  }
  std::vector<std::size_t> chosen(n);
  std::size_t upper = levels;  // exclusive bound for the current layer
  for (std::size_t i = 0; i < n; ++i) {
    double best = inf;
    std::size_t arg = levels;
    for (std::size_t k = upper; k-- > 0;) {
      if (suffix[i][k] == inf) continue;
      if (arg == levels || clearly_less(suffix[i][k], best)) {
        best = suffix[i][k];
        arg = k;
      }
    }
    if (arg == levels) throw InfeasibleWeightGrid("no monotone weight chain; use a finer weight_grid_step");
    chosen[i] = arg;
    upper = arg;
  }
  out.objective = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.weights.push_back(static_cast<double>(chosen[i]) / static_cast<double>(levels - 1));
    out.objective += costs[i][chosen[i]];
  }
  return out;
}

inline WeightAssignment solve_weights(std::span<const PassMember> members, const VelocityField& field,
                                      const FusionConfig& config) {
  config.validate();
  const std::size_t levels = config.weight_levels() + 1;
  if (levels < members.size()) {
    throw InfeasibleWeightGrid("weight grid has " + std::to_string(levels) + " levels for " +
                               std::to_string(members.size()) + " vehicles; use a finer weight_grid_step");
  }
  std::vector<std::vector<double>> costs(members.size(), std::vector<double>(levels));
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto& m = members[i];
    if (!m.primary || !m.secondary) throw ValidationError("vehicle " + m.vehicle_id + " lacks a candidate pair");
    for (std::size_t k = 0; k < levels; ++k) {
      costs[i][k] = pair_cost(*m.primary, *m.secondary, static_cast<double>(k) / (levels - 1), field);
    }
  }
  auto out = solve_weights_from_costs(costs);
  for (const auto& m : members) out.vehicle_ids.push_back(m.vehicle_id);
  return out;
}

/// X = (t/T)^2 * X_down + (1 - (t/T)^2) * X_up over the shared window,
/// t re-indexed from the window start.
inline Trajectory blend_up_down(const Trajectory& up, const Trajectory& down) {
  const auto window = common_window(up, down);
  if (!window) throw WindowError("up/down trajectories of " + up.vehicle_id + " have disjoint windows");
  const auto [lo, hi] = *window;
  const double span = hi - lo;
  Trajectory out{up.vehicle_id, {}, up.sample_interval};
  for (const auto& p : up.points) {
    if (p.time < lo - kTimeEps || p.time > hi + kTimeEps) continue;
    const double r = span > 0.0 ? std::clamp((p.time - lo) / span, 0.0, 1.0) : 0.0;
    const double a = r * r;
    out.points.push_back({p.time, a * down.position_at(p.time) + (1.0 - a) * p.position, p.lane});
  }
  return out;
}

struct LcPoint {
  double time = 0.0;
  double position = 0.0;
};

struct FeasibleArea {
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<LcPoint> points;  ///< midpoints of the two candidates at each common step
};

/// Common time steps of the origin-lane (upstream-anchored) and target-lane
/// (downstream-anchored) trajectories, restricted to steps where both lie
/// inside the segment when a geometry is given.
inline FeasibleArea feasible_area(const Trajectory& up, const Trajectory& down,
                                  const std::optional<SegmentGeometry>& geometry = std::nullopt) {
  const auto window = common_window(up, down);
  if (!window) throw UnmatchableLc("vehicle " + up.vehicle_id + ": candidate windows do not overlap");
  FeasibleArea area;
  for (const auto& p : up.points) {
    if (p.time < window->first - kTimeEps || p.time > window->second + kTimeEps) continue;
    const double xd = down.position_at(p.time);
    if (geometry) {
      auto inside = [&](double x) { return x >= geometry->x_up && x <= geometry->x_down; };
      if (!inside(p.position) || !inside(xd)) continue;
    }
    area.points.push_back({p.time, 0.5 * (p.position + xd)});
  }
  if (area.points.empty()) throw UnmatchableLc("vehicle " + up.vehicle_id + ": empty feasible area");
  area.t_start = area.points.front().time;
  area.t_end = area.points.back().time;
  return area;
}

/// (|V_a - V_b| + v_threshold) / (Dis + dis_threshold), with the lane speeds
/// read at the midpoint of the two candidates and Dis half their gap.
inline double lc_objective(double t, const Trajectory& up, const Trajectory& down, const VelocityField& field_a,
                           const VelocityField& field_b, const FusionConfig& config) {
  const double xu = up.position_at(t);
  const double xd = down.position_at(t);
  const double mid = 0.5 * (xu + xd);
  const double dis = 0.5 * std::abs(xu - xd);
  const double dv = std::abs(query_field(field_a, mid, t) - query_field(field_b, mid, t));
  return (dv + config.v_threshold) / (dis + config.dis_threshold);
}

struct LcDecision {
  VehicleId vehicle_id;
  LaneId origin_lane = 0;
  LaneId target_lane = 0;
  double lc_time = 0.0;
  double lc_position = 0.0;
  double adjusted_extent = 0.0;  ///< Dis at the decision point
  double objective_score = 0.0;
};

/// Another vehicle's trajectory tested against the LC point.
struct Neighbor {
  const Trajectory* trajectory = nullptr;
};

/// True when every neighbor on `lane` at time t keeps more than l_safe from x.
inline bool safe_at(double t, double x, LaneId lane, std::span<const Neighbor> neighbors, const VehicleId& self,
                    double l_safe) {
  for (const auto& n : neighbors) {
    const auto& tr = *n.trajectory;
    if (tr.vehicle_id == self || !tr.covers(t) || tr.lane_at(t) != lane) continue;
    if (std::abs(tr.position_at(t) - x) <= l_safe) return false;
  }
  return true;
}

/// Exhaustive search of the feasible area; points within l_safe of any
/// neighbor on either lane are discarded. Ties go to the earliest time.
inline LcDecision optimize_lc(const VehicleId& vehicle_id, LaneId origin_lane, LaneId target_lane,
                              const FeasibleArea& area, const Trajectory& up, const Trajectory& down,
                              std::span<const Neighbor> neighbors, const VelocityField& field_origin,
                              const VelocityField& field_target, const FusionConfig& config) {
  std::optional<LcDecision> best;
  for (const auto& pt : area.points) {
    if (!safe_at(pt.time, pt.position, origin_lane, neighbors, vehicle_id, config.l_safe) ||
        !safe_at(pt.time, pt.position, target_lane, neighbors, vehicle_id, config.l_safe)) {
      continue;
    }
    const double score = lc_objective(pt.time, up, down, field_origin, field_target, config);
    if (!best || score > best->objective_score) {
      best = LcDecision{vehicle_id, origin_lane, target_lane, pt.time, pt.position,
                        0.5 * std::abs(up.position_at(pt.time) - down.position_at(pt.time)), score};
    }
  }
  if (!best) throw SafetyInfeasible("vehicle " + vehicle_id + ": every feasible LC point violates l_safe");
  return *best;
}

namespace detail {

inline Trajectory offset(Trajectory traj, double dx) {
  for (auto& p : traj.points) p.position += dx;
  return traj;
}

inline Trajectory slice(const Trajectory& traj, double lo, double hi, LaneId lane) {
  Trajectory out{traj.vehicle_id, {}, traj.sample_interval};
  for (const auto& p : traj.points) {
    if (p.time >= lo - kTimeEps && p.time <= hi + kTimeEps) out.points.push_back({p.time, p.position, lane});
  }
  return out;
}

}  // namespace detail

struct LcSegments {
  Trajectory origin;  ///< ends at the LC point
  Trajectory target;  ///< starts at the LC point
};

/// Treats the LC point as a new sensor: the origin-lane trajectory is bent
/// (by the up/down blend) to reach it and truncated there; the target-lane
/// trajectory is bent to start from it.
inline LcSegments stitch_lc(const Trajectory& up, const Trajectory& down, const LcDecision& decision) {
  const double t = decision.lc_time;
  auto origin = detail::slice(up, up.start_time(), t, decision.origin_lane);
  auto target = detail::slice(down, t, down.end_time(), decision.target_lane);
  if (origin.empty() || target.empty()) throw ValidationError("LC time outside the candidate windows");
  origin = blend_up_down(origin, detail::offset(origin, decision.lc_position - up.position_at(t)));
  target = blend_up_down(detail::offset(target, decision.lc_position - down.position_at(t)), target);
  origin.points.back().position = decision.lc_position;
  target.points.front().position = decision.lc_position;
  return {std::move(origin), std::move(target)};
}

/// Joins stitched segments into one trajectory whose lane switches at the LC time.
inline Trajectory join_segments(const LcSegments& seg) {
  Trajectory out{seg.origin.vehicle_id, seg.origin.points, seg.origin.sample_interval};
  out.points.pop_back();
  out.points.insert(out.points.end(), seg.target.points.begin(), seg.target.points.end());
  return out;
}

enum class LcStatus { paired, failed };

struct LcOutcome {
  VehicleId vehicle_id;
  LaneId origin_lane = 0;
  LaneId target_lane = 0;
  LcStatus status = LcStatus::failed;
  std::optional<LcDecision> decision;
  std::optional<FeasibleArea> area;
  std::string reason;
};

struct ReconstructionInputs {
  const SegmentGeometry* geometry = nullptr;
  const DetectionLog* log = nullptr;
  const TrajectorySet* probes = nullptr;
  const std::vector<Region>* regions = nullptr;
  const std::vector<std::vector<CandidateSet>>* candidates = nullptr;  ///< per region
  const std::map<LaneId, VelocityField>* fields = nullptr;
};

struct ReconstructionResult {
  std::map<VehicleId, Trajectory> trajectories;  ///< lane-keepers and paired LC vehicles
  /// Failed LC vehicles: independent per-lane trajectories, not stitched.
  std::map<VehicleId, std::vector<Trajectory>> unpaired;
  std::vector<LcOutcome> lc_outcomes;
  std::vector<WeightAssignment> weights;
  std::map<VehicleId, Trajectory> upstream_fused;
  std::map<VehicleId, Trajectory> downstream_fused;
  std::vector<std::string> diagnostics;
};

namespace detail {

inline const CandidateSet* find_set(const std::vector<CandidateSet>& sets, const VehicleId& id) {
  for (const auto& s : sets) {
    if (s.vehicle_id == id) return &s;
  }
  return nullptr;
}

inline const VelocityField& field_of(const std::map<LaneId, VelocityField>& fields, LaneId lane) {
  auto it = fields.find(lane);
  if (it == fields.end()) throw ValidationError("no velocity field for lane " + std::to_string(lane));
  return it->second;
}

}  // namespace detail

/// Stage 1 for one region: solves both passes and stores the fused results.
inline void fuse_region(const Region& region, const std::vector<CandidateSet>& sets, const VelocityField& field,
                        const FusionConfig& config, ReconstructionResult& result) {
  auto run_pass = [&](const std::vector<VehicleId>& ids, Variant primary, Variant secondary,
                      std::map<VehicleId, Trajectory>& sink) {
    std::vector<PassMember> members;
    for (const auto& id : ids) {
      const auto* s = detail::find_set(sets, id);
      if (!s || !s->get(primary) || !s->get(secondary)) {
        throw ValidationError("vehicle " + id + " lacks " + to_string(primary) + "/" + to_string(secondary));
      }
      members.push_back({id, &*s->get(primary), &*s->get(secondary)});
    }
    if (members.empty()) return;
    auto wa = solve_weights(members, field, config);
    for (std::size_t i = 0; i < members.size(); ++i) {
      sink[members[i].vehicle_id] = fuse_pair(*members[i].primary, *members[i].secondary, wa.weights[i]);
    }
    result.weights.push_back(std::move(wa));
  };
  run_pass(region.upstream_members, Variant::cff, Variant::icff, result.upstream_fused);
  run_pass(region.downstream_members, Variant::cfb, Variant::icfb, result.downstream_fused);
}

/// Both stages over all regions. Lane-keepers are blended first; LC vehicles
/// are then placed front to rear so each safety check sees the neighbors
/// already fixed.
inline ReconstructionResult reconstruct(const ReconstructionInputs& in, const FusionConfig& config) {
  config.validate();
  ReconstructionResult result;
  const auto& regions = *in.regions;
  for (std::size_t r = 0; r < regions.size(); ++r) {
    fuse_region(regions[r], (*in.candidates)[r], detail::field_of(*in.fields, regions[r].lane), config, result);
  }

  struct LcJob {
    double up_time;
    VehicleId id;
    LaneId origin;
    LaneId target;
  };
  std::vector<LcJob> jobs;
  std::vector<VehicleId> seen;
  for (const auto& region : regions) {
    for (const auto& id : region.hidden_vehicle_ids()) seen.push_back(id);
  }
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());

  for (const auto& id : seen) {
    const auto* up = in.log->find(id, Station::upstream);
    const auto* down = in.log->find(id, Station::downstream);
    const auto u = result.upstream_fused.find(id);
    const auto d = result.downstream_fused.find(id);
    if (up->lane == down->lane) {
      if (u == result.upstream_fused.end() || d == result.downstream_fused.end()) {
        result.diagnostics.push_back("vehicle " + id + ": missing a stage-1 pass; skipped");
        continue;
      }
      auto traj = blend_up_down(u->second, d->second);
      // Pin the sensor crossings exactly.
      traj.points.front().position = in.geometry->x_up;
      traj.points.back().position = in.geometry->x_down;
      result.trajectories.emplace(id, std::move(traj));
    } else {
      jobs.push_back({up->arrival_time, id, up->lane, down->lane});
    }
  }
  std::sort(jobs.begin(), jobs.end(), [](const LcJob& a, const LcJob& b) {
    return a.up_time != b.up_time ? a.up_time < b.up_time : a.id < b.id;
  });

  for (const auto& job : jobs) {
    LcOutcome outcome{job.id, job.origin, job.target, LcStatus::failed, std::nullopt, std::nullopt, {}};
    const auto u = result.upstream_fused.find(job.id);
    const auto d = result.downstream_fused.find(job.id);
    auto keep_unpaired = [&] {
      if (u != result.upstream_fused.end()) result.unpaired[job.id].push_back(detail::slice(u->second, u->second.start_time(), u->second.end_time(), job.origin));
      if (d != result.downstream_fused.end()) result.unpaired[job.id].push_back(detail::slice(d->second, d->second.start_time(), d->second.end_time(), job.target));
    };
    if (u == result.upstream_fused.end() || d == result.downstream_fused.end()) {
      outcome.reason = "not covered by regions on both lanes";
      keep_unpaired();
      result.lc_outcomes.push_back(std::move(outcome));
      continue;
    }
    try {
      const auto area = feasible_area(u->second, d->second, *in.geometry);
      outcome.area = area;
      std::vector<Neighbor> neighbors;
      for (const auto& [pid, p] : in.probes->trajectories) neighbors.push_back({&p});
      for (const auto& [vid, t] : result.trajectories) neighbors.push_back({&t});
      const auto decision =
          optimize_lc(job.id, job.origin, job.target, area, u->second, d->second, neighbors,
                      detail::field_of(*in.fields, job.origin), detail::field_of(*in.fields, job.target), config);
      const auto segments = stitch_lc(u->second, d->second, decision);
      auto joined = join_segments(segments);
      joined.points.front().position = in.geometry->x_up;
      joined.points.back().position = in.geometry->x_down;
      result.trajectories.emplace(job.id, std::move(joined));
      outcome.status = LcStatus::paired;
      outcome.decision = decision;
    } catch (const UnmatchableLc& e) {
      outcome.reason = e.what();
      keep_unpaired();
    } catch (const SafetyInfeasible& e) {
      outcome.reason = e.what();
      keep_unpaired();
    }
    result.lc_outcomes.push_back(std::move(outcome));
  }
  return result;
}

}  // namespace trajfuse
