#pragma once

// Deterministic multi-lane Newell simulator with scripted lane changes and an
// optional speed-capped bottleneck. Produces ground truth for the pipeline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "trajfuse/core.hpp"
#include "trajfuse/evaluation.hpp"
#include "trajfuse/ingest.hpp"
#include "trajfuse/micro_candidates.hpp"

namespace trajfuse {

struct LcScriptEntry {
  VehicleId vehicle_id;
  LaneId target_lane = 0;
  double trigger_time = 0.0;
};

/// Speed cap v_cap on [position, position + length] while t in [t_start, t_end].
struct Bottleneck {
  double position = 250.0;
  double length = 20.0;
  double t_start = 0.0;
  double t_end = 1e9;
  double speed = 0.0;
};

/// Relative half-widths of per-vehicle uniform perturbations.
struct Heterogeneity {
  double lag = 0.0;
  double desired_speed = 0.0;
  double headway = 0.0;
  /// When positive, lags are re-drawn every lag_period seconds and
  /// interpolated linearly in between; otherwise constant per vehicle.
  double lag_period = 0.0;
};

struct ScenarioSpec {
  SegmentGeometry geometry{0.0, 500.0, {1, 2}};
  std::size_t vehicles_per_lane = 20;
  std::vector<double> entry_headways{2.0};  ///< cycled per vehicle
  std::vector<double> desired_speeds{20.0}; ///< cycled per vehicle
  double lane_entry_offset = 0.0;           ///< entry delay added per lane index
  NewellConfig newell;
  std::vector<LcScriptEntry> lc_script;
  std::optional<Bottleneck> bottleneck;
  Heterogeneity heterogeneity;
  double x_entry = -100.0;
  double x_exit = 600.0;
  double dt = 1.0;

  void validate() const {
    geometry.validate();
    newell.validate();
    if (geometry.lanes.empty()) throw ValidationError("scenario: no lanes");
    if (entry_headways.empty() || desired_speeds.empty()) throw ValidationError("scenario: empty headways/speeds");
    for (double h : entry_headways) {
      if (!(h > 0.0)) throw ValidationError("scenario: entry headways must be positive");
    }
    for (double v : desired_speeds) {
      if (!(v > 0.0)) throw ValidationError("scenario: desired speeds must be positive");
    }
    if (!(dt > 0.0)) throw ValidationError("scenario: dt must be positive");
    if (!(x_exit > x_entry)) throw ValidationError("scenario: x_exit must exceed x_entry");
    if (heterogeneity.lag < 0.0 || heterogeneity.lag >= 1.0 || heterogeneity.desired_speed < 0.0 ||
        heterogeneity.desired_speed >= 1.0 || heterogeneity.headway < 0.0 || heterogeneity.headway >= 1.0 ||
        heterogeneity.lag_period < 0.0) {
      throw ValidationError("scenario: heterogeneity half-widths must lie in [0, 1)");
    }
  }
};

inline VehicleId sim_vehicle_id(LaneId lane, std::size_t index) {
  return std::to_string(static_cast<long long>(lane) * 1000 + static_cast<long long>(index) + 1);
}

struct SimulationResult {
  TrajectorySet truth;
  std::vector<TruthLc> lane_changes;
  std::vector<LcScriptEntry> infeasible;  ///< scripted LCs whose gap never opened
  std::map<VehicleId, NewellShift> lags;  ///< per-vehicle true lags
};

namespace detail {

struct SimVehicle {
  VehicleId id;
  LaneId lane = 0;
  double entry_time = 0.0;
  double desired_speed = 0.0;
  NewellShift lag;
  /// Lag multipliers (time, space) at k * lag_period when lags drift.
  std::vector<std::pair<double, double>> drift;
  Trajectory history;
  bool entered = false;
  bool exited = false;
  std::optional<LcScriptEntry> pending_lc;
};

inline double jitter(std::mt19937_64& rng, double half_width) {
  if (half_width == 0.0) return 1.0;
  std::uniform_real_distribution<double> u(-half_width, half_width);
  return 1.0 + u(rng);
}

inline NewellShift lag_at(const SimVehicle& v, double t, double period) {
  if (v.drift.empty() || period <= 0.0) return v.lag;
  const double u = std::max(0.0, t) / period;
  const auto k = std::min(static_cast<std::size_t>(u), v.drift.size() - 2);
  const double f = std::min(1.0, u - static_cast<double>(k));
  const auto& a = v.drift[k];
  const auto& b = v.drift[k + 1];
  return {v.lag.time_lag * (a.first + f * (b.first - a.first)), v.lag.space_lag * (a.second + f * (b.second - a.second))};
}

}  // namespace detail

/// Steps all vehicles at spec.dt until every vehicle has left or `horizon`
/// is reached. Each step: x_new = min(x + v_des dt, leader(t + dt - eta) - theta,
/// bottleneck cap), never below x.
inline SimulationResult simulate(const ScenarioSpec& spec, double horizon, std::uint64_t seed) {
  spec.validate();
  if (!(horizon > 0.0)) throw ValidationError("simulate: horizon must be positive");
  std::mt19937_64 rng(seed);
  const NewellShift base = spec.newell.base_shift();
  std::vector<detail::SimVehicle> vehicles;
  for (std::size_t li = 0; li < spec.geometry.lanes.size(); ++li) {
    const LaneId lane = spec.geometry.lanes[li];
    double t_entry = static_cast<double>(li) * spec.lane_entry_offset;
    for (std::size_t i = 0; i < spec.vehicles_per_lane; ++i) {
      detail::SimVehicle v;
      v.id = sim_vehicle_id(lane, i);
      v.lane = lane;
      const double lag_scale = detail::jitter(rng, spec.heterogeneity.lag);
      v.lag = {base.time_lag * lag_scale, base.space_lag * detail::jitter(rng, spec.heterogeneity.lag)};
      v.desired_speed = spec.desired_speeds[i % spec.desired_speeds.size()] *
                        detail::jitter(rng, spec.heterogeneity.desired_speed);
      if (i > 0) {
        t_entry += spec.entry_headways[(i - 1) % spec.entry_headways.size()] *
                   detail::jitter(rng, spec.heterogeneity.headway);
      }
      v.entry_time = t_entry;
      if (spec.heterogeneity.lag_period > 0.0) {
        const auto knots = static_cast<std::size_t>(std::ceil(horizon / spec.heterogeneity.lag_period)) + 2;
        v.lag = base;
        for (std::size_t q = 0; q < knots; ++q) {
          const double a = detail::jitter(rng, spec.heterogeneity.lag);
          v.drift.push_back({a, detail::jitter(rng, spec.heterogeneity.lag)});
        }
      }
      v.history = Trajectory{v.id, {}, spec.dt};
      vehicles.push_back(std::move(v));
    }
  }
  std::map<VehicleId, std::size_t> index;
  for (std::size_t i = 0; i < vehicles.size(); ++i) index[vehicles[i].id] = i;
  SimulationResult result;
  for (const auto& lc : spec.lc_script) {
    auto it = index.find(lc.vehicle_id);
    if (it == index.end()) throw ValidationError("lc script names unknown vehicle " + lc.vehicle_id);
    if (lc.trigger_time > horizon) throw ValidationError("lc trigger beyond horizon for " + lc.vehicle_id);
    if (std::find(spec.geometry.lanes.begin(), spec.geometry.lanes.end(), lc.target_lane) ==
            spec.geometry.lanes.end() ||
        lc.target_lane == vehicles[it->second].lane) {
      throw ValidationError("lc script target lane invalid for " + lc.vehicle_id);
    }
    vehicles[it->second].pending_lc = lc;
  }

  auto position = [&](const detail::SimVehicle& v) { return v.history.points.back().position; };
  // Active vehicles of a lane, front first.
  auto lane_order = [&](LaneId lane) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
      const auto& v = vehicles[i];
      if (v.entered && !v.exited && v.lane == lane) out.push_back(i);
    }
    std::sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) {
      const double xa = position(vehicles[a]);
      const double xb = position(vehicles[b]);
      return xa != xb ? xa > xb : vehicles[a].entry_time < vehicles[b].entry_time;
    });
    return out;
  };
  // Last vehicle of each lane to have entered (the next entrant's leader).
  std::map<LaneId, std::optional<std::size_t>> last_entered;

  const auto steps = static_cast<std::size_t>(std::floor(horizon / spec.dt + 1e-9));
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * spec.dt;

    // Entries at t: a vehicle leaves x_entry at its entry time and appears
    // where free driving has taken it since, or further back on its Newell
    // constraint when the leader is still close.
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
      auto& v = vehicles[i];
      if (v.entered || t + 1e-9 < v.entry_time) continue;
      auto& prev = last_entered[v.lane];
      double x0 = spec.x_entry + v.desired_speed * (t - v.entry_time);
      if (prev) {
        const auto& lead = vehicles[*prev];
        const auto lag = detail::lag_at(v, t, spec.heterogeneity.lag_period);
        x0 = std::min(x0, lead.history.position_extrapolated(t - lag.time_lag) - lag.space_lag);
      }
      v.entered = true;
      v.history.points.push_back({t, x0, v.lane});
      prev = i;
    }

    // Scripted lane changes at t: the sample at t already carries the target lane.
    for (auto& v : vehicles) {
      if (!v.entered || v.exited || !v.pending_lc || t + 1e-9 < v.pending_lc->trigger_time) continue;
      const double x = position(v);
      if (x <= spec.geometry.x_up || x >= spec.geometry.x_down) continue;
      bool ok = true;
      for (auto j : lane_order(v.pending_lc->target_lane)) {
        const auto& o = vehicles[j];
        const double d = position(o) - x;
        const double need = d >= 0.0 ? detail::lag_at(v, t, spec.heterogeneity.lag_period).space_lag
                                     : detail::lag_at(o, t, spec.heterogeneity.lag_period).space_lag;
        if (std::abs(d) < need) ok = false;
      }
      if (!ok) continue;
      result.lane_changes.push_back({v.id, t, x, v.lane, v.pending_lc->target_lane});
      v.lane = v.pending_lc->target_lane;
      v.history.points.back().lane = v.lane;
      v.pending_lc.reset();
    }

    if (k == steps) break;
    const double t_next = t + spec.dt;
    for (LaneId lane : spec.geometry.lanes) {
      const auto order = lane_order(lane);
      for (std::size_t n = 0; n < order.size(); ++n) {
        auto& v = vehicles[order[n]];
        const double x = position(v);
        double x_new = x + v.desired_speed * spec.dt;
        if (n > 0) {
          const auto& lead = vehicles[order[n - 1]];
          const auto lag = detail::lag_at(v, t_next, spec.heterogeneity.lag_period);
          x_new = std::min(x_new, lead.history.position_extrapolated(t_next - lag.time_lag) - lag.space_lag);
        }
        if (spec.bottleneck) {
          const auto& b = *spec.bottleneck;
          if (t >= b.t_start && t < b.t_end && x < b.position + b.length) {
            x_new = std::min(x_new, std::max(x, b.position) + b.speed * spec.dt);
          }
        }
        x_new = std::max(x_new, x);
        v.history.points.push_back({t_next, x_new, v.lane});
        if (x_new >= spec.x_exit) v.exited = true;
      }
    }
  }

  for (auto& v : vehicles) {
    if (v.pending_lc) result.infeasible.push_back(*v.pending_lc);
    result.lags[v.id] = v.lag;
    if (!v.history.empty()) result.truth.trajectories.emplace(v.id, std::move(v.history));
  }
  result.truth.geometry = spec.geometry;
  std::sort(result.lane_changes.begin(), result.lane_changes.end(),
            [](const TruthLc& a, const TruthLc& b) { return a.vehicle_id < b.vehicle_id; });
  return result;
}

/// Flattens a trajectory set into ingest rows (vehicle then time order).
inline std::vector<TrajectoryRow> to_rows(const TrajectorySet& set) {
  std::vector<TrajectoryRow> rows;
  for (const auto& [id, traj] : set.trajectories) {
    for (const auto& p : traj.points) rows.push_back({id, p.time, p.position, p.lane, {}});
  }
  return rows;
}

}  // namespace trajfuse
