#pragma once

// CSV formats for reconstructed trajectories, LC decisions, truth LC events
// and per-vehicle errors.

#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "trajfuse/core.hpp"
#include "trajfuse/evaluation.hpp"
#include "trajfuse/fusion.hpp"
#include "trajfuse/ingest.hpp"

namespace trajfuse {

namespace detail {

inline void write_points(std::ostream& out, const Trajectory& traj, const char* kind) {
  char buf[160];
  for (const auto& p : traj.points) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%d,%s\n", traj.vehicle_id.c_str(), p.time, p.position, p.lane, kind);
    out << buf;
  }
}

}  // namespace detail

/// Ground truth in the ingest schema `vehicle_id,time_s,position_m,lane_id`.
inline void write_truth_csv(std::ostream& out, const TrajectorySet& truth) {
  out << "vehicle_id,time_s,position_m,lane_id\n";
  char buf[160];
  for (const auto& [id, traj] : truth.trajectories) {
    for (const auto& p : traj.points) {
      std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%d\n", id.c_str(), p.time, p.position, p.lane);
      out << buf;
    }
  }
}

/// `vehicle_id,time_s,position_m,lane_id,kind`; kind is probe, reconstructed
/// or unpaired (per-lane pieces of an LC vehicle without a consistent LC point).
inline void write_trajectories_csv(std::ostream& out, const TrajectorySet& probes,
                                   const std::map<VehicleId, Trajectory>& reconstructed,
                                   const std::map<VehicleId, std::vector<Trajectory>>& unpaired = {}) {
  out << "vehicle_id,time_s,position_m,lane_id,kind\n";
  for (const auto& [id, t] : probes.trajectories) detail::write_points(out, t, "probe");
  for (const auto& [id, t] : reconstructed) detail::write_points(out, t, "reconstructed");
  for (const auto& [id, pieces] : unpaired) {
    for (const auto& t : pieces) detail::write_points(out, t, "unpaired");
  }
}

/// Trajectories grouped by the `kind` column (rows without one count as
/// "reconstructed"). Samples are kept as written, without resampling.
inline std::map<std::string, std::map<VehicleId, Trajectory>> read_kinded_trajectories(std::istream& in) {
  std::map<std::string, std::map<VehicleId, Trajectory>> out;
  for (const auto& row : read_trajectory_rows(in)) {
    auto k = row.extra.find("kind");
    const std::string kind = k == row.extra.end() ? "reconstructed" : k->second;
    auto& traj = out[kind][row.vehicle_id];
    traj.vehicle_id = row.vehicle_id;
    if (!traj.points.empty() && !(row.time > traj.points.back().time)) {
      // A second piece of an unpaired vehicle restarts in time; keep the first.
      if (kind == "unpaired") continue;
      throw ParseError("non-monotone time for vehicle " + row.vehicle_id);
    }
    traj.points.push_back({row.time, row.position, row.lane});
  }
  for (auto& [kind, trajs] : out) {
    for (auto& [id, t] : trajs) {
      if (t.size() >= 2) t.sample_interval = (t.end_time() - t.start_time()) / static_cast<double>(t.size() - 1);
    }
  }
  return out;
}

inline const char* to_string(LcStatus s) { return s == LcStatus::paired ? "paired" : "failed"; }

/// `vehicle_id,origin_lane,target_lane,lc_time_s,lc_position_m,score,status`;
/// failed rows leave the numeric fields empty.
inline void write_lc_decisions_csv(std::ostream& out, const std::vector<LcOutcome>& outcomes) {
  out << "vehicle_id,origin_lane,target_lane,lc_time_s,lc_position_m,score,status\n";
  char buf[200];
  for (const auto& o : outcomes) {
    if (o.decision) {
      std::snprintf(buf, sizeof buf, "%s,%d,%d,%.6f,%.6f,%.9f,%s\n", o.vehicle_id.c_str(), o.origin_lane,
                    o.target_lane, o.decision->lc_time, o.decision->lc_position, o.decision->objective_score,
                    to_string(o.status));
    } else {
      std::snprintf(buf, sizeof buf, "%s,%d,%d,,,,%s\n", o.vehicle_id.c_str(), o.origin_lane, o.target_lane,
                    to_string(o.status));
    }
    out << buf;
  }
}

/// `vehicle_id,lc_time_s,lc_position_m,origin_lane,target_lane`.
inline void write_truth_lc_csv(std::ostream& out, const std::vector<TruthLc>& events) {
  out << "vehicle_id,lc_time_s,lc_position_m,origin_lane,target_lane\n";
  char buf[160];
  for (const auto& e : events) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%d,%d\n", e.vehicle_id.c_str(), e.lc_time, e.lc_position,
                  e.origin_lane, e.target_lane);
    out << buf;
  }
}

inline std::vector<TruthLc> read_truth_lc_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> col;
  std::vector<TruthLc> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto cells = detail::split_csv_line(line);
    if (col.empty()) {
      for (std::size_t i = 0; i < cells.size(); ++i) col[cells[i]] = i;
      for (const char* need : {"vehicle_id", "lc_time_s", "lc_position_m", "origin_lane", "target_lane"}) {
        if (!col.count(need)) throw ParseError(std::string("truth LC CSV: missing column ") + need);
      }
      continue;
    }
    auto cell = [&](const char* name) -> const std::string& {
      const auto i = col.at(name);
      if (i >= cells.size()) throw ParseError("truth LC CSV line " + std::to_string(line_no) + ": too few cells");
      return cells[i];
    };
    out.push_back({cell("vehicle_id"), detail::parse_double(cell("lc_time_s"), line_no, "lc_time_s"),
                   detail::parse_double(cell("lc_position_m"), line_no, "lc_position_m"),
                   detail::parse_int(cell("origin_lane"), line_no, "origin_lane"),
                   detail::parse_int(cell("target_lane"), line_no, "target_lane")});
  }
  return out;
}

/// `vehicle_id,samples,mae_m,rmse_m,mape_pct`.
inline void write_vehicle_errors_csv(std::ostream& out, const AccuracyReport& report) {
  out << "vehicle_id,samples,mae_m,rmse_m,mape_pct\n";
  char buf[160];
  for (const auto& v : report.per_vehicle) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,%.6f\n", v.vehicle_id.c_str(), v.samples, v.mae, v.rmse, v.mape);
    out << buf;
  }
}

}  // namespace trajfuse
