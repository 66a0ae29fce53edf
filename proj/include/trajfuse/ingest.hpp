#pragma once

// Ground-truth ingestion and sensing emulation: CSV parsing, virtual fixed
// sensors, probe sampling and region partitioning.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "trajfuse/core.hpp"

namespace trajfuse {

class ParseError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

struct TrajectorySet {
  std::map<VehicleId, Trajectory> trajectories;
  SegmentGeometry geometry;

  [[nodiscard]] bool contains(const VehicleId& id) const { return trajectories.count(id) != 0; }
  [[nodiscard]] const Trajectory& at(const VehicleId& id) const { return trajectories.at(id); }
  [[nodiscard]] std::size_t size() const { return trajectories.size(); }
};

enum class Station { upstream, downstream };

inline const char* to_string(Station s) { return s == Station::upstream ? "upstream" : "downstream"; }

struct DetectionEvent {
  VehicleId vehicle_id;
  LaneId lane = 0;
  Station station = Station::upstream;
  double arrival_time = 0.0;
  double speed = 0.0;
};

/// Fixed-sensor records ordered by (lane, station, arrival_time).
class DetectionLog {
public:
  DetectionLog() = default;
  explicit DetectionLog(std::vector<DetectionEvent> events) : events_(std::move(events)) {
    std::sort(events_.begin(), events_.end(), [](const DetectionEvent& a, const DetectionEvent& b) {
      if (a.lane != b.lane) return a.lane < b.lane;
      if (a.station != b.station) return a.station < b.station;
      if (a.arrival_time != b.arrival_time) return a.arrival_time < b.arrival_time;
      return a.vehicle_id < b.vehicle_id;
    });
    for (std::size_t i = 0; i < events_.size(); ++i) {
      auto key = std::make_pair(events_[i].vehicle_id, events_[i].station);
      if (!index_.emplace(key, i).second) {
        throw ValidationError("duplicate detection for vehicle " + events_[i].vehicle_id);
      }
    }
  }

  [[nodiscard]] const std::vector<DetectionEvent>& events() const { return events_; }

  [[nodiscard]] const DetectionEvent* find(const VehicleId& id, Station station) const {
    auto it = index_.find({id, station});
    return it == index_.end() ? nullptr : &events_[it->second];
  }

  /// Event immediately before (offset -1) or after (+1) the given one at the
  /// same lane and station.
  [[nodiscard]] const DetectionEvent* adjacent(const DetectionEvent& ev, int offset) const {
    auto it = index_.find({ev.vehicle_id, ev.station});
    if (it == index_.end()) return nullptr;
    const auto j = static_cast<long long>(it->second) + offset;
    if (j < 0 || j >= static_cast<long long>(events_.size())) return nullptr;
    const auto& other = events_[static_cast<std::size_t>(j)];
    if (other.lane != ev.lane || other.station != ev.station) return nullptr;
    return &other;
  }

  /// Detected at both stations in different lanes.
  [[nodiscard]] bool is_lc_candidate(const VehicleId& id) const {
    const auto* up = find(id, Station::upstream);
    const auto* down = find(id, Station::downstream);
    return up && down && up->lane != down->lane;
  }

private:
  std::vector<DetectionEvent> events_;
  std::map<std::pair<VehicleId, Station>, std::size_t> index_;
};

struct ParseOptions {
  double sample_interval = 1.0;
  /// Rows further than this outside [x_up, x_down] are dropped.
  double margin = 100.0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    auto b = cell.find_first_not_of(" \t\r");
    auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, std::size_t line_no, const char* column) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": malformed " + column + " '" + s + "'");
  }
}

inline int parse_int(const std::string& s, std::size_t line_no, const char* column) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": malformed " + column + " '" + s + "'");
  }
}

}  // namespace detail

/// Raw CSV row of the trajectory schema plus any extra columns by name.
struct TrajectoryRow {
  VehicleId vehicle_id;
  double time = 0.0;
  double position = 0.0;
  LaneId lane = 0;
  std::map<std::string, std::string> extra;
};

/// Reads `vehicle_id,time_s,position_m,lane_id` rows (any column order, extra
/// columns retained in TrajectoryRow::extra).
inline std::vector<TrajectoryRow> read_trajectory_rows(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header = detail::split_csv_line(line);
    break;
  }
  if (header.empty()) throw ParseError("missing header row");
  if (!header.empty() && header[0].size() >= 3 && header[0].compare(0, 3, "\xEF\xBB\xBF") == 0) {
    header[0].erase(0, 3);
  }
  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError("header lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto c_id = column("vehicle_id");
  const auto c_t = column("time_s");
  const auto c_x = column("position_m");
  const auto c_lane = column("lane_id");

  std::vector<TrajectoryRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(cells.size()));
    }
    TrajectoryRow row;
    row.vehicle_id = cells[c_id];
    if (row.vehicle_id.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty vehicle_id");
    row.time = detail::parse_double(cells[c_t], line_no, "time_s");
    row.position = detail::parse_double(cells[c_x], line_no, "position_m");
    row.lane = detail::parse_int(cells[c_lane], line_no, "lane_id");
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i != c_id && i != c_t && i != c_x && i != c_lane) row.extra[header[i]] = cells[i];
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Groups rows by vehicle (rows of one vehicle must be time-increasing in file
/// order), clips to the geometry margin and resamples onto the k*t_int grid.
inline TrajectorySet build_trajectory_set(const std::vector<TrajectoryRow>& rows, const SegmentGeometry& geometry,
                                          const ParseOptions& options = {}) {
  geometry.validate();
  std::map<VehicleId, Trajectory> raw;
  for (const auto& row : rows) {
    auto& traj = raw[row.vehicle_id];
    traj.vehicle_id = row.vehicle_id;
    if (!traj.points.empty() && !(row.time > traj.points.back().time)) {
      throw ParseError("non-monotone time for vehicle " + row.vehicle_id);
    }
    traj.points.push_back({row.time, row.position, row.lane});
  }
  TrajectorySet set;
  set.geometry = geometry;
  const double lo = geometry.x_up - options.margin;
  const double hi = geometry.x_down + options.margin;
  for (auto& [id, traj] : raw) {
    std::erase_if(traj.points, [&](const TrajectoryPoint& p) { return p.position < lo || p.position > hi; });
    if (traj.points.empty()) continue;
    // Spacing of raw samples is irregular in general; resample validates it.
    traj.sample_interval = options.sample_interval;
    auto grid = resample(traj, options.sample_interval);
    if (grid.empty()) continue;
    set.trajectories.emplace(id, std::move(grid));
  }
  if (set.geometry.lanes.empty()) {
    std::vector<LaneId> lanes;
    for (const auto& [id, traj] : set.trajectories) {
      for (const auto& p : traj.points) lanes.push_back(p.lane);
    }
    std::sort(lanes.begin(), lanes.end());
    lanes.erase(std::unique(lanes.begin(), lanes.end()), lanes.end());
    set.geometry.lanes = lanes;
  }
  return set;
}

inline TrajectorySet parse_trajectory_file(std::istream& in, const SegmentGeometry& geometry,
                                           const ParseOptions& options = {}) {
  return build_trajectory_set(read_trajectory_rows(in), geometry, options);
}

namespace detail {

inline std::optional<DetectionEvent> detect_at(const Trajectory& traj, double x, Station station) {
  const auto t = crossing_time(traj, x);
  if (!t) return std::nullopt;
  DetectionEvent ev;
  ev.vehicle_id = traj.vehicle_id;
  ev.station = station;
  ev.arrival_time = *t;
  ev.lane = traj.lane_at(*t);
  ev.speed = traj.size() >= 2 ? std::max(0.0, speed_at(traj, *t)) : 0.0;
  return ev;
}

}  // namespace detail

/// Virtual fixed sensors at x_up and x_down: first crossing time (linear
/// interpolation), interpolated speed, lane held at crossing.
inline DetectionLog extract_detections(const TrajectorySet& set) {
  std::vector<DetectionEvent> events;
  for (const auto& [id, traj] : set.trajectories) {
    if (auto ev = detail::detect_at(traj, set.geometry.x_up, Station::upstream)) events.push_back(*ev);
    if (auto ev = detail::detect_at(traj, set.geometry.x_down, Station::downstream)) events.push_back(*ev);
  }
  return DetectionLog(std::move(events));
}

struct ProbeSplit {
  TrajectorySet probes;
  TrajectorySet hidden;
};

namespace detail {

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  // Rejection sampling keeps the draw unbiased and independent of the
  // standard library's distribution implementation.
  const std::uint64_t range = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t r = rng();
  while (r >= limit) r = rng();
  return static_cast<std::size_t>(r % range);
}

}  // namespace detail

/// Draws round(rate * eligible) probes per lane among vehicles that never
/// change lane; the rest are hidden. Deterministic per seed.
inline ProbeSplit sample_probes(const TrajectorySet& set, double rate, std::uint64_t seed) {
  if (!(rate > 0.0 && rate < 1.0)) throw ValidationError("penetration rate must lie in (0, 1)");
  std::map<LaneId, std::vector<VehicleId>> eligible;
  for (const auto& [id, traj] : set.trajectories) {
    if (!traj.empty() && !traj.changes_lane()) eligible[traj.points.front().lane].push_back(id);
  }
  if (eligible.empty()) throw ValidationError("no vehicle is eligible as a probe");

  std::mt19937_64 rng(seed);
  std::vector<VehicleId> chosen;
  for (auto& [lane, ids] : eligible) {
    const auto k = static_cast<std::size_t>(std::llround(rate * static_cast<double>(ids.size())));
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + detail::uniform_index(rng, ids.size() - i);
      std::swap(ids[i], ids[j]);
      chosen.push_back(ids[i]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  ProbeSplit split;
  split.probes.geometry = set.geometry;
  split.hidden.geometry = set.geometry;
  for (const auto& [id, traj] : set.trajectories) {
    auto& target = std::binary_search(chosen.begin(), chosen.end(), id) ? split.probes : split.hidden;
    target.trajectories.emplace(id, traj);
  }
  return split;
}

/// Space-time slab between two consecutive same-lane probes.
struct Region {
  LaneId lane = 0;
  Trajectory leading_probe;
  Trajectory trailing_probe;
  /// Hidden vehicles detected upstream on this lane, front to rear.
  std::vector<VehicleId> upstream_members;
  /// Hidden vehicles detected downstream on this lane, front to rear.
  std::vector<VehicleId> downstream_members;

  /// Union of both member lists, front to rear. Vehicles seen only
  /// downstream are placed by their downstream order.
  [[nodiscard]] std::vector<VehicleId> hidden_vehicle_ids() const {
    std::vector<VehicleId> out = upstream_members;
    auto in_up = [&](const VehicleId& id) {
      return std::find(upstream_members.begin(), upstream_members.end(), id) != upstream_members.end();
    };
    for (std::size_t i = 0; i < downstream_members.size(); ++i) {
      const auto& id = downstream_members[i];
      if (in_up(id)) continue;
      // Insert before the first later (in downstream order) vehicle already placed.
      auto pos = out.end();
      for (std::size_t j = i + 1; j < downstream_members.size(); ++j) {
        auto it = std::find(out.begin(), out.end(), downstream_members[j]);
        if (it != out.end()) {
          pos = it;
          break;
        }
      }
      out.insert(pos, id);
    }
    return out;
  }

  [[nodiscard]] bool contains(const VehicleId& id) const {
    auto ids = hidden_vehicle_ids();
    return std::find(ids.begin(), ids.end(), id) != ids.end();
  }
};

struct SkippedVehicle {
  VehicleId vehicle_id;
  std::string reason;
};

struct Partition {
  std::vector<Region> regions;
  std::vector<SkippedVehicle> skipped;
  std::vector<std::string> warnings;
};

/// Per lane, consecutive probe pairs (by upstream arrival) bound a region.
/// Hidden vehicles join the region of each station they were detected at.
inline Partition partition_regions(const TrajectorySet& probes, const TrajectorySet& hidden, const DetectionLog& log) {
  Partition out;
  struct ProbeRef {
    const Trajectory* traj;
    double up;
    double down;
  };
  std::map<LaneId, std::vector<ProbeRef>> by_lane;
  for (const auto& [id, traj] : probes.trajectories) {
    const auto* up = log.find(id, Station::upstream);
    const auto* down = log.find(id, Station::downstream);
    if (!up || !down) {
      out.warnings.push_back("probe " + id + " does not span both stations; ignored");
      continue;
    }
    by_lane[up->lane].push_back({&traj, up->arrival_time, down->arrival_time});
  }
  std::vector<LaneId> lanes = probes.geometry.lanes;
  for (const auto& [lane, refs] : by_lane) {
    if (std::find(lanes.begin(), lanes.end(), lane) == lanes.end()) lanes.push_back(lane);
  }
  std::sort(lanes.begin(), lanes.end());

  std::map<LaneId, std::vector<std::size_t>> lane_regions;
  for (LaneId lane : lanes) {
    auto& refs = by_lane[lane];
    std::sort(refs.begin(), refs.end(), [](const ProbeRef& a, const ProbeRef& b) { return a.up < b.up; });
    if (refs.size() < 2) {
      out.warnings.push_back("lane " + std::to_string(lane) + " has fewer than 2 probes; no regions");
      continue;
    }
    for (std::size_t i = 0; i + 1 < refs.size(); ++i) {
      Region r;
      r.lane = lane;
      r.leading_probe = *refs[i].traj;
      r.trailing_probe = *refs[i + 1].traj;
      lane_regions[lane].push_back(out.regions.size());
      out.regions.push_back(std::move(r));
    }
  }

  auto bounds = [&](const Region& r, Station s) {
    const auto* a = log.find(r.leading_probe.vehicle_id, s);
    const auto* b = log.find(r.trailing_probe.vehicle_id, s);
    return std::make_pair(a->arrival_time, b->arrival_time);
  };
  auto locate = [&](const DetectionEvent& ev) -> std::optional<std::size_t> {
    auto it = lane_regions.find(ev.lane);
    if (it == lane_regions.end()) return std::nullopt;
    for (std::size_t idx : it->second) {
      auto [lo, hi] = bounds(out.regions[idx], ev.station);
      if (ev.arrival_time > lo && ev.arrival_time < hi) return idx;
    }
    return std::nullopt;
  };

  struct Member {
    double time;
    VehicleId id;
  };
  std::vector<std::vector<Member>> up_members(out.regions.size()), down_members(out.regions.size());
  for (const auto& [id, traj] : hidden.trajectories) {
    const auto* up = log.find(id, Station::upstream);
    const auto* down = log.find(id, Station::downstream);
    if (!up && !down) {
      out.skipped.push_back({id, "no fixed-sensor detection"});
      continue;
    }
    if (!up || !down) {
      out.skipped.push_back({id, "detected at one station only"});
      continue;
    }
    const auto ru = locate(*up);
    const auto rd = locate(*down);
    if (!ru && !rd) {
      out.skipped.push_back({id, "outside every region"});
      continue;
    }
    if (up->lane == down->lane && (!ru || !rd)) {
      out.skipped.push_back({id, "lane-keeper covered by a region at one station only"});
      continue;
    }
    if (ru) up_members[*ru].push_back({up->arrival_time, id});
    if (rd) down_members[*rd].push_back({down->arrival_time, id});
    if (!ru || !rd) {
      out.warnings.push_back("lane-changing vehicle " + id + " is covered on one lane only");
    }
  }
  auto ordered = [](std::vector<Member>& m) {
    std::sort(m.begin(), m.end(), [](const Member& a, const Member& b) {
      return a.time != b.time ? a.time < b.time : a.id < b.id;
    });
    std::vector<VehicleId> ids;
    for (auto& x : m) ids.push_back(x.id);
    return ids;
  };
  for (std::size_t i = 0; i < out.regions.size(); ++i) {
    out.regions[i].upstream_members = ordered(up_members[i]);
    out.regions[i].downstream_members = ordered(down_members[i]);
  }
  return out;
}

}  // namespace trajfuse
