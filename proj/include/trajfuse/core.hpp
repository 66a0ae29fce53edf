#pragma once

// Trajectory types and kinematic primitives shared by every stage of the
// reconstruction pipeline.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace trajfuse {

using VehicleId = std::string;
using LaneId = int;

inline constexpr double kTimeEps = 1e-9;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Input or configuration that violates a documented contract.
class ValidationError : public Error {
public:
  using Error::Error;
};

class InsufficientSamples : public Error {
public:
  using Error::Error;
};

class WindowError : public Error {
public:
  using Error::Error;
};

struct TrajectoryPoint {
  double time = 0.0;
  double position = 0.0;
  LaneId lane = 0;
};

struct SpeedSample {
  double time = 0.0;
  double speed = 0.0;
};

/// One vehicle's samples on a uniform time grid. The grid origin is free:
/// shifted or anchored trajectories keep their own offset.
class Trajectory {
public:
  VehicleId vehicle_id;
  std::vector<TrajectoryPoint> points;
  double sample_interval = 1.0;

  Trajectory() = default;
  Trajectory(VehicleId id, std::vector<TrajectoryPoint> pts, double dt)
      : vehicle_id(std::move(id)), points(std::move(pts)), sample_interval(dt) {}

  [[nodiscard]] bool empty() const { return points.empty(); }
  [[nodiscard]] std::size_t size() const { return points.size(); }
  [[nodiscard]] double start_time() const { return points.front().time; }
  [[nodiscard]] double end_time() const { return points.back().time; }

  [[nodiscard]] bool covers(double t, double eps = kTimeEps) const {
    return !points.empty() && t >= start_time() - eps && t <= end_time() + eps;
  }

  /// Linear interpolation between samples; throws outside the window.
  [[nodiscard]] double position_at(double t) const {
    if (!covers(t)) {
      throw WindowError("trajectory " + vehicle_id + " not defined at t=" + std::to_string(t));
    }
    return interpolate(t);
  }

  /// Linear interpolation inside the window, constant-speed continuation at the
  /// boundary speed outside it.
  [[nodiscard]] double position_extrapolated(double t) const {
    if (points.empty()) throw WindowError("empty trajectory " + vehicle_id);
    if (points.size() == 1) return points.front().position;
    if (t < start_time()) {
      const auto& a = points[0];
      const auto& b = points[1];
      const double v = std::max(0.0, (b.position - a.position) / (b.time - a.time));
      return a.position - v * (a.time - t);
    }
    if (t > end_time()) {
      const auto& a = points[points.size() - 2];
      const auto& b = points.back();
      const double v = std::max(0.0, (b.position - a.position) / (b.time - a.time));
      return b.position + v * (t - b.time);
    }
    return interpolate(t);
  }

  /// Lane held at time t: the lane of the last sample at or before t.
  [[nodiscard]] LaneId lane_at(double t) const {
    if (!covers(t)) {
      throw WindowError("trajectory " + vehicle_id + " not defined at t=" + std::to_string(t));
    }
    auto it = std::upper_bound(points.begin(), points.end(), t + kTimeEps,
                               [](double v, const TrajectoryPoint& p) { return v < p.time; });
    if (it == points.begin()) return points.front().lane;
    return std::prev(it)->lane;
  }

  [[nodiscard]] bool changes_lane() const {
    return std::any_of(points.begin(), points.end(),
                       [&](const TrajectoryPoint& p) { return p.lane != points.front().lane; });
  }

  /// Checks the time-grid and finiteness invariants.
  void validate() const {
    if (!(sample_interval > 0.0)) throw ValidationError("non-positive sample interval for " + vehicle_id);
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!std::isfinite(points[i].time) || !std::isfinite(points[i].position)) {
        throw ValidationError("non-finite sample in trajectory " + vehicle_id);
      }
      if (i > 0) {
        const double gap = points[i].time - points[i - 1].time;
        if (!(gap > 0.0)) throw ValidationError("non-increasing time in trajectory " + vehicle_id);
        if (std::abs(gap - sample_interval) > 1e-9 * std::max(1.0, sample_interval) + 1e-9) {
          throw ValidationError("irregular sample spacing in trajectory " + vehicle_id);
        }
      }
    }
  }

private:
  [[nodiscard]] double interpolate(double t) const {
    if (t <= start_time()) return points.front().position;
    if (t >= end_time()) return points.back().position;
    auto hi = std::lower_bound(points.begin(), points.end(), t,
                               [](const TrajectoryPoint& p, double v) { return p.time < v; });
    if (hi->time == t) return hi->position;
    auto lo = std::prev(hi);
    const double f = (t - lo->time) / (hi->time - lo->time);
    return lo->position + f * (hi->position - lo->position);
  }
};

/// Newell lags: the follower replays its leader's path time_lag later and
/// space_lag further upstream.
struct NewellShift {
  double time_lag = 0.0;
  double space_lag = 0.0;

  [[nodiscard]] double wave_speed() const { return space_lag / time_lag; }

  void validate() const {
    if (!(time_lag > 0.0) || !(space_lag > 0.0)) {
      throw ValidationError("Newell lags must be positive");
    }
  }
};

enum class ShiftDirection { follower, leader };

struct SegmentGeometry {
  double x_up = 0.0;
  double x_down = 500.0;
  std::vector<LaneId> lanes;

  void validate() const {
    if (!(x_down > x_up)) throw ValidationError("geometry: x_down must exceed x_up");
  }
  [[nodiscard]] double length() const { return x_down - x_up; }
};

/// Uniform grid of n+1 instants spanning [start, end].
struct TimeGrid {
  double start = 0.0;
  double end = 0.0;
  std::size_t steps = 1;

  [[nodiscard]] double step() const { return (end - start) / static_cast<double>(steps); }
  [[nodiscard]] double at(std::size_t k) const {
    return k == steps ? end : start + static_cast<double>(k) * step();
  }
  [[nodiscard]] std::vector<double> times() const {
    std::vector<double> out(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) out[k] = at(k);
    return out;
  }
};

/// Grid over [start, end] with step as close to nominal_dt as an integer
/// subdivision allows; at least min_steps intervals.
inline TimeGrid spanning_grid(double start, double end, double nominal_dt, std::size_t min_steps = 2) {
  if (!(end > start)) throw WindowError("spanning grid needs end > start");
  const auto n = static_cast<std::size_t>(std::llround((end - start) / nominal_dt));
  return TimeGrid{start, end, std::max(min_steps, n)};
}

inline std::vector<SpeedSample> velocity_profile(const Trajectory& traj) {
  const auto& p = traj.points;
  if (p.size() < 3) {
    throw InsufficientSamples("velocity profile of " + traj.vehicle_id + " needs at least 3 samples");
  }
  std::vector<SpeedSample> out(p.size());
  const double h = traj.sample_interval;
  out.front() = {p.front().time, (p[1].position - p[0].position) / h};
  for (std::size_t k = 1; k + 1 < p.size(); ++k) {
    out[k] = {p[k].time, (p[k + 1].position - p[k - 1].position) / (2.0 * h)};
  }
  const auto n = p.size() - 1;
  out.back() = {p[n].time, (p[n].position - p[n - 1].position) / h};
  return out;
}

/// Speed at t by linear interpolation of the velocity profile. Trajectories
/// with two samples use their single slope.
inline double speed_at(const Trajectory& traj, double t) {
  if (traj.size() < 2) throw InsufficientSamples("speed of " + traj.vehicle_id + " needs 2 samples");
  if (traj.size() == 2) {
    const auto& a = traj.points[0];
    const auto& b = traj.points[1];
    return (b.position - a.position) / (b.time - a.time);
  }
  const auto prof = velocity_profile(traj);
  if (t <= prof.front().time) return prof.front().speed;
  if (t >= prof.back().time) return prof.back().speed;
  auto hi = std::lower_bound(prof.begin(), prof.end(), t,
                             [](const SpeedSample& s, double v) { return s.time < v; });
  auto lo = std::prev(hi);
  const double f = (t - lo->time) / (hi->time - lo->time);
  return lo->speed + f * (hi->speed - lo->speed);
}

/// follower: out(t) = ref(t - eta) - theta.  leader: out(t) = ref(t + eta) + theta.
/// Samples move with the shift, so the output stays piecewise linear on the same
/// spacing and the two directions compose to the identity.
inline Trajectory shift_trajectory(const Trajectory& ref, const NewellShift& shift, ShiftDirection direction) {
  if (ref.empty()) throw WindowError("cannot shift empty trajectory " + ref.vehicle_id);
  const double sign = direction == ShiftDirection::follower ? 1.0 : -1.0;
  Trajectory out{ref.vehicle_id, {}, ref.sample_interval};
  out.points.reserve(ref.size());
  for (const auto& p : ref.points) {
    out.points.push_back({p.time + sign * shift.time_lag, p.position - sign * shift.space_lag, p.lane});
  }
  return out;
}

/// Lead position minus follower position at t; negative means overlap.
inline double headway(const Trajectory& lead, const Trajectory& follow, double t) {
  return lead.position_at(t) - follow.position_at(t);
}

/// Samples traj at the given instants (interpolating, extrapolating when asked).
inline Trajectory sample_at(const Trajectory& traj, std::span<const double> times, double dt, bool extrapolate) {
  Trajectory out{traj.vehicle_id, {}, dt};
  out.points.reserve(times.size());
  for (double t : times) {
    const double x = extrapolate ? traj.position_extrapolated(t) : traj.position_at(t);
    const LaneId lane = traj.covers(t) ? traj.lane_at(t) : (t < traj.start_time() ? traj.points.front().lane
                                                                                  : traj.points.back().lane);
    out.points.push_back({t, x, lane});
  }
  return out;
}

/// Resamples onto the global grid k*dt (k integer) inside the trajectory window.
inline Trajectory resample(const Trajectory& traj, double dt) {
  if (traj.empty()) return Trajectory{traj.vehicle_id, {}, dt};
  const auto k0 = static_cast<long long>(std::ceil(traj.start_time() / dt - 1e-9));
  const auto k1 = static_cast<long long>(std::floor(traj.end_time() / dt + 1e-9));
  std::vector<double> times;
  for (long long k = k0; k <= k1; ++k) times.push_back(static_cast<double>(k) * dt);
  return sample_at(traj, times, dt, false);
}

/// Common time window of two trajectories, if any.
inline std::optional<std::pair<double, double>> common_window(const Trajectory& a, const Trajectory& b) {
  if (a.empty() || b.empty()) return std::nullopt;
  const double lo = std::max(a.start_time(), b.start_time());
  const double hi = std::min(a.end_time(), b.end_time());
  if (hi < lo - kTimeEps) return std::nullopt;
  return std::make_pair(lo, std::max(lo, hi));
}

/// First time the trajectory reaches position x (linear interpolation), if ever.
inline std::optional<double> crossing_time(const Trajectory& traj, double x) {
  const auto& p = traj.points;
  if (p.empty() || p.front().position > x) return std::nullopt;
  if (p.front().position == x) return p.front().time;
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    if (p[k].position < x && p[k + 1].position >= x) {
      const double f = (x - p[k].position) / (p[k + 1].position - p[k].position);
      return p[k].time + f * (p[k + 1].time - p[k].time);
    }
  }
  return std::nullopt;
}

}  // namespace trajfuse
