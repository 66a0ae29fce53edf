#pragma once

// Newell car-following candidates for hidden vehicles: forward/backward
// car-following (CFF/CFB) from the vehicle ahead and the inverse variants
// (ICFF/ICFB) from the vehicle behind.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trajfuse/core.hpp"
#include "trajfuse/ingest.hpp"

namespace trajfuse {

enum class Variant { cff, cfb, icff, icfb };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::cff: return "cff";
    case Variant::cfb: return "cfb";
    case Variant::icff: return "icff";
    case Variant::icfb: return "icfb";
  }
  return "?";
}

inline Station anchor_station(Variant v) {
  return v == Variant::cff || v == Variant::icff ? Station::upstream : Station::downstream;
}

inline bool is_inverse(Variant v) { return v == Variant::icff || v == Variant::icfb; }

struct NewellConfig {
  double jam_density = 1.0 / 7.0;  ///< veh/m
  double v_cong = -5.0;            ///< m/s
  bool headway_adjust = false;

  void validate() const {
    if (!(jam_density > 0.0)) throw ValidationError("newell: jam_density must be positive");
    if (!(v_cong != 0.0)) throw ValidationError("newell: v_cong must be non-zero");
  }

  /// theta = 1/k_j, eta = 1/(|v_cong| k_j).
  [[nodiscard]] NewellShift base_shift() const {
    return {1.0 / (std::abs(v_cong) * jam_density), 1.0 / jam_density};
  }
};

struct LagSet {
  std::optional<NewellShift> cff, cfb, icff, icfb;

  [[nodiscard]] const std::optional<NewellShift>& get(Variant v) const {
    switch (v) {
      case Variant::cff: return cff;
      case Variant::cfb: return cfb;
      case Variant::icff: return icff;
      case Variant::icfb: return icfb;
    }
    return cff;
  }
};

struct CandidateSet {
  VehicleId vehicle_id;
  LaneId lane = 0;
  std::optional<Trajectory> cff, cfb, icff, icfb;

  [[nodiscard]] const std::optional<Trajectory>& get(Variant v) const {
    switch (v) {
      case Variant::cff: return cff;
      case Variant::cfb: return cfb;
      case Variant::icff: return icff;
      case Variant::icfb: return icfb;
    }
    return cff;
  }
  std::optional<Trajectory>& get(Variant v) {
    return const_cast<std::optional<Trajectory>&>(std::as_const(*this).get(v));
  }
};

namespace detail {

inline NewellShift headway_scaled(const NewellShift& base, const DetectionEvent& own, const DetectionEvent* other,
                                  const NewellConfig& config) {
  if (!config.headway_adjust || other == nullptr) return base;
  const double h = std::abs(own.arrival_time - other->arrival_time);
  if (h > 0.0 && h < base.time_lag) {
    const double f = h / base.time_lag;
    return {base.time_lag * f, base.space_lag * f};
  }
  return base;
}

}  // namespace detail

/// Per-variant lags for one vehicle of a region. Base lags follow from jam
/// density and congested wave speed; with headway_adjust, a detected time
/// headway shorter than eta scales both lags by h/eta.
inline LagSet derive_lags(const Region& region, const VehicleId& vehicle_id, const DetectionLog& log,
                          const NewellConfig& config) {
  config.validate();
  const auto* up = log.find(vehicle_id, Station::upstream);
  const auto* down = log.find(vehicle_id, Station::downstream);
  if (!up && !down) throw ValidationError("vehicle " + vehicle_id + " has no detections");
  const NewellShift base = config.base_shift();
  LagSet lags;
  if (up && up->lane == region.lane) {
    lags.cff = detail::headway_scaled(base, *up, log.adjacent(*up, -1), config);
    lags.icff = detail::headway_scaled(base, *up, log.adjacent(*up, +1), config);
  }
  if (down && down->lane == region.lane) {
    lags.cfb = detail::headway_scaled(base, *down, log.adjacent(*down, -1), config);
    lags.icfb = detail::headway_scaled(base, *down, log.adjacent(*down, +1), config);
  }
  return lags;
}

/// Finds the lag along the wave line (theta/eta fixed to the shift's ratio)
/// that makes the shifted reference hit (anchor time, station position).
inline NewellShift anchored_shift(const Trajectory& reference, double anchor_time, double station_x,
                                  const NewellShift& shift, bool inverse) {
  const double c = shift.wave_speed();
  // follower: ref(t_a - eta) - c*eta - x_s, decreasing in eta.
  // leader:   x_s - ref(t_a + eta) - c*eta, decreasing in eta.
  auto f = [&](double eta) {
    return inverse ? station_x - reference.position_extrapolated(anchor_time + eta) - c * eta
                   : reference.position_extrapolated(anchor_time - eta) - station_x - c * eta;
  };
  double lo = 0.0;
  double hi = 0.0;
  if (f(0.0) >= 0.0) {
    hi = std::max(1.0, shift.time_lag);
    for (int i = 0; f(hi) > 0.0; ++i) {
      if (i > 80) throw WindowError("no anchored lag for reference " + reference.vehicle_id);
      lo = hi;
      hi *= 2.0;
    }
  } else {
    lo = -std::max(1.0, shift.time_lag);
    for (int i = 0; f(lo) < 0.0; ++i) {
      if (i > 80) throw WindowError("no anchored lag for reference " + reference.vehicle_id);
      hi = lo;
      lo *= 2.0;
    }
  }
  for (int i = 0; i < 200 && hi - lo > 1e-12; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  const double eta = 0.5 * (lo + hi);
  return {eta, c * eta};
}

/// One Newell candidate on `window`. CFF/CFB replay the vehicle ahead
/// (follower shift), ICFF/ICFB the vehicle behind (leader shift). The lag is
/// re-solved along the shift's wave line so the candidate crosses the anchor
/// station at the detected time; the reference is continued at constant speed
/// beyond its own window.
inline Trajectory estimate_candidate(const DetectionEvent& anchor, double station_x, const Trajectory& reference,
                                     Variant variant, const NewellShift& shift, const TimeGrid& window,
                                     LaneId lane) {
  shift.validate();
  if (anchor.station != anchor_station(variant)) {
    throw ValidationError(std::string("variant ") + to_string(variant) + " needs a " +
                          to_string(anchor_station(variant)) + " anchor");
  }
  if (reference.size() < 2) {
    throw WindowError("reference " + reference.vehicle_id + " too short for a candidate");
  }
  const bool inverse = is_inverse(variant);
  const NewellShift lag = anchored_shift(reference, anchor.arrival_time, station_x, shift, inverse);
  const double sign = inverse ? -1.0 : 1.0;
  // The reference must overlap the shifted window somewhere.
  const double ref_lo = reference.start_time() + sign * lag.time_lag;
  const double ref_hi = reference.end_time() + sign * lag.time_lag;
  if (ref_hi < window.start - kTimeEps || ref_lo > window.end + kTimeEps) {
    throw WindowError("reference " + reference.vehicle_id + " does not reach the window of " + anchor.vehicle_id);
  }
  Trajectory out{anchor.vehicle_id, {}, window.step()};
  out.points.reserve(window.steps + 1);
  for (std::size_t k = 0; k <= window.steps; ++k) {
    const double t = window.at(k);
    const double x = reference.position_extrapolated(t - sign * lag.time_lag) - sign * lag.space_lag;
    out.points.push_back({t, x, lane});
  }
  // Pin the anchor sample to the station; the residual is bisection noise.
  auto& pinned = variant == Variant::cff || variant == Variant::icff ? out.points.front() : out.points.back();
  if (std::abs(pinned.time - anchor.arrival_time) < kTimeEps) pinned.position = station_x;
  return out;
}

/// Reconstruction window of a hidden vehicle: its upstream to downstream
/// detection, on a grid close to the nominal sample interval.
inline TimeGrid vehicle_window(const VehicleId& id, const DetectionLog& log, double sample_interval) {
  const auto* up = log.find(id, Station::upstream);
  const auto* down = log.find(id, Station::downstream);
  if (!up || !down) throw ValidationError("vehicle " + id + " lacks a detection at both stations");
  return spanning_grid(up->arrival_time, down->arrival_time, sample_interval);
}

/// Candidates for every hidden vehicle of the region. CFF chains forward from
/// the leading probe through the upstream members, ICFF backward from the
/// trailing probe; CFB/ICFB likewise over the downstream members.
inline std::vector<CandidateSet> generate_candidates(const Region& region, const DetectionLog& log,
                                                     const SegmentGeometry& geometry, const NewellConfig& config,
                                                     double sample_interval) {
  if (region.leading_probe.empty() || region.trailing_probe.empty()) {
    throw ValidationError("region on lane " + std::to_string(region.lane) + " lacks a bounding probe");
  }
  std::map<VehicleId, CandidateSet> sets;
  for (const auto& id : region.hidden_vehicle_ids()) sets[id] = CandidateSet{id, region.lane, {}, {}, {}, {}};

  auto chain = [&](const std::vector<VehicleId>& members, Station station, Variant forward, Variant inverse) {
    const double x_s = station == Station::upstream ? geometry.x_up : geometry.x_down;
    const Trajectory* ref = &region.leading_probe;
    for (const auto& id : members) {
      const auto lags = derive_lags(region, id, log, config);
      const auto& ev = *log.find(id, station);
      auto& slot = sets[id].get(forward);
      slot = estimate_candidate(ev, x_s, *ref, forward, *lags.get(forward), vehicle_window(id, log, sample_interval),
                                region.lane);
      ref = &*slot;
    }
    ref = &region.trailing_probe;
    for (auto it = members.rbegin(); it != members.rend(); ++it) {
      const auto lags = derive_lags(region, *it, log, config);
      const auto& ev = *log.find(*it, station);
      auto& slot = sets[*it].get(inverse);
      slot = estimate_candidate(ev, x_s, *ref, inverse, *lags.get(inverse),
                                vehicle_window(*it, log, sample_interval), region.lane);
      ref = &*slot;
    }
  };
  chain(region.upstream_members, Station::upstream, Variant::cff, Variant::icff);
  chain(region.downstream_members, Station::downstream, Variant::cfb, Variant::icfb);

  std::vector<CandidateSet> out;
  for (const auto& id : region.hidden_vehicle_ids()) out.push_back(std::move(sets[id]));
  return out;
}

}  // namespace trajfuse
