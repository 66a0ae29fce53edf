#pragma once

// Run configuration: one JSON document, strict keys, every field defaulted.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajfuse/core.hpp"
#include "trajfuse/fusion.hpp"
#include "trajfuse/macro_state.hpp"
#include "trajfuse/micro_candidates.hpp"
#include "trajfuse/sim_oracle.hpp"

namespace trajfuse {

struct IoPaths {
  std::string input;       ///< ground-truth trajectory CSV
  std::string output_dir = "out";
  std::string truth_lc;    ///< optional truth LC CSV for evaluation
};

struct RunConfig {
  SegmentGeometry geometry{0.0, 500.0, {}};
  AsmParams asm_params;
  NewellConfig newell;
  FusionConfig fusion;
  GridSpec grid;
  double penetration = 0.10;
  std::vector<double> penetration_rates{0.05, 0.10, 0.15, 0.20};  ///< rows of `compare`
  std::uint64_t seed = 42;
  double sample_interval = 1.0;
  double margin = 100.0;
  double match_threshold = 30.0;
  IoPaths io;

  void validate() const {
    geometry.validate();
    asm_params.validate();
    newell.validate();
    fusion.validate();
    grid.validate();
    auto rate_ok = [](double r) { return r > 0.0 && r < 1.0; };
    if (!rate_ok(penetration)) throw ValidationError("penetration: must lie in (0, 1)");
    for (double r : penetration_rates) {
      if (!rate_ok(r)) throw ValidationError("penetration_rates: each rate must lie in (0, 1)");
    }
    if (!(sample_interval > 0.0)) throw ValidationError("sample_interval: must be positive");
    if (margin < 0.0) throw ValidationError("margin: must be non-negative");
    if (!(match_threshold > 0.0)) throw ValidationError("match_threshold: must be positive");
  }
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw ValidationError((where.empty() ? "" : where + ".") + key + ": unknown key");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError((where.empty() ? "" : where + ".") + key + ": wrong type");
  }
}

inline const char* to_string(OmegaMode m) { return m == OmegaMode::pooled ? "pooled" : "per_source"; }

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::read;
  RunConfig c;
  detail::check_keys(j, "",
                     {"geometry", "asm", "newell", "fusion", "grid", "penetration", "penetration_rates", "seed",
                      "sample_interval", "margin", "match_threshold", "io"});
  if (j.contains("geometry")) {
    const auto& g = j["geometry"];
    detail::check_keys(g, "geometry", {"x_up", "x_down", "lanes"});
    read(g, "x_up", c.geometry.x_up, "geometry");
    read(g, "x_down", c.geometry.x_down, "geometry");
    read(g, "lanes", c.geometry.lanes, "geometry");
  }
  if (j.contains("asm")) {
    const auto& a = j["asm"];
    detail::check_keys(a, "asm", {"sigma", "tau", "v_free", "v_cong", "v_thresh", "delta_v", "source_weights",
                                  "omega_mode", "support"});
    auto& p = c.asm_params;
    read(a, "sigma", p.sigma, "asm");
    read(a, "tau", p.tau, "asm");
    read(a, "v_free", p.v_free, "asm");
    read(a, "v_cong", p.v_cong, "asm");
    read(a, "v_thresh", p.v_thresh, "asm");
    read(a, "delta_v", p.delta_v, "asm");
    read(a, "support", p.support, "asm");
    if (a.contains("source_weights")) {
      const auto& w = a["source_weights"];
      detail::check_keys(w, "asm.source_weights", {"fixed", "probe"});
      read(w, "fixed", p.source_weights[0], "asm.source_weights");
      read(w, "probe", p.source_weights[1], "asm.source_weights");
    }
    if (a.contains("omega_mode")) {
      std::string m;
      read(a, "omega_mode", m, "asm");
      if (m == "per_source") {
        p.omega_mode = OmegaMode::per_source;
      } else if (m == "pooled") {
        p.omega_mode = OmegaMode::pooled;
      } else {
        throw ValidationError("asm.omega_mode: expected per_source or pooled");
      }
    }
  }
  if (j.contains("newell")) {
    const auto& n = j["newell"];
    detail::check_keys(n, "newell", {"jam_density", "v_cong", "headway_adjust"});
    read(n, "jam_density", c.newell.jam_density, "newell");
    read(n, "v_cong", c.newell.v_cong, "newell");
    read(n, "headway_adjust", c.newell.headway_adjust, "newell");
  }
  if (j.contains("fusion")) {
    const auto& f = j["fusion"];
    detail::check_keys(f, "fusion", {"v_threshold", "dis_threshold", "l_safe", "weight_grid_step"});
    read(f, "v_threshold", c.fusion.v_threshold, "fusion");
    read(f, "dis_threshold", c.fusion.dis_threshold, "fusion");
    read(f, "l_safe", c.fusion.l_safe, "fusion");
    read(f, "weight_grid_step", c.fusion.weight_grid_step, "fusion");
  }
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    detail::check_keys(g, "grid", {"dx", "dt"});
    read(g, "dx", c.grid.dx, "grid");
    read(g, "dt", c.grid.dt, "grid");
  }
  read(j, "penetration", c.penetration, "");
  read(j, "penetration_rates", c.penetration_rates, "");
  read(j, "seed", c.seed, "");
  read(j, "sample_interval", c.sample_interval, "");
  read(j, "margin", c.margin, "");
  read(j, "match_threshold", c.match_threshold, "");
  if (j.contains("io")) {
    const auto& io = j["io"];
    detail::check_keys(io, "io", {"input", "output_dir", "truth_lc"});
    read(io, "input", c.io.input, "io");
    read(io, "output_dir", c.io.output_dir, "io");
    read(io, "truth_lc", c.io.truth_lc, "io");
  }
  c.validate();
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  const auto& p = c.asm_params;
  return {
      {"geometry", {{"x_up", c.geometry.x_up}, {"x_down", c.geometry.x_down}, {"lanes", c.geometry.lanes}}},
      {"asm",
       {{"sigma", p.sigma},
        {"tau", p.tau},
        {"v_free", p.v_free},
        {"v_cong", p.v_cong},
        {"v_thresh", p.v_thresh},
        {"delta_v", p.delta_v},
        {"source_weights", {{"fixed", p.source_weights[0]}, {"probe", p.source_weights[1]}}},
        {"omega_mode", detail::to_string(p.omega_mode)},
        {"support", p.support}}},
      {"newell",
       {{"jam_density", c.newell.jam_density},
        {"v_cong", c.newell.v_cong},
        {"headway_adjust", c.newell.headway_adjust}}},
      {"fusion",
       {{"v_threshold", c.fusion.v_threshold},
        {"dis_threshold", c.fusion.dis_threshold},
        {"l_safe", c.fusion.l_safe},
        {"weight_grid_step", c.fusion.weight_grid_step}}},
      {"grid", {{"dx", c.grid.dx}, {"dt", c.grid.dt}}},
      {"penetration", c.penetration},
      {"penetration_rates", c.penetration_rates},
      {"seed", c.seed},
      {"sample_interval", c.sample_interval},
      {"margin", c.margin},
      {"match_threshold", c.match_threshold},
      {"io", {{"input", c.io.input}, {"output_dir", c.io.output_dir}, {"truth_lc", c.io.truth_lc}}},
  };
}

/// Scenario document for `simulate`: {"scenario": {...}, "horizon": s, "seed": n}.
struct ScenarioDocument {
  ScenarioSpec spec;
  double horizon = 300.0;
  std::uint64_t seed = 0;
};

inline ScenarioDocument scenario_from_json(const nlohmann::json& j) {
  using detail::read;
  ScenarioDocument doc;
  detail::check_keys(j, "", {"scenario", "horizon", "seed"});
  read(j, "horizon", doc.horizon, "");
  read(j, "seed", doc.seed, "");
  if (!j.contains("scenario")) throw ValidationError("scenario: missing");
  const auto& s = j["scenario"];
  auto& spec = doc.spec;
  detail::check_keys(s, "scenario",
                     {"geometry", "vehicles_per_lane", "entry_headways", "desired_speeds", "lane_entry_offset",
                      "newell", "lc_script", "bottleneck", "heterogeneity", "x_entry", "x_exit", "dt"});
  if (s.contains("geometry")) {
    const auto& g = s["geometry"];
    detail::check_keys(g, "scenario.geometry", {"x_up", "x_down", "lanes"});
    read(g, "x_up", spec.geometry.x_up, "scenario.geometry");
    read(g, "x_down", spec.geometry.x_down, "scenario.geometry");
    read(g, "lanes", spec.geometry.lanes, "scenario.geometry");
  }
  read(s, "vehicles_per_lane", spec.vehicles_per_lane, "scenario");
  read(s, "entry_headways", spec.entry_headways, "scenario");
  read(s, "desired_speeds", spec.desired_speeds, "scenario");
  read(s, "lane_entry_offset", spec.lane_entry_offset, "scenario");
  read(s, "x_entry", spec.x_entry, "scenario");
  read(s, "x_exit", spec.x_exit, "scenario");
  read(s, "dt", spec.dt, "scenario");
  if (s.contains("newell")) {
    const auto& n = s["newell"];
    detail::check_keys(n, "scenario.newell", {"jam_density", "v_cong"});
    read(n, "jam_density", spec.newell.jam_density, "scenario.newell");
    read(n, "v_cong", spec.newell.v_cong, "scenario.newell");
  }
  if (s.contains("lc_script")) {
    if (!s["lc_script"].is_array()) throw ValidationError("scenario.lc_script: expected an array");
    for (const auto& e : s["lc_script"]) {
      detail::check_keys(e, "scenario.lc_script[]", {"vehicle_id", "target_lane", "trigger_time"});
      LcScriptEntry entry;
      read(e, "vehicle_id", entry.vehicle_id, "scenario.lc_script[]");
      read(e, "target_lane", entry.target_lane, "scenario.lc_script[]");
      read(e, "trigger_time", entry.trigger_time, "scenario.lc_script[]");
      spec.lc_script.push_back(entry);
    }
  }
  if (s.contains("bottleneck")) {
    const auto& b = s["bottleneck"];
    detail::check_keys(b, "scenario.bottleneck", {"position", "length", "t_start", "t_end", "speed"});
    Bottleneck bn;
    read(b, "position", bn.position, "scenario.bottleneck");
    read(b, "length", bn.length, "scenario.bottleneck");
    read(b, "t_start", bn.t_start, "scenario.bottleneck");
    read(b, "t_end", bn.t_end, "scenario.bottleneck");
    read(b, "speed", bn.speed, "scenario.bottleneck");
    spec.bottleneck = bn;
  }
  if (s.contains("heterogeneity")) {
    const auto& h = s["heterogeneity"];
    detail::check_keys(h, "scenario.heterogeneity", {"lag", "desired_speed", "headway", "lag_period"});
    read(h, "lag", spec.heterogeneity.lag, "scenario.heterogeneity");
    read(h, "desired_speed", spec.heterogeneity.desired_speed, "scenario.heterogeneity");
    read(h, "headway", spec.heterogeneity.headway, "scenario.heterogeneity");
    read(h, "lag_period", spec.heterogeneity.lag_period, "scenario.heterogeneity");
  }
  spec.validate();
  if (!(doc.horizon > 0.0)) throw ValidationError("horizon: must be positive");
  return doc;
}

}  // namespace trajfuse
