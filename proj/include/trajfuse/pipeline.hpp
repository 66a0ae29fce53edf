#pragma once

// End-to-end run: detections, probe split, regions, fields, candidates,
// fusion and both baselines.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trajfuse/config.hpp"
#include "trajfuse/core.hpp"
#include "trajfuse/evaluation.hpp"
#include "trajfuse/fusion.hpp"
#include "trajfuse/ingest.hpp"
#include "trajfuse/macro_state.hpp"
#include "trajfuse/micro_candidates.hpp"

namespace trajfuse {

struct PipelineResult {
  DetectionLog log;
  ProbeSplit split;
  Partition partition;
  std::map<LaneId, VelocityField> fields;
  std::vector<std::vector<CandidateSet>> candidates;
  ReconstructionResult reconstruction;
  std::vector<std::string> diagnostics;
};

/// One velocity field per lane from fixed-sensor events and probe samples.
inline std::map<LaneId, VelocityField> build_fields(const DetectionLog& log, const TrajectorySet& probes,
                                                    const RunConfig& config) {
  std::map<LaneId, VelocityField> fields;
  for (LaneId lane : probes.geometry.lanes) {
    const auto samples = collect_samples(log, probes, lane);
    if (samples.empty()) continue;
    const auto window = sample_window(samples, probes.geometry, config.grid.dt);
    fields.emplace(lane, build_velocity_field(lane, window, config.grid, samples, config.asm_params));
  }
  return fields;
}

/// Runs the method on `truth` (every vehicle is seen by the fixed sensors;
/// probes are drawn at config.penetration unless `split` is given).
inline PipelineResult run_pipeline(const TrajectorySet& truth, const RunConfig& config,
                                   std::optional<ProbeSplit> split = std::nullopt) {
  config.validate();
  PipelineResult r;
  r.log = extract_detections(truth);
  r.split = split ? std::move(*split) : sample_probes(truth, config.penetration, config.seed);
  r.partition = partition_regions(r.split.probes, r.split.hidden, r.log);
  for (const auto& s : r.partition.skipped) r.diagnostics.push_back("skipped " + s.vehicle_id + ": " + s.reason);
  for (const auto& w : r.partition.warnings) r.diagnostics.push_back(w);
  r.fields = build_fields(r.log, r.split.probes, config);
  for (const auto& region : r.partition.regions) {
    r.candidates.push_back(
        generate_candidates(region, r.log, truth.geometry, config.newell, config.sample_interval));
  }
  ReconstructionInputs in{&truth.geometry, &r.log, &r.split.probes, &r.partition.regions, &r.candidates, &r.fields};
  r.reconstruction = reconstruct(in, config.fusion);
  for (const auto& d : r.reconstruction.diagnostics) r.diagnostics.push_back(d);
  return r;
}

/// Vehicles reconstructed by the method, in id order.
inline std::vector<VehicleId> reconstructed_ids(const PipelineResult& r) {
  std::vector<VehicleId> ids;
  for (const auto& [id, t] : r.reconstruction.trajectories) ids.push_back(id);
  return ids;
}

struct MethodScores {
  AccuracyReport proposed, micro, macro;
  std::size_t vehicles = 0;
};

/// Scores the method against both baselines on the vehicles all three produce.
inline MethodScores compare_methods(const PipelineResult& r, const TrajectorySet& truth, double baseline_dt) {
  const auto micro = baseline_micro(r.candidates);
  const auto macro = baseline_macro(r.fields, r.log, truth.geometry, reconstructed_ids(r), baseline_dt);
  std::map<VehicleId, Trajectory> p, mi, ma;
  for (const auto& [id, t] : r.reconstruction.trajectories) {
    if (micro.count(id) && macro.trajectories.count(id)) {
      p.emplace(id, t);
      mi.emplace(id, micro.at(id));
      ma.emplace(id, macro.trajectories.at(id));
    }
  }
  MethodScores s;
  s.vehicles = p.size();
  const double x0 = truth.geometry.x_up;
  s.proposed = score_accuracy(p, truth, x0);
  s.micro = score_accuracy(mi, truth, x0);
  s.macro = score_accuracy(ma, truth, x0);
  return s;
}

inline ComparisonTable comparison_table(const TrajectorySet& truth, const RunConfig& config) {
  ComparisonTable table;
  for (double rate : config.penetration_rates) {
    RunConfig c = config;
    c.penetration = rate;
    const auto r = run_pipeline(truth, c);
    const auto s = compare_methods(r, truth, c.sample_interval);
    table.rows.push_back({rate, s.proposed, s.micro, s.macro});
  }
  return table;
}

}  // namespace trajfuse
