// trajfuse: simulate, reconstruct, estimate-state, evaluate, compare.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "trajfuse/trajfuse.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace trajfuse;

namespace {

struct Overrides {
  std::string config;
  std::string input;
  std::string out;
  double penetration = 0.0;
  std::uint64_t seed = 0;
  CLI::Option* penetration_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

RunConfig load_config(const Overrides& o) {
  RunConfig c = config_from_json(o.config.empty() ? json::object() : read_json_file(o.config));
  if (!o.input.empty()) c.io.input = o.input;
  if (!o.out.empty()) c.io.output_dir = o.out;
  if (o.penetration_opt && o.penetration_opt->count()) c.penetration = o.penetration;
  if (o.seed_opt && o.seed_opt->count()) c.seed = o.seed;
  c.validate();
  return c;
}

TrajectorySet read_truth(const std::string& path, const RunConfig& c) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path + ": cannot open");
  return parse_trajectory_file(in, c.geometry, {c.sample_interval, c.margin});
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot write");
  return out;
}

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
  auto out = open_out(path);
  fn(out);
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

void write_json(const fs::path& path, const json& j) {
  write_file(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

json accuracy_json(const AccuracyReport& r) {
  return {{"mae_m", r.mae}, {"rmse_m", r.rmse}, {"mape_pct", r.mape}, {"samples", r.samples},
          {"vehicles", r.per_vehicle.size()}};
}

json lc_json(const LcMatchReport& r) {
  json matches = json::array();
  for (const auto& m : r.matches) {
    matches.push_back({{"vehicle_id", m.vehicle_id},
                       {"class", to_string(m.match)},
                       {"distance_m", m.distance ? json(*m.distance) : json(nullptr)}});
  }
  return {{"well", r.well},       {"moderate", r.moderate}, {"failed", r.failed},
          {"total", r.total()},   {"success_rate", r.success_rate()}, {"matches", matches}};
}

json manifest(const std::string& command, const RunConfig& c) {
  return {{"command", command}, {"seed", c.seed}, {"config", to_json(c)}};
}

std::vector<VelocityField> field_list(const std::map<LaneId, VelocityField>& fields) {
  std::vector<VelocityField> out;
  for (const auto& [lane, f] : fields) out.push_back(f);
  return out;
}

void need_input(const RunConfig& c) {
  if (c.io.input.empty()) throw ValidationError("io.input: no input trajectory file given");
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir, CLI::Option* seed_opt,
                 std::uint64_t seed, CLI::Option* horizon_opt, double horizon) {
  json doc = read_json_file(scenario_path);
  if (seed_opt->count()) doc["seed"] = seed;
  if (horizon_opt->count()) doc["horizon"] = horizon;
  const auto s = scenario_from_json(doc);
  const auto sim = simulate(s.spec, s.horizon, s.seed);
  const fs::path dir = out_dir;
  write_file(dir / "truth.csv", [&](std::ostream& out) { write_truth_csv(out, sim.truth); });
  write_file(dir / "truth_lc.csv", [&](std::ostream& out) { write_truth_lc_csv(out, sim.lane_changes); });
  json blocked = json::array();
  for (const auto& e : sim.infeasible) {
    blocked.push_back({{"vehicle_id", e.vehicle_id}, {"target_lane", e.target_lane}, {"trigger_time", e.trigger_time}});
    std::cerr << "warning: lane change of " << e.vehicle_id << " never found a gap\n";
  }
  write_json(dir / "manifest.json", {{"command", "simulate"}, {"seed", s.seed}, {"scenario", doc}, {"blocked", blocked}});
  std::cout << sim.truth.size() << " vehicles, " << sim.lane_changes.size() << " lane changes\n";
  return 0;
}

int cmd_reconstruct(const Overrides& o) {
  const auto c = load_config(o);
  need_input(c);
  const auto truth = read_truth(c.io.input, c);
  const auto r = run_pipeline(truth, c);
  const fs::path dir = c.io.output_dir;
  write_file(dir / "trajectories.csv", [&](std::ostream& out) { write_trajectories_csv(out, r.split.probes, r.reconstruction.trajectories,
                         r.reconstruction.unpaired); });
  write_file(dir / "lc_decisions.csv", [&](std::ostream& out) { write_lc_decisions_csv(out, r.reconstruction.lc_outcomes); });
  const auto fields = field_list(r.fields);
  write_file(dir / "field.csv", [&](std::ostream& out) { write_field_csv(out, fields); });
  auto m = manifest("reconstruct", c);
  json probes = json::array();
  for (const auto& [id, t] : r.split.probes.trajectories) probes.push_back(id);
  m["probes"] = probes;
  m["diagnostics"] = r.diagnostics;
  write_json(dir / "manifest.json", m);
  std::size_t paired = 0;
  for (const auto& lc : r.reconstruction.lc_outcomes) paired += lc.status == LcStatus::paired;
  std::cout << r.reconstruction.trajectories.size() << " reconstructed, " << probes.size() << " probes, " << paired
            << "/" << r.reconstruction.lc_outcomes.size() << " lane changes paired\n";
  return 0;
}

int cmd_estimate_state(const Overrides& o) {
  const auto c = load_config(o);
  need_input(c);
  const auto truth = read_truth(c.io.input, c);
  const auto log = extract_detections(truth);
  const auto split = sample_probes(truth, c.penetration, c.seed);
  const auto fields = field_list(build_fields(log, split.probes, c));
  const fs::path dir = c.io.output_dir;
  write_file(dir / "field.csv", [&](std::ostream& out) { write_field_csv(out, fields); });
  write_json(dir / "manifest.json", manifest("estimate-state", c));
  std::cout << fields.size() << " lane fields\n";
  return 0;
}

int cmd_evaluate(const Overrides& o, const std::string& truth_path, const std::string& recon_path,
                 std::string truth_lc_path) {
  const auto c = load_config(o);
  if (truth_lc_path.empty()) truth_lc_path = c.io.truth_lc;
  const auto truth = read_truth(truth_path, c);
  std::ifstream rin(recon_path);
  if (!rin) throw ValidationError(recon_path + ": cannot open");
  auto kinds = read_kinded_trajectories(rin);
  const auto& recon = kinds["reconstructed"];
  const auto& unpaired = kinds["unpaired"];

  auto orphans = orphan_ids(recon, truth);
  for (const auto& id : orphan_ids(unpaired, truth)) orphans.push_back(id);
  if (!orphans.empty()) {
    std::cerr << "error: reconstructed ids missing from truth:";
    for (const auto& id : orphans) std::cerr << ' ' << id;
    std::cerr << '\n';
    return 1;
  }

  std::vector<TruthLc> truth_lc;
  if (truth_lc_path.empty()) {
    truth_lc = truth_lc_events(truth);
  } else {
    std::ifstream lin(truth_lc_path);
    if (!lin) throw ValidationError(truth_lc_path + ": cannot open");
    truth_lc = read_truth_lc_csv(lin);
  }
  std::vector<LcEstimate> estimates;
  for (const auto& t : truth_lc) {
    if (auto it = recon.find(t.vehicle_id); it != recon.end()) {
      const auto e = lane_switch_of(it->second);
      estimates.push_back(e ? *e : LcEstimate{t.vehicle_id, false, 0.0, 0.0});
    } else {
      // Unpaired pieces or no output at all: no LC point was produced.
      estimates.push_back({t.vehicle_id, false, 0.0, 0.0});
    }
  }

  const auto accuracy = score_accuracy(recon, truth, truth.geometry.x_up);
  const auto lc = classify_lc_matches(estimates, truth_lc, c.match_threshold);
  const json report{{"accuracy", accuracy_json(accuracy)}, {"lane_changes", lc_json(lc)}};
  const fs::path dir = c.io.output_dir;
  write_json(dir / "report.json", report);
  write_file(dir / "vehicle_errors.csv", [&](std::ostream& out) { write_vehicle_errors_csv(out, accuracy); });
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_compare(const Overrides& o) {
  const auto c = load_config(o);
  need_input(c);
  const auto truth = read_truth(c.io.input, c);
  const auto table = comparison_table(truth, c);
  json rows = json::array();
  for (const auto& row : table.rows) {
    rows.push_back({{"penetration", row.penetration},
                    {"proposed", accuracy_json(row.proposed)},
                    {"micro", accuracy_json(row.micro)},
                    {"macro", accuracy_json(row.macro)},
                    {"micro_delta_pct", percent_delta(row.proposed.mae, row.micro.mae)},
                    {"macro_delta_pct", percent_delta(row.proposed.mae, row.macro.mae)}});
  }
  const json out{{"rows", rows}};
  const fs::path dir = c.io.output_dir;
  write_json(dir / "comparison.json", out);
  write_json(dir / "manifest.json", manifest("compare", c));
  std::cout << out.dump(2) << '\n';
  return 0;
}

void add_run_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "JSON run configuration");
  cmd->add_option("-i,--input", o.input, "ground-truth trajectory CSV");
  cmd->add_option("-o,--out", o.out, "output directory");
  o.penetration_opt = cmd->add_option("--penetration", o.penetration, "probe penetration rate");
  o.seed_opt = cmd->add_option("--seed", o.seed, "probe sampling seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lane-level trajectory reconstruction from fixed sensors and probe vehicles"};
  app.require_subcommand(1);

  std::string scenario_path, sim_out = "out";
  std::uint64_t sim_seed = 0;
  double sim_horizon = 0.0;
  auto* sim = app.add_subcommand("simulate", "generate ground truth from a scenario document");
  sim->add_option("-s,--scenario", scenario_path, "scenario JSON")->required();
  sim->add_option("-o,--out", sim_out, "output directory");
  auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "simulation seed");
  auto* sim_horizon_opt = sim->add_option("--horizon", sim_horizon, "simulated seconds");

  Overrides recon_o, state_o, eval_o, cmp_o;
  auto* recon = app.add_subcommand("reconstruct", "reconstruct hidden vehicles and lane changes");
  add_run_options(recon, recon_o);
  auto* state = app.add_subcommand("estimate-state", "export the per-lane velocity fields only");
  add_run_options(state, state_o);
  auto* cmp = app.add_subcommand("compare", "score the method and both baselines per penetration rate");
  add_run_options(cmp, cmp_o);

  std::string truth_path, recon_path, truth_lc_path;
  auto* eval = app.add_subcommand("evaluate", "score reconstructed trajectories against ground truth");
  eval->add_option("-c,--config", eval_o.config, "JSON run configuration");
  eval->add_option("-o,--out", eval_o.out, "output directory");
  eval->add_option("--truth", truth_path, "ground-truth trajectory CSV")->required();
  eval->add_option("--recon", recon_path, "reconstructed trajectory CSV")->required();
  eval->add_option("--truth-lc", truth_lc_path, "truth lane-change CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*sim) return cmd_simulate(scenario_path, sim_out, sim_seed_opt, sim_seed, sim_horizon_opt, sim_horizon);
    if (*recon) return cmd_reconstruct(recon_o);
    if (*state) return cmd_estimate_state(state_o);
    if (*eval) return cmd_evaluate(eval_o, truth_path, recon_path, truth_lc_path);
    if (*cmp) return cmd_compare(cmp_o);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
