// Acceptance suite: one PASS/FAIL/SKIP line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "support/scenarios.hpp"
#include "trajfuse/trajfuse.hpp"

using namespace trajfuse;
namespace fs = std::filesystem;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict = Verdict::fail;
  std::string detail;
};

Outcome check(bool ok, std::string detail) { return {ok ? Verdict::pass : Verdict::fail, std::move(detail)}; }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

int failures = 0;

void criterion(int n, const char* title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {Verdict::fail, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (o.verdict == Verdict::pass && s >= limit_s) o.verdict = Verdict::fail;
  const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::skip ? "SKIP" : "FAIL";
  failures += o.verdict == Verdict::fail;
  std::printf("%s criterion %d: %s | %s | %.2f s (limit %.0f s)\n", tag, n, title, o.detail.c_str(), s, limit_s);
  std::fflush(stdout);
}

Trajectory random_piecewise(std::mt19937_64& rng, const std::string& id) {
  std::uniform_real_distribution<double> dt(0.3, 3.0), v(0.0, 30.0), t0(-20.0, 20.0), x0(-50.0, 50.0);
  std::uniform_int_distribution<int> pieces(2, 40);
  Trajectory t{id, {}, 1.0};
  double time = t0(rng), x = x0(rng);
  t.points.push_back({time, x, 1});
  for (int k = pieces(rng); k > 0; --k) {
    const double h = dt(rng);
    time += h;
    x += v(rng) * h;
    t.points.push_back({time, x, 1});
  }
  return t;
}

// Linear trajectory sampled every second over [t0, t1].
Trajectory line(const std::string& id, double x0, double v, double t0, double t1) {
  Trajectory t{id, {}, 1.0};
  for (double s = t0; s <= t1 + 1e-9; s += 1.0) t.points.push_back({s, x0 + v * (s - t0), 1});
  return t;
}

VelocityField random_field(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> v(0.0, 25.0);
  VelocityField f;
  f.lane = 1;
  f.x0 = -100.0;
  f.dx = 25.0;
  f.t0 = -10.0;
  f.dt = 5.0;
  f.nx = 33;
  f.nt = 20;
  f.values.resize(f.nx * f.nt);
  for (auto& x : f.values) x = v(rng);
  return f;
}

// Ground truth of a scenario with the reconstruction run at spread 10% probes.
struct OracleRun {
  TrajectorySet truth;
  PipelineResult result;
};

OracleRun oracle_run(const ScenarioSpec& spec, double horizon, std::uint64_t seed) {
  OracleRun o;
  o.truth = scenarios::ingest_truth(simulate(spec, horizon, seed));
  o.result = run_pipeline(o.truth, scenarios::oracle_config(), scenarios::spread_probes(o.truth));
  return o;
}

// Smallest gap between consecutive vehicles of a lane (truth order) in the
// reconstructed-plus-probe output; only lane-keepers are compared.
double min_reconstructed_headway(const OracleRun& o) {
  std::map<LaneId, std::vector<std::pair<double, const Trajectory*>>> lanes;
  for (const auto& [id, t] : o.truth.trajectories) {
    if (t.changes_lane()) continue;
    const Trajectory* out = nullptr;
    if (auto it = o.result.reconstruction.trajectories.find(id); it != o.result.reconstruction.trajectories.end()) {
      out = &it->second;
    } else if (auto p = o.result.split.probes.trajectories.find(id); p != o.result.split.probes.trajectories.end()) {
      out = &p->second;
    }
    const auto* up = o.result.log.find(id, Station::upstream);
    if (out && up) lanes[up->lane].push_back({up->arrival_time, out});
  }
  double worst = std::numeric_limits<double>::infinity();
  for (auto& [lane, v] : lanes) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < v.size(); ++i) {
      const auto& lead = *v[i - 1].second;
      const auto& follow = *v[i].second;
      for (const auto& p : follow.points) {
        if (lead.covers(p.time)) worst = std::min(worst, lead.position_at(p.time) - p.position);
      }
    }
  }
  return worst;
}

std::string ngsim_path() {
  if (const char* env = std::getenv("TRAJFUSE_NGSIM_CSV")) return env;
  const fs::path local = fs::path(TRAJFUSE_DATA_DIR) / "us101_0750_0805.csv";
  return fs::exists(local) ? local.string() : std::string{};
}

}  // namespace

int main() {
  criterion(1, "field identities", 1.0, [] {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> ux(0.0, 500.0), ut(0.0, 200.0), uv(0.0, 30.0);
    std::vector<DetectionSample> constant, mixed;
    for (int i = 0; i < 300; ++i) {
      const auto src = i % 3 ? SampleSource::probe : SampleSource::fixed;
      constant.push_back({ux(rng), ut(rng), 13.7, src, 1});
      mixed.push_back({ux(rng), ut(rng), uv(rng), src, 1});
    }
    const FieldWindow window{0.0, 500.0, 0.0, 200.0};
    const GridSpec grid;
    AsmParams p;
    double const_err = 0.0;
    for (double v : build_velocity_field(1, window, grid, constant, p).values) const_err = std::max(const_err, std::abs(v - 13.7));
    AsmParams a = p, b = p;
    a.source_weights = {1.0, 2.5};
    b.source_weights = {3.0, 7.5};
    const auto fa = build_velocity_field(1, window, grid, mixed, a);
    const auto fb = build_velocity_field(1, window, grid, mixed, b);
    double scale_err = 0.0;
    for (std::size_t i = 0; i < fa.values.size(); ++i) scale_err = std::max(scale_err, std::abs(fa.values[i] - fb.values[i]));
    const double omega = congestion_weight(p.v_thresh, p.v_thresh, p);
    return check(const_err < 1e-9 && scale_err < 1e-9 && omega == 0.5,
                 "constant err " + fmt("%.2e", const_err) + ", scale err " + fmt("%.2e", scale_err) + ", omega(v_thresh) " +
                     fmt("%.17g", omega));
  });

  criterion(2, "Newell round trip", 1.0, [] {
    std::mt19937_64 rng(2);
    const NewellShift shift = NewellConfig{}.base_shift();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const auto ref = random_piecewise(rng, "r" + std::to_string(i));
      const auto icff = shift_trajectory(ref, shift, ShiftDirection::leader);
      const auto back = shift_trajectory(icff, shift, ShiftDirection::follower);
      for (const auto& p : ref.points) worst = std::max(worst, std::abs(back.position_at(p.time) - p.position));
      for (int k = 0; k < 50; ++k) {
        const double t = ref.start_time() + u(rng) * (ref.end_time() - ref.start_time());
        worst = std::max(worst, std::abs(back.position_at(t) - ref.position_at(t)));
      }
    }
    return check(worst < 1e-9, "max error " + fmt("%.2e", worst) + " m over 100 trajectories");
  });

  criterion(3, "weight DP optimality", 10.0, [] {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> x0(-20.0, 20.0), v(5.0, 20.0);
    FusionConfig config;
    config.weight_grid_step = 0.05;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const auto field = random_field(rng);
      std::vector<Trajectory> primary, secondary;
      for (int i = 0; i < 3; ++i) {
        primary.push_back(line("v" + std::to_string(i), x0(rng) - 21.0 * i, v(rng), 0.0, 40.0));
        secondary.push_back(line("v" + std::to_string(i), x0(rng) - 21.0 * i, v(rng), 0.0, 40.0));
      }
      std::vector<PassMember> members;
      for (int i = 0; i < 3; ++i) members.push_back({primary[i].vehicle_id, &primary[i], &secondary[i]});
      const auto a = solve_weights(members, field, config);
      // Exhaustive search over strictly decreasing triples on the 0.05 grid.
      double best = std::numeric_limits<double>::infinity();
      for (int p = 0; p <= 20; ++p) {
        for (int q = 0; q < p; ++q) {
          for (int r = 0; r < q; ++r) {
            const double c = pair_cost(primary[0], secondary[0], p / 20.0, field) +
                             pair_cost(primary[1], secondary[1], q / 20.0, field) +
                             pair_cost(primary[2], secondary[2], r / 20.0, field);
            best = std::min(best, c);
          }
        }
      }
      worst = std::max(worst, std::abs(a.objective - best));
    }
    return check(worst < 1e-9, "max objective gap " + fmt("%.2e", worst) + " over 50 regions");
  });

  criterion(4, "boundary pass-through", 5.0, [] {
    std::mt19937_64 rng(4);
    bool endpoints = true;
    for (int i = 0; i < 50; ++i) {
      const auto up = random_piecewise(rng, "b");
      auto down = shift_trajectory(up, {0.0, -37.0}, ShiftDirection::follower);
      const auto b = blend_up_down(up, down);
      endpoints &= b.points.front().position == up.points.front().position;
      endpoints &= b.points.back().position == down.points.back().position;
    }
    const auto o = oracle_run(scenarios::congested_scenario(false), scenarios::kHorizon, 7);
    double worst = 0.0;
    std::size_t n = 0;
    for (const auto& [id, t] : o.result.reconstruction.trajectories) {
      if (o.truth.at(id).changes_lane()) continue;
      for (Station s : {Station::upstream, Station::downstream}) {
        const double x = s == Station::upstream ? o.truth.geometry.x_up : o.truth.geometry.x_down;
        const auto crossing = crossing_time(t, x);
        const double err = crossing ? std::abs(*crossing - o.result.log.find(id, s)->arrival_time) : 1e9;
        worst = std::max(worst, err);
      }
      ++n;
    }
    return check(endpoints && n > 0 && worst < 1e-3, std::string("blend endpoints ") + (endpoints ? "exact" : "inexact") +
                                                           ", worst station miss " + fmt("%.2e", worst) + " s over " +
                                                           std::to_string(n) + " lane-keepers");
  });

  criterion(5, "oracle reconstruction without lane changes", 30.0, [] {
    const auto o = oracle_run(scenarios::congested_scenario(false), scenarios::kHorizon, 7);
    const auto acc = score_accuracy(o.result.reconstruction.trajectories, o.truth, o.truth.geometry.x_up);
    const double gap = min_reconstructed_headway(o);
    return check(acc.mae <= 2.0 && gap > 0.0, "MAE " + fmt("%.3f", acc.mae) + " m, min headway " + fmt("%.3f", gap) +
                                                  " m, " + std::to_string(acc.per_vehicle.size()) + " vehicles");
  });

  criterion(6, "oracle lane-change inference", 60.0, [] {
    const auto o = oracle_run(scenarios::congested_scenario(true), scenarios::kHorizon, 7);
    const auto& rec = o.result.reconstruction;
    std::size_t paired = 0;
    double jump = 0.0;
    bool inside = true;
    for (const auto& lc : rec.lc_outcomes) {
      if (lc.status != LcStatus::paired) continue;
      ++paired;
      const auto& d = *lc.decision;
      const auto seg = stitch_lc(rec.upstream_fused.at(lc.vehicle_id), rec.downstream_fused.at(lc.vehicle_id), d);
      jump = std::max(jump, std::abs(seg.origin.points.back().position - seg.target.points.front().position));
      jump = std::max(jump, std::abs(rec.trajectories.at(lc.vehicle_id).position_at(d.lc_time) - d.lc_position));
      const auto& area = *lc.area;
      auto hit = std::find_if(area.points.begin(), area.points.end(), [&](const LcPoint& p) {
        return std::abs(p.time - d.lc_time) < 1e-9 && std::abs(p.position - d.lc_position) < 1e-9;
      });
      inside &= d.lc_time >= area.t_start && d.lc_time <= area.t_end && hit != area.points.end();
    }
    const std::size_t total = rec.lc_outcomes.size();
    return check(total == 5 && paired >= 4 && jump < 1e-6 && inside,
                 std::to_string(paired) + "/" + std::to_string(total) + " paired, max jump " + fmt("%.2e", jump) +
                     " m, decisions " + (inside ? "inside" : "outside") + " feasible areas");
  });

  criterion(7, "method ordering proposed < macro < micro", 60.0, [] {
    // Congested scenario with drifting per-vehicle lags, averaged over ten seeds.
    const auto spec = scenarios::congested_scenario(true, 0.8, 0.0, 6.0, 300.0, 10.0);
    double p = 0.0, mi = 0.0, ma = 0.0;
    const int seeds = 10;
    for (int seed = 1; seed <= seeds; ++seed) {
      const auto o = oracle_run(spec, scenarios::kHorizon, seed);
      const auto s = compare_methods(o.result, o.truth, 1.0);
      p += s.proposed.mae / seeds;
      mi += s.micro.mae / seeds;
      ma += s.macro.mae / seeds;
    }
    return check(p < ma && ma < mi, "mean MAE proposed " + fmt("%.2f", p) + ", macro " + fmt("%.2f", ma) + ", micro " +
                                        fmt("%.2f", mi) + " m over 10 seeds");
  });

  criterion(8, "US-101 7:50-8:05 at 10% penetration", 600.0, [] {
    const auto path = ngsim_path();
    if (path.empty()) return Outcome{Verdict::skip, "dataset absent (set TRAJFUSE_NGSIM_CSV or add data/us101_0750_0805.csv)"};
    std::ifstream cfg_in(fs::path(TRAJFUSE_DATA_DIR) / "config_us101.json");
    auto config = config_from_json(nlohmann::json::parse(cfg_in));
    std::ifstream in(path);
    const auto truth = parse_trajectory_file(in, config.geometry, {config.sample_interval, config.margin});
    double mae = 0.0, worst_mape = 0.0;
    bool rmse_above = true;
    const int runs = 20;
    for (int seed = 1; seed <= runs; ++seed) {
      config.seed = static_cast<std::uint64_t>(seed);
      const auto r = run_pipeline(truth, config);
      const auto acc = score_accuracy(r.reconstruction.trajectories, truth, config.geometry.x_up);
      mae += acc.mae / runs;
      rmse_above &= acc.rmse > acc.mae;
      worst_mape = std::max(worst_mape, acc.mape);
    }
    return check(mae >= 3.4 && mae <= 6.4 && rmse_above && worst_mape < 2.0,
                 "mean MAE " + fmt("%.2f", mae) + " m, RMSE > MAE " + (rmse_above ? "always" : "not always") +
                     ", worst MAPE " + fmt("%.2f", worst_mape) + " %");
  });

  criterion(9, "congested wave speed from the field", 30.0, [] {
    const auto truth = scenarios::ingest_truth(simulate(scenarios::stop_and_go_scenario(), scenarios::kStopAndGoHorizon, 7));
    const auto split = scenarios::spread_probes(truth);
    const auto fields = build_fields(extract_detections(truth), split.probes, scenarios::oracle_config());
    bool ok = fields.size() == 2;
    std::string detail;
    for (const auto& [lane, f] : fields) {
      const auto fit = scenarios::ridge_slope(f, scenarios::kStopRelease, truth.geometry.x_up, truth.geometry.x_down);
      ok &= fit && fit->slope >= -6.0 && fit->slope <= -4.0;
      detail += "lane " + std::to_string(lane) + " slope " + (fit ? fmt("%.2f", fit->slope) : std::string("none")) + " m/s; ";
    }
    return check(ok, detail + "target -5 +/- 20%");
  });

  return failures == 0 ? 0 : 1;
}
