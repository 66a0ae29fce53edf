#include <gtest/gtest.h>

#include "support/scenarios.hpp"
#include "trajfuse/sim_oracle.hpp"

using namespace trajfuse;

namespace {

ScenarioSpec single_lane(std::size_t n, std::vector<double> speeds, std::vector<double> headways = {2.0}) {
  ScenarioSpec s;
  s.geometry = {0.0, 500.0, {1}};
  s.vehicles_per_lane = n;
  s.desired_speeds = std::move(speeds);
  s.entry_headways = std::move(headways);
  return s;
}

}  // namespace

TEST(Simulate, FreeVehicleDrivesStraight) {
  const auto r = simulate(single_lane(1, {17.0}), 100.0, 1);
  ASSERT_EQ(r.truth.size(), 1u);
  const auto& t = r.truth.at("1001");
  for (std::size_t k = 1; k < t.size(); ++k) {
    EXPECT_NEAR(t.points[k].position - t.points[k - 1].position, 17.0, 1e-12);
  }
  EXPECT_EQ(t.points.front().position, -100.0);
}

TEST(Simulate, FasterFollowerSettlesAtEquilibriumSpacing) {
  const auto r = simulate(single_lane(2, {10.0, 25.0}, {10.0}), 39.0, 1);
  const auto& lead = r.truth.at("1001");
  const auto& follow = r.truth.at("1002");
  const double t = follow.end_time();
  EXPECT_NEAR(lead.position_at(t) - follow.position_at(t), 1.4 * 10.0 + 7.0, 1e-9);
}

TEST(Simulate, FollowerReplaysLeaderWithExactLags) {
  const auto sim = simulate(scenarios::congested_scenario(false), scenarios::kHorizon, 7);
  // Inside the queue every vehicle sits on its leader's path shifted by (eta, theta).
  const auto& lead = sim.truth.at("1004");
  const auto& follow = sim.truth.at("1005");
  std::size_t constrained = 0;
  for (const auto& p : follow.points) {
    if (!lead.covers(p.time - 1.4) || p.position < 0.0 || p.position > 500.0) continue;
    const double bound = lead.position_at(p.time - 1.4) - 7.0;
    EXPECT_LE(p.position, bound + 1e-9);
    constrained += std::abs(p.position - bound) < 1e-9;
  }
  EXPECT_GT(constrained, 10u);
}

TEST(Simulate, NoOverlapWithinLane) {
  const auto sim = simulate(scenarios::congested_scenario(true), scenarios::kHorizon, 7);
  for (double t = 0.0; t <= scenarios::kHorizon; t += 1.0) {
    std::map<LaneId, std::vector<double>> xs;
    for (const auto& [id, tr] : sim.truth.trajectories) {
      if (tr.covers(t)) xs[tr.lane_at(t)].push_back(tr.position_at(t));
    }
    for (auto& [lane, v] : xs) {
      std::sort(v.begin(), v.end());
      for (std::size_t i = 1; i < v.size(); ++i) EXPECT_GT(v[i] - v[i - 1], 0.0) << "lane " << lane << " t " << t;
    }
  }
}

TEST(Simulate, ScriptedLaneChangesExecuteInsideSegment) {
  const auto spec = scenarios::congested_scenario(true);
  const auto sim = simulate(spec, scenarios::kHorizon, 7);
  EXPECT_EQ(sim.lane_changes.size(), spec.lc_script.size());
  EXPECT_TRUE(sim.infeasible.empty());
  const auto truth = truth_lc_events(sim.truth);
  ASSERT_EQ(truth.size(), sim.lane_changes.size());
  for (const auto& lc : sim.lane_changes) {
    const auto& entry = *std::find_if(spec.lc_script.begin(), spec.lc_script.end(),
                                      [&](const LcScriptEntry& e) { return e.vehicle_id == lc.vehicle_id; });
    EXPECT_GE(lc.lc_time, entry.trigger_time);
    EXPECT_EQ(lc.target_lane, entry.target_lane);
    EXPECT_GT(lc.lc_position, 0.0);
    EXPECT_LT(lc.lc_position, 500.0);
    const auto& t = sim.truth.at(lc.vehicle_id);
    EXPECT_EQ(t.lane_at(lc.lc_time), lc.target_lane);
    EXPECT_EQ(t.lane_at(lc.lc_time - 1.0), lc.origin_lane);
    // Gap of at least theta on both sides in the target lane.
    for (const auto& [id, o] : sim.truth.trajectories) {
      if (id == lc.vehicle_id || !o.covers(lc.lc_time) || o.lane_at(lc.lc_time) != lc.target_lane) continue;
      EXPECT_GE(std::abs(o.position_at(lc.lc_time) - lc.lc_position), 7.0 - 1e-9) << id;
    }
  }
}

TEST(Simulate, BlockedLaneChangeIsReported) {
  auto spec = single_lane(3, {20.0}, {1.0});
  spec.geometry.lanes = {1, 2};
  spec.lc_script = {{"1002", 2, 5.0}};
  spec.x_exit = 520.0;
  // Lane 2 traffic alongside at the same entry times blocks every gap.
  const auto sim = simulate(spec, 60.0, 1);
  ASSERT_EQ(sim.infeasible.size(), 1u);
  EXPECT_EQ(sim.infeasible[0].vehicle_id, "1002");
}

TEST(Simulate, StopAndGoBandTravelsAtCongestedWaveSpeed) {
  const auto sim = simulate(scenarios::stop_and_go_scenario(), scenarios::kStopAndGoHorizon, 7);
  const auto fit = scenarios::stop_onset_slope(sim.truth, 0.0, 500.0);
  ASSERT_TRUE(fit);
  EXPECT_NEAR(fit->slope, -5.0, 1.0);
}

TEST(Simulate, DeterministicPerSeed) {
  const auto spec = scenarios::congested_scenario(true, 0.5, 0.1, 6.0, 300.0, 10.0);
  const auto a = to_rows(simulate(spec, scenarios::kHorizon, 11).truth);
  const auto b = to_rows(simulate(spec, scenarios::kHorizon, 11).truth);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].vehicle_id, b[i].vehicle_id);
    EXPECT_EQ(a[i].time, b[i].time);
    EXPECT_EQ(a[i].position, b[i].position);
    EXPECT_EQ(a[i].lane, b[i].lane);
  }
  const auto c = to_rows(simulate(spec, scenarios::kHorizon, 12).truth);
  bool differs = c.size() != a.size();
  for (std::size_t i = 0; !differs && i < a.size(); ++i) differs = a[i].position != c[i].position;
  EXPECT_TRUE(differs);
}

TEST(Simulate, RejectsBadScripts) {
  auto spec = single_lane(2, {20.0});
  spec.lc_script = {{"9999", 1, 1.0}};
  EXPECT_THROW(simulate(spec, 10.0, 1), ValidationError);
  spec.lc_script = {{"1001", 1, 1.0}};
  EXPECT_THROW(simulate(spec, 10.0, 1), ValidationError);
  spec.lc_script.clear();
  spec.entry_headways = {};
  EXPECT_THROW(simulate(spec, 10.0, 1), ValidationError);
}
