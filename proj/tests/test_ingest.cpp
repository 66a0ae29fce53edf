#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "support/scenarios.hpp"
#include "trajfuse/ingest.hpp"

using namespace trajfuse;

namespace {

const SegmentGeometry kGeom{0.0, 500.0, {1, 2}};

Trajectory line(const VehicleId& id, double x0, double v, double t0, double t1, LaneId lane = 1) {
  Trajectory t{id, {}, 1.0};
  for (double s = t0; s <= t1 + 1e-9; s += 1.0) t.points.push_back({s, x0 + v * (s - t0), lane});
  return t;
}

TrajectorySet set_of(std::vector<Trajectory> ts, SegmentGeometry g = kGeom) {
  TrajectorySet s;
  s.geometry = std::move(g);
  for (auto& t : ts) s.trajectories.emplace(t.vehicle_id, std::move(t));
  return s;
}

}  // namespace

TEST(Parse, SingleVehicleThreeRows) {
  std::istringstream in("vehicle_id,time_s,position_m,lane_id\n7,0,10,1\n7,1,20,1\n7,2,30,1\n");
  const auto set = parse_trajectory_file(in, kGeom);
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set.at("7").size(), 3u);
  EXPECT_EQ(set.at("7").points[2].position, 30.0);
}

TEST(Parse, InterleavedVehiclesAreGrouped) {
  std::istringstream in(
      "time_s,vehicle_id,lane_id,position_m\n0,a,1,0\n0,b,2,50\n1,a,1,10\n1,b,2,60\n2,a,1,20\n2,b,2,70\n");
  const auto set = parse_trajectory_file(in, kGeom);
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.at("b").points.front().position, 50.0);
  EXPECT_EQ(set.at("b").points.back().time, 2.0);
  EXPECT_EQ(set.at("a").points.back().position, 20.0);
}

TEST(Parse, FineSamplingIsResampledByInterpolation) {
  std::ostringstream csv;
  csv << "vehicle_id,time_s,position_m,lane_id\n";
  std::vector<std::pair<double, double>> raw;
  for (int k = 0; k <= 50; ++k) {
    const double t = 0.1 * k;
    const double x = 3.0 * t + 0.7 * t * t;
    raw.push_back({t, x});
    csv << "v," << t << "," << x << ",1\n";
  }
  std::istringstream in(csv.str());
  const auto set = parse_trajectory_file(in, kGeom);
  const auto& t = set.at("v");
  ASSERT_EQ(t.size(), 6u);
  for (const auto& p : t.points) {
    // Independent interpolation over the raw rows.
    std::size_t k = 0;
    while (k + 1 < raw.size() && raw[k + 1].first < p.time - 1e-12) ++k;
    const auto [t0, x0] = raw[k];
    const auto [t1, x1] = raw[std::min(k + 1, raw.size() - 1)];
    const double expect = t1 == t0 ? x0 : x0 + (p.time - t0) / (t1 - t0) * (x1 - x0);
    EXPECT_NEAR(p.position, expect, 1e-9);
  }
}

TEST(Parse, MissingColumnAndBadNumbers) {
  std::istringstream a("vehicle_id,time_s,lane_id\n1,0,1\n");
  EXPECT_THROW(parse_trajectory_file(a, kGeom), ParseError);
  std::istringstream b("vehicle_id,time_s,position_m,lane_id\n1,zero,1,1\n");
  EXPECT_THROW(parse_trajectory_file(b, kGeom), ParseError);
  std::istringstream c("vehicle_id,time_s,position_m,lane_id\n1,1,1,1\n1,0,2,1\n");
  EXPECT_THROW(parse_trajectory_file(c, kGeom), ParseError);
}

TEST(Parse, LanesInferredWhenGeometryOmitsThem) {
  std::istringstream in("vehicle_id,time_s,position_m,lane_id\n1,0,0,3\n1,1,1,3\n2,0,0,1\n2,1,1,1\n");
  const auto set = parse_trajectory_file(in, {0.0, 500.0, {}});
  EXPECT_EQ(set.geometry.lanes, (std::vector<LaneId>{1, 3}));
}

TEST(Detections, AnalyticCrossing) {
  const auto set = set_of({line("a", -50.0, 10.0, 0.0, 60.0)});
  const auto log = extract_detections(set);
  const auto* up = log.find("a", Station::upstream);
  ASSERT_NE(up, nullptr);
  EXPECT_NEAR(up->arrival_time, 5.0, 1e-12);
  EXPECT_NEAR(up->speed, 10.0, 1e-12);
  EXPECT_EQ(up->lane, 1);
}

TEST(Detections, MidSegmentEntryHasDownstreamOnly) {
  const auto set = set_of({line("a", 100.0, 10.0, 0.0, 60.0)});
  const auto log = extract_detections(set);
  EXPECT_EQ(log.find("a", Station::upstream), nullptr);
  EXPECT_NE(log.find("a", Station::downstream), nullptr);
}

TEST(Detections, CountMatchesBruteForceOnOracle) {
  const auto sim = simulate(scenarios::congested_scenario(true), scenarios::kHorizon, 7);
  const auto truth = scenarios::ingest_truth(sim);
  const auto log = extract_detections(truth);
  std::size_t expect = 0;
  for (const auto& [id, t] : truth.trajectories) {
    for (double x : {truth.geometry.x_up, truth.geometry.x_down}) {
      bool below = false, reached = false;
      for (const auto& p : t.points) {
        if (p.position < x) below = true;
        if (p.position >= x) reached = true;
      }
      if ((below || t.points.front().position == x) && reached) ++expect;
    }
  }
  EXPECT_EQ(log.events().size(), expect);
}

TEST(Detections, AdjacentWithinLaneAndStation) {
  const auto set = set_of({line("a", -10.0, 10.0, 0.0, 60.0), line("b", -30.0, 10.0, 0.0, 60.0),
                           line("c", -20.0, 10.0, 0.0, 60.0, 2)});
  const auto log = extract_detections(set);
  const auto* a = log.find("a", Station::upstream);
  ASSERT_NE(log.adjacent(*a, +1), nullptr);
  EXPECT_EQ(log.adjacent(*a, +1)->vehicle_id, "b");
  EXPECT_EQ(log.adjacent(*a, -1), nullptr);
}

TEST(SampleProbes, ExactCount) {
  std::vector<Trajectory> ts;
  for (int i = 0; i < 10; ++i) ts.push_back(line(std::to_string(i), -20.0 * i, 10.0, 0.0, 100.0));
  const auto split = sample_probes(set_of(ts), 0.10, 5);
  EXPECT_EQ(split.probes.size(), 1u);
  EXPECT_EQ(split.hidden.size(), 9u);
}

TEST(SampleProbes, LaneChangersAreNeverProbes) {
  std::vector<Trajectory> ts;
  for (int i = 0; i < 10; ++i) {
    auto t = line(std::to_string(i), -20.0 * i, 10.0, 0.0, 100.0);
    if (i % 2) t.points.back().lane = 2;
    ts.push_back(t);
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto split = sample_probes(set_of(ts), 0.4, seed);
    for (const auto& [id, t] : split.probes.trajectories) EXPECT_FALSE(t.changes_lane());
  }
}

TEST(SampleProbes, SameSeedSamePartition) {
  std::vector<Trajectory> ts;
  for (int i = 0; i < 50; ++i) ts.push_back(line(std::to_string(i), -20.0 * i, 10.0, 0.0, 200.0, 1 + i % 2));
  const auto a = sample_probes(set_of(ts), 0.2, 11);
  const auto b = sample_probes(set_of(ts), 0.2, 11);
  std::vector<VehicleId> ia, ib;
  for (const auto& [id, t] : a.probes.trajectories) ia.push_back(id);
  for (const auto& [id, t] : b.probes.trajectories) ib.push_back(id);
  EXPECT_EQ(ia, ib);
}

TEST(SampleProbes, InclusionIsUniformAcrossSeeds) {
  std::vector<Trajectory> ts;
  for (int i = 0; i < 1000; ++i) {
    ts.push_back(Trajectory{std::to_string(i), {{0.0, 0.0, 1}, {1.0, 1.0, 1}}, 1.0});
  }
  const auto set = set_of(ts);
  std::vector<double> decile(10, 0.0);
  double total = 0.0;
  const int seeds = 100;
  for (int s = 0; s < seeds; ++s) {
    const auto split = sample_probes(set, 0.10, static_cast<std::uint64_t>(s));
    total += static_cast<double>(split.probes.size());
    for (const auto& [id, t] : split.probes.trajectories) decile[static_cast<std::size_t>(std::stoi(id) / 100)] += 1.0;
  }
  EXPECT_NEAR(total / seeds, 100.0, 1.0);
  for (double d : decile) EXPECT_NEAR(d / (100.0 * seeds), 0.10, 0.01);
}

TEST(SampleProbes, RejectsBadRate) {
  const auto set = set_of({line("a", 0, 1, 0, 2)});
  EXPECT_THROW(sample_probes(set, 0.0, 1), ValidationError);
  EXPECT_THROW(sample_probes(set, 1.0, 1), ValidationError);
}

TEST(Partition, HiddenOrderedByUpstreamArrival) {
  // Probes p1 (front) and p2 (rear); hidden vehicles entered out of id order.
  const auto set = set_of({line("p1", 0.0, 10.0, 0.0, 80.0), line("p2", -100.0, 10.0, 0.0, 80.0),
                           line("c", -25.0, 10.0, 0.0, 80.0), line("a", -75.0, 10.0, 0.0, 80.0),
                           line("b", -50.0, 10.0, 0.0, 80.0)});
  const auto log = extract_detections(set);
  TrajectorySet probes, hidden;
  for (const auto& [id, t] : set.trajectories) {
    (id[0] == 'p' ? probes : hidden).trajectories.emplace(id, t);
  }
  probes.geometry = hidden.geometry = kGeom;
  const auto part = partition_regions(probes, hidden, log);
  ASSERT_EQ(part.regions.size(), 1u);
  EXPECT_EQ(part.regions[0].hidden_vehicle_ids(), (std::vector<VehicleId>{"c", "b", "a"}));
}

TEST(Partition, LaneChangerJoinsOneRegionPerLane) {
  auto lc = line("x", -50.0, 10.0, 0.0, 80.0);
  for (auto& p : lc.points) {
    if (p.position > 250.0) p.lane = 2;
  }
  const auto set = set_of({line("p1", 0.0, 10.0, 0.0, 80.0), line("p2", -100.0, 10.0, 0.0, 80.0),
                           line("q1", -10.0, 10.0, 0.0, 80.0, 2), line("q2", -110.0, 10.0, 0.0, 90.0, 2), lc});
  const auto log = extract_detections(set);
  TrajectorySet probes, hidden;
  for (const auto& [id, t] : set.trajectories) (id == "x" ? hidden : probes).trajectories.emplace(id, t);
  probes.geometry = hidden.geometry = kGeom;
  const auto part = partition_regions(probes, hidden, log);
  ASSERT_EQ(part.regions.size(), 2u);
  int lane1 = 0, lane2 = 0;
  for (const auto& r : part.regions) {
    if (!r.contains("x")) continue;
    (r.lane == 1 ? lane1 : lane2)++;
  }
  EXPECT_EQ(lane1, 1);
  EXPECT_EQ(lane2, 1);
}

TEST(Partition, CoverageAuditOnOracle) {
  const auto sim = simulate(scenarios::congested_scenario(true), scenarios::kHorizon, 7);
  const auto truth = scenarios::ingest_truth(sim);
  const auto log = extract_detections(truth);
  const auto split = scenarios::spread_probes(truth, 0.15);
  const auto part = partition_regions(split.probes, split.hidden, log);
  std::set<VehicleId> covered;
  for (const auto& r : part.regions) {
    for (const auto& id : r.hidden_vehicle_ids()) covered.insert(id);
  }
  std::set<VehicleId> skipped;
  for (const auto& s : part.skipped) skipped.insert(s.vehicle_id);
  for (const auto& [id, t] : split.hidden.trajectories) {
    if (!log.find(id, Station::upstream) && !log.find(id, Station::downstream)) continue;
    EXPECT_TRUE(covered.count(id) || skipped.count(id)) << id;
  }
  // Front and rear probes on every lane leave nobody outside a region.
  EXPECT_TRUE(part.skipped.empty());
  EXPECT_EQ(covered.size(), split.hidden.size());
}
