#include "bustime/segmentation.hpp"
#include "bustime/synth.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>

namespace {

using namespace bustime;
using segmentation::check_completeness;
using segmentation::judge_direction;

const geo::GeoPoint kA{53.35, -6.26};
const geo::GeoPoint kB{53.36, -6.25};

RawJourney journey_at(std::initializer_list<std::pair<double, geo::GeoPoint>> pts) {
  RawJourney j{"v", "j", {}};
  for (const auto& [t, p] : pts) j.records.push_back({1351756800.0 + t, "46A", "v", "j", p});
  return j;
}

// Records of one generated trip, as a raw journey.
RawJourney trip_records(const synth::SynthOutput& data, std::size_t trip) {
  const auto& truth = data.truth.trips[trip];
  RawJourney j{truth.vehicle_id, truth.vehicle_journey_id, {}};
  for (std::size_t k = 0; k < truth.record_tags.size(); ++k)
    j.records.push_back(data.gps[truth.first_record + k]);
  return j;
}

std::string tod_free_id(const SegmentedTrip& t) { return t.trip_id.substr(0, t.trip_id.rfind(':')); }

TEST(Deduplicate, CollapsesRun) {
  const auto j = journey_at({{0, kA}, {30, kA}, {60, kA}, {90, kA}, {120, kA}, {150, kB}});
  const auto d = segmentation::deduplicate(j);
  ASSERT_EQ(d.records.size(), 2u);
  EXPECT_EQ(d.records[0].timestamp, j.records[0].timestamp);
  EXPECT_EQ(d.records[1].position, kB);
}

TEST(Deduplicate, KeepsNonConsecutiveRepeats) {
  const auto j = journey_at({{0, kA}, {30, kB}, {60, kA}, {90, kB}});
  EXPECT_EQ(segmentation::deduplicate(j).records.size(), 4u);
}

TEST(Deduplicate, TerminalStayClusterMatchesTruth) {
  synth::SynthConfig cfg;
  cfg.trips = 40;
  cfg.stay_point_rate = 1.0;
  const auto data = synth::generate(cfg);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < data.truth.trips.size(); ++i) {
    const auto& truth = data.truth.trips[i];
    if (!truth.stay_cluster) continue;
    ++checked;
    const auto stays = std::count(truth.record_tags.begin(), truth.record_tags.end(),
                                  synth::RecordTag::kStayPoint);
    EXPECT_EQ(stays, 29);
    const auto raw = trip_records(data, i);
    const auto d = segmentation::deduplicate(raw);
    EXPECT_EQ(d.records.size(), raw.records.size() - static_cast<std::size_t>(stays));
    // the 30 identical terminal fixes collapse to the first of them
    EXPECT_EQ(d.records.back().timestamp, raw.records[raw.records.size() - 30].timestamp);
  }
  EXPECT_GT(checked, 30u);
}

TEST(SplitByGap, SplitsAboveThreshold) {
  const auto j = journey_at({{0, kA}, {30, kB}, {60, kA}, {961, kB}, {991, kA}});
  const auto parts = segmentation::split_by_gap(j, SegmentationConfig{});
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0].records.size(), 3u);
  EXPECT_EQ(parts[1].records.size(), 2u);
  EXPECT_EQ(parts[1].records[0].timestamp, j.records[3].timestamp);
}

TEST(SplitByGap, ExactThresholdDoesNotSplit) {
  const auto j = journey_at({{0, kA}, {900, kB}, {1800, kA}});
  EXPECT_EQ(segmentation::split_by_gap(j, SegmentationConfig{}).size(), 1u);
}

TEST(SplitByGap, NoLongGapsIsIdentity) {
  const auto j = journey_at({{0, kA}, {30, kB}, {60, kA}, {90, kB}});
  const auto parts = segmentation::split_by_gap(j, SegmentationConfig{});
  ASSERT_EQ(parts.size(), 1u);
  EXPECT_EQ(parts[0].records, j.records);
}

class DirectionTest : public ::testing::Test {
 protected:
  RoutePair routes = synth::make_routes(synth::SynthConfig{});

  RawJourney marching(std::size_t n, bool reversed) const {
    RawJourney j{"v", "j", {}};
    const auto& stops = routes.outbound.stops;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = i * (stops.size() - 1) / (n - 1);
      j.records.push_back({1351756800.0 + 30.0 * static_cast<double>(i), "46A", "v", "j",
                           stops[reversed ? stops.size() - 1 - k : k].position});
    }
    return j;
  }
};

TEST_F(DirectionTest, MarchingAlongOutbound) {
  const auto d = judge_direction(marching(30, false), routes, SegmentationConfig{});
  ASSERT_TRUE(accepted(d));
  EXPECT_EQ(std::get<Direction>(d), Direction::kOutbound);
}

TEST_F(DirectionTest, ReversedIsInbound) {
  const auto d = judge_direction(marching(30, true), routes, SegmentationConfig{});
  ASSERT_TRUE(accepted(d));
  EXPECT_EQ(std::get<Direction>(d), Direction::kInbound);
}

TEST_F(DirectionTest, TwentyNinePointsTooShort) {
  const auto d = judge_direction(marching(29, false), routes, SegmentationConfig{});
  ASSERT_FALSE(accepted(d));
  EXPECT_EQ(reason(d), RejectReason::kTooShort);
}

TEST_F(DirectionTest, StationaryProbeIsAmbiguous) {
  auto j = marching(30, false);
  j.records[29].position = j.records[0].position;
  const auto d = judge_direction(j, routes, SegmentationConfig{});
  ASSERT_FALSE(accepted(d));
  EXPECT_EQ(reason(d), RejectReason::kAmbiguousDirection);
}

class CompletenessTest : public ::testing::Test {
 protected:
  static synth::SynthConfig config() {
    synth::SynthConfig cfg;
    cfg.trips = 30;
    cfg.stay_point_rate = 0.0;
    cfg.noisy_point_rate = 0.0;
    return cfg;
  }
};

TEST_F(CompletenessTest, CompleteTripMatchesGroundTruth) {
  for (double sigma : {0.0, 10.0}) {
    auto cfg = config();
    cfg.gps_noise_sigma = sigma;
    const auto data = synth::generate(cfg);
    for (std::size_t i = 0; i < data.truth.trips.size(); ++i) {
      const auto& truth = data.truth.trips[i];
      const auto raw = trip_records(data, i);
      const auto trip = check_completeness(raw, data.routes.outbound, SegmentationConfig{});
      ASSERT_TRUE(accepted(trip)) << to_string(reason(trip));
      const auto& st = std::get<SegmentedTrip>(trip);
      validate(st, 30);
      ASSERT_EQ(st.points.size(), raw.records.size());
      EXPECT_EQ(st.departure_epoch, truth.departure_epoch);
      for (std::size_t k = 0; k < st.points.size(); ++k) {
        EXPECT_EQ(st.points[k].t, raw.records[k].timestamp - truth.departure_epoch);
        // Chained noisy fixes overstate distance: allow a few sigma plus 1% drift.
        const double bound = sigma == 0.0 ? 1e-6 : 6.0 * sigma + 0.01 * truth.true_distance[k];
        EXPECT_NEAR(st.points[k].d, truth.true_distance[k], bound) << "trip " << i << " point " << k;
      }
    }
  }
}

TEST_F(CompletenessTest, TruncatedAtFortyPercent) {
  auto cfg = config();
  cfg.truncated_rate = 1.0;
  const auto data = synth::generate(cfg);
  for (std::size_t i = 0; i < data.truth.trips.size(); ++i) {
    const auto raw = trip_records(data, i);
    ASSERT_GE(raw.records.size(), 30u);
    const auto trip = check_completeness(raw, data.routes.outbound, SegmentationConfig{});
    ASSERT_FALSE(accepted(trip));
    EXPECT_EQ(reason(trip), RejectReason::kTooShortInTimeOrDistance);
  }
}

TEST_F(CompletenessTest, FirstPointThreeHundredFiftyMetresOut) {
  auto cfg = config();
  cfg.gps_noise_sigma = 0.0;
  cfg.trips = 1;
  const auto data = synth::generate(cfg);
  const auto& route = data.routes.outbound;
  const double side = (cfg.bearing_deg + 90.0) * geo::kDegToRad;
  for (double offset : {350.0, 250.0}) {
    auto raw = trip_records(data, 0);
    raw.records[0].position = geo::destination(route.first_stop().position, side, offset);
    EXPECT_NEAR(geo::haversine(raw.records[0].position, route.first_stop().position), offset, 1e-6);
    const auto trip = check_completeness(raw, route, SegmentationConfig{});
    if (offset > 300.0) {
      ASSERT_FALSE(accepted(trip));
      EXPECT_EQ(reason(trip), RejectReason::kEndpointTooFar);
    } else {
      EXPECT_TRUE(accepted(trip));
    }
  }
}

TEST_F(CompletenessTest, LastPointFarFromDestination) {
  auto cfg = config();
  cfg.gps_noise_sigma = 0.0;
  cfg.trips = 1;
  const auto data = synth::generate(cfg);
  auto raw = trip_records(data, 0);
  raw.records.back().position =
      geo::destination(data.routes.outbound.last_stop().position, 0.0, 400.0);
  const auto trip = check_completeness(raw, data.routes.outbound, SegmentationConfig{});
  ASSERT_FALSE(accepted(trip));
  EXPECT_EQ(reason(trip), RejectReason::kEndpointTooFar);
}

TEST(SegmentAll, RecoversCleanAndRejectsCorrupted) {
  synth::SynthConfig cfg;
  cfg.trips = 200;
  cfg.inbound_fraction = 0.5;
  cfg.missing_segment_rate = 0.025;
  cfg.truncated_rate = 0.025;
  cfg.late_start_rate = 0.025;
  cfg.sparse_rate = 0.025;
  const auto data = synth::generate(cfg);
  const auto result = segmentation::segment_all(ingest::group_journeys(data.gps), data.routes,
                                                SegmentationConfig{});

  std::map<std::string, Direction> accepted_dirs;
  for (const auto& t : result.trips) {
    validate(t, 30);
    accepted_dirs[tod_free_id(t)] = t.direction;
  }
  std::map<std::string, std::multiset<RejectReason>> rejects;
  for (const auto& r : result.rejects) rejects[r.vehicle_id + ":" + r.vehicle_journey_id].insert(r.reason);

  std::size_t clean = 0, recovered = 0, corrupted = 0;
  for (const auto& t : data.truth.trips) {
    const std::string key = t.vehicle_id + ":" + t.vehicle_journey_id;
    if (t.corruption == synth::TripCorruption::kNone) {
      ++clean;
      auto it = accepted_dirs.find(key);
      if (it != accepted_dirs.end()) {
        ++recovered;
        EXPECT_EQ(it->second, t.direction);
      }
      continue;
    }
    ++corrupted;
    EXPECT_FALSE(accepted_dirs.contains(key)) << key << " " << to_string(t.corruption);
    const auto& why = rejects[key];
    ASSERT_FALSE(why.empty()) << key;
    if (auto expected = t.expected_reject()) {
      EXPECT_EQ(why.size(), 1u);
      EXPECT_EQ(*why.begin(), *expected) << key << " " << to_string(t.corruption);
    } else {
      EXPECT_GE(why.size(), 2u) << "missing segment should split " << key;
      for (auto r : why)
        EXPECT_TRUE(r == RejectReason::kTooShort || r == RejectReason::kTooShortInTimeOrDistance);
    }
  }
  EXPECT_GE(corrupted, 10u);
  EXPECT_GE(static_cast<double>(recovered), 0.95 * static_cast<double>(clean));

  std::size_t tallied = 0;
  for (const auto& [_, n] : result.tally) tallied += n;
  EXPECT_EQ(result.trips.size() + tallied, result.fragments);
  EXPECT_EQ(tallied, result.rejects.size());
  for (std::size_t i = 1; i < result.trips.size(); ++i)
    EXPECT_LE(result.trips[i - 1].departure_epoch, result.trips[i].departure_epoch);
}

TEST(SegmentAll, EmptyInput) {
  const auto routes = synth::make_routes(synth::SynthConfig{});
  const auto result = segmentation::segment_all({}, routes, SegmentationConfig{});
  EXPECT_TRUE(result.trips.empty());
  EXPECT_TRUE(result.tally.empty());
  EXPECT_EQ(result.fragments, 0u);
}

TEST(SegmentAll, BackToBackTripsSplitAtLayover) {
  synth::SynthConfig cfg;
  cfg.trips = 1;
  cfg.stay_point_rate = 0.0;
  const auto out = synth::generate(cfg);
  cfg.inbound_fraction = 1.0;
  cfg.seed = 99;
  const auto back = synth::generate(cfg);

  RawJourney journey{"v1", "j1", {}};
  for (auto r : out.gps) journey.records.push_back(r);
  const double shift = out.gps.back().timestamp + 1200.0 - back.gps.front().timestamp;
  for (auto r : back.gps) {
    r.timestamp += shift;
    journey.records.push_back(r);
  }
  for (auto& r : journey.records) r.vehicle_id = "v1", r.vehicle_journey_id = "j1";

  const auto result =
      segmentation::segment_all(std::vector{journey}, out.routes, SegmentationConfig{});
  ASSERT_EQ(result.trips.size(), 2u);
  EXPECT_EQ(result.trips[0].direction, Direction::kOutbound);
  EXPECT_EQ(result.trips[1].direction, Direction::kInbound);
  EXPECT_EQ(result.trips[0].trip_id, "v1:j1:0");
  EXPECT_EQ(result.trips[1].trip_id, "v1:j1:1");
  EXPECT_EQ(result.trips[1].departure_epoch, back.gps.front().timestamp + shift);
}

TEST(SegmentAll, Deterministic) {
  synth::SynthConfig cfg;
  cfg.trips = 60;
  cfg.inbound_fraction = 0.3;
  cfg.truncated_rate = 0.1;
  const auto data = synth::generate(cfg);
  const auto journeys = ingest::group_journeys(data.gps);
  const auto a = segmentation::segment_all(journeys, data.routes, SegmentationConfig{});
  const auto b = segmentation::segment_all(journeys, data.routes, SegmentationConfig{});
  ASSERT_EQ(a.trips.size(), b.trips.size());
  for (std::size_t i = 0; i < a.trips.size(); ++i) {
    EXPECT_EQ(a.trips[i].trip_id, b.trips[i].trip_id);
    ASSERT_EQ(a.trips[i].points.size(), b.trips[i].points.size());
    for (std::size_t k = 0; k < a.trips[i].points.size(); ++k) {
      EXPECT_EQ(a.trips[i].points[k].t, b.trips[i].points[k].t);
      EXPECT_EQ(a.trips[i].points[k].d, b.trips[i].points[k].d);
    }
  }
  EXPECT_EQ(a.tally, b.tally);
}

TEST(SegmentationConfig, RejectsInvalidThresholds) {
  SegmentationConfig cfg;
  cfg.min_completeness_fraction = 1.5;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.gap_split_s = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

}  // namespace
