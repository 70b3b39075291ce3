#include "bustime/ingest.hpp"
#include "bustime/synth.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>

#include "test_support.hpp"

namespace {

using namespace bustime;
using testing_support::TempDir;
using testing_support::write_file;

constexpr char kRoutes[] = "route_id,route_short_name,route_type\nR1,R1,3\n";
constexpr char kTrips[] = "route_id,service_id,trip_id,direction_id\nR1,wk,T1,0\n";

void write_two_stop_fixture(const TempDir& dir, double lat2) {
  write_file(dir / "routes.txt", kRoutes);
  write_file(dir / "trips.txt", kTrips);
  write_file(dir / "stops.txt", "stop_id,stop_name,stop_lat,stop_lon\nA,a,53.35,-6.26\nB,b," +
                                    std::to_string(lat2) + ",-6.26\n");
  write_file(dir / "stop_times.txt",
             "trip_id,arrival_time,departure_time,stop_id,stop_sequence\n"
             "T1,08:00:00,08:00:00,A,1\nT1,08:04:10,08:04:10,B,2\n");
}

std::string dublin_row(long long ts_us, const std::string& vehicle, const std::string& journey,
                       double lat, double lon) {
  return std::to_string(ts_us) + ",46A,0,046A0001,2012-11-01," + journey + ",D1,0," +
         csv::format_double(lon) + "," + csv::format_double(lat) + ",0,46001," + vehicle +
         ",1234,0\n";
}

TEST(ParseGtfs, TwoStopsOneKilometreApart) {
  TempDir dir;
  const double lat2 = 53.35 + 1000.0 / (geo::kEarthRadiusM * geo::kDegToRad);
  write_two_stop_fixture(dir, lat2);
  const auto routes = ingest::parse_gtfs(dir.path());
  ASSERT_EQ(routes.size(), 1u);
  const auto& r = routes[0];
  ASSERT_EQ(r.stops.size(), 2u);
  EXPECT_EQ(r.stops[0].cumulative_distance, 0.0);
  // the file stores lat2 with 6 decimals; the oracle recomputes from the file value
  const double oracle = geo::haversine({53.35, -6.26}, {std::stod(std::to_string(lat2)), -6.26});
  EXPECT_NEAR(r.stops[1].cumulative_distance, oracle, 1e-9);
  EXPECT_NEAR(r.stops[1].cumulative_distance, 1000.0, 1.0);
  EXPECT_EQ(r.total_length, r.stops[1].cumulative_distance);
  EXPECT_EQ(r.scheduled_duration, 250.0);
  EXPECT_EQ(r.direction, Direction::kOutbound);
}

TEST(ParseGtfs, EmptyStopTimesIsRouteWithoutStops) {
  TempDir dir;
  write_two_stop_fixture(dir, 53.36);
  write_file(dir / "stop_times.txt", "trip_id,arrival_time,departure_time,stop_id,stop_sequence\n");
  try {
    ingest::parse_gtfs(dir.path());
    FAIL() << "expected RouteWithoutStops";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRouteWithoutStops);
  }
}

TEST(ParseGtfs, MissingFileIsReported) {
  TempDir dir;
  write_two_stop_fixture(dir, 53.36);
  std::filesystem::remove(dir / "stops.txt");
  try {
    ingest::parse_gtfs(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingFile);
    EXPECT_NE(std::string(e.what()).find("stops.txt"), std::string::npos);
  }
}

TEST(ParseGtfs, MalformedRowCarriesLineNumber) {
  TempDir dir;
  write_two_stop_fixture(dir, 53.36);
  write_file(dir / "stop_times.txt",
             "trip_id,arrival_time,departure_time,stop_id,stop_sequence\n"
             "T1,08:00:00,08:00:00,A,1\nT1,8h,08:04:10,B,2\n");
  try {
    ingest::parse_gtfs(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedRow);
    EXPECT_NE(std::string(e.what()).find("stop_times.txt:3"), std::string::npos) << e.what();
  }
}

TEST(ParseGtfs, FiftyNineStopFixture) {
  TempDir dir;
  const auto pair = synth::make_routes(synth::SynthConfig{});
  const RouteDefinition defs[] = {pair.outbound, pair.inbound};
  ingest::write_gtfs(dir.path(), defs);
  const auto routes = ingest::parse_gtfs(dir.path());
  ASSERT_EQ(routes.size(), 2u);
  for (const auto& r : routes) {
    ASSERT_EQ(r.stops.size(), 59u);
    EXPECT_EQ(r.stops.front().cumulative_distance, 0.0);
    for (std::size_t i = 1; i < r.stops.size(); ++i)
      EXPECT_GT(r.stops[i].cumulative_distance, r.stops[i - 1].cumulative_distance);
    EXPECT_EQ(r.total_length, r.stops.back().cumulative_distance);
    EXPECT_NEAR(r.total_length, 19000.0, 1e-6);
  }
  EXPECT_EQ(routes[0].direction, Direction::kOutbound);
  EXPECT_EQ(routes[1].direction, Direction::kInbound);
  EXPECT_EQ(routes[0].stops.front().stop_id, routes[1].stops.back().stop_id);
  EXPECT_EQ(routes[0].scheduled_duration, pair.outbound.scheduled_duration);
}

TEST(ParseGtfs, ShapePolylineUsedWithoutShapeDistances) {
  TempDir dir;
  // Stops sit beside an L-shaped shape; along-shape distance exceeds the chord.
  write_file(dir / "routes.txt", kRoutes);
  write_file(dir / "trips.txt", "route_id,service_id,trip_id,direction_id,shape_id\nR1,wk,T1,0,S\n");
  write_file(dir / "stops.txt",
             "stop_id,stop_name,stop_lat,stop_lon\nA,a,53.35,-6.26\nB,b,53.36,-6.245\n");
  write_file(dir / "stop_times.txt",
             "trip_id,arrival_time,departure_time,stop_id,stop_sequence\n"
             "T1,08:00:00,08:00:00,A,1\nT1,08:10:00,08:10:00,B,2\n");
  write_file(dir / "shapes.txt",
             "shape_id,shape_pt_lat,shape_pt_lon,shape_pt_sequence\n"
             "S,53.35,-6.26,1\nS,53.36,-6.26,2\nS,53.36,-6.245,3\n");
  const auto routes = ingest::parse_gtfs(dir.path());
  ASSERT_EQ(routes.size(), 1u);
  const double leg1 = geo::haversine({53.35, -6.26}, {53.36, -6.26});
  const double leg2 = geo::haversine({53.36, -6.26}, {53.36, -6.245});
  EXPECT_NEAR(routes[0].total_length, leg1 + leg2, 1.0);
  EXPECT_GT(routes[0].total_length, geo::haversine({53.35, -6.26}, {53.36, -6.245}) + 100.0);
}

TEST(ParseGps, NullIslandDropped) {
  TempDir dir;
  write_file(dir / "gps.csv", dublin_row(1351756800000000, "33001", "100", 53.35, -6.26) +
                                  dublin_row(1351756830000000, "33001", "100", 0.0, 0.0));
  const auto parsed = ingest::parse_gps(dir / "gps.csv");
  EXPECT_EQ(parsed.records.size(), 1u);
  EXPECT_EQ(parsed.dropped, 1u);
  EXPECT_EQ(parsed.rows, 2u);
}

TEST(ParseGps, OutOfOrderRowsAreSorted) {
  TempDir dir;
  write_file(dir / "gps.csv", dublin_row(1351756860000000, "33001", "100", 53.352, -6.26) +
                                  dublin_row(1351756800000000, "33001", "100", 53.350, -6.26) +
                                  dublin_row(1351756830000000, "33001", "100", 53.351, -6.26));
  const auto parsed = ingest::parse_gps(dir / "gps.csv");
  ASSERT_EQ(parsed.records.size(), 3u);
  EXPECT_EQ(parsed.records[0].timestamp, 1351756800.0);
  EXPECT_EQ(parsed.records[1].timestamp, 1351756830.0);
  EXPECT_EQ(parsed.records[2].timestamp, 1351756860.0);
  EXPECT_EQ(parsed.records[1].position.lat, 53.351);
  EXPECT_EQ(parsed.records[0].vehicle_id, "33001");
  EXPECT_EQ(parsed.records[0].vehicle_journey_id, "100");
  EXPECT_EQ(parsed.records[0].line_id, "46A");
}

TEST(ParseGps, HeaderAndGarbageRows) {
  TempDir dir;
  write_file(dir / "gps.csv",
             "timestamp,line,dir,pattern,timeframe,journey,op,cong,lon,lat,delay,block,vehicle,"
             "stop,at_stop\n" +
                 dublin_row(1351756800000000, "33001", "100", 53.35, -6.26) +
                 "abc,46A,0,x,x,100,D1,0,-6.26,53.35,0,1,33001,1,0\n" +
                 dublin_row(12, "33001", "100", 53.35, -6.26) + "1351756800000000,46A,short\n" +
                 dublin_row(1351756800000000, "33001", "100", 95.0, -6.26));
  const auto parsed = ingest::parse_gps(dir / "gps.csv");
  EXPECT_EQ(parsed.rows, 5u);
  EXPECT_EQ(parsed.records.size(), 1u);
  EXPECT_EQ(parsed.dropped, 4u);
  EXPECT_EQ(parsed.records.size() + parsed.dropped, parsed.rows);
}

TEST(ParseGps, MissingFileIsUnreadable) {
  try {
    ingest::parse_gps("/nonexistent/feed.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnreadableFile);
  }
}

TEST(ParseGps, EmitParseRoundTripTenThousandRows) {
  synth::SynthConfig cfg;
  cfg.trips = 100;
  auto data = synth::generate(cfg);
  ASSERT_GE(data.gps.size(), 10000u);
  data.gps.resize(10000);
  std::stable_sort(data.gps.begin(), data.gps.end(),
                   [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  TempDir dir;
  ingest::emit_gps(dir / "gps.csv", data.gps);
  const auto parsed = ingest::parse_gps(dir / "gps.csv");
  EXPECT_EQ(parsed.dropped, 0u);
  ASSERT_EQ(parsed.records.size(), data.gps.size());
  for (std::size_t i = 0; i < data.gps.size(); ++i) ASSERT_EQ(parsed.records[i], data.gps[i]) << i;

  ingest::emit_gps(dir / "with_header.csv", data.gps, true);
  EXPECT_EQ(ingest::parse_gps(dir / "with_header.csv").records, parsed.records);
}

TEST(GroupJourneys, InterleavedVehiclesAndJourneys) {
  std::vector<GpsRecord> recs;
  for (int i = 0; i < 12; ++i) {
    const std::string v = i % 2 ? "v2" : "v1";
    const std::string j = (i / 2) % 2 ? "j2" : "j1";
    recs.push_back({1351756800.0 + 100 - i, "46A", v, j, {53.35 + i * 1e-4, -6.26}});
  }
  const auto journeys = ingest::group_journeys(recs);
  ASSERT_EQ(journeys.size(), 4u);
  std::size_t total = 0;
  for (const auto& j : journeys) {
    total += j.records.size();
    for (std::size_t i = 0; i < j.records.size(); ++i) {
      EXPECT_EQ(j.records[i].vehicle_id, j.vehicle_id);
      EXPECT_EQ(j.records[i].vehicle_journey_id, j.vehicle_journey_id);
      if (i) EXPECT_GE(j.records[i].timestamp, j.records[i - 1].timestamp);
    }
  }
  EXPECT_EQ(total, recs.size());
  for (std::size_t k = 1; k < journeys.size(); ++k)
    EXPECT_LE(journeys[k - 1].records.front().timestamp, journeys[k].records.front().timestamp);
}

TEST(GroupJourneys, SingleRecord) {
  const std::vector<GpsRecord> recs{{1351756800.0, "46A", "v", "j", {53.35, -6.26}}};
  const auto journeys = ingest::group_journeys(recs);
  ASSERT_EQ(journeys.size(), 1u);
  EXPECT_EQ(journeys[0].records.size(), 1u);
}

TEST(GroupJourneys, RecoversGeneratorLabels) {
  synth::SynthConfig cfg;
  cfg.trips = 120;
  cfg.vehicles = 7;
  cfg.stay_point_rate = 0.3;
  const auto data = synth::generate(cfg);
  auto shuffled = data.gps;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(3));
  const auto journeys = ingest::group_journeys(shuffled);
  ASSERT_EQ(journeys.size(), data.truth.trips.size());

  std::map<std::pair<std::string, std::string>, std::size_t> expected;
  for (const auto& t : data.truth.trips)
    expected[{t.vehicle_id, t.vehicle_journey_id}] = t.record_tags.size();
  for (const auto& j : journeys) {
    auto it = expected.find({j.vehicle_id, j.vehicle_journey_id});
    ASSERT_NE(it, expected.end());
    EXPECT_EQ(j.records.size(), it->second);
  }
}

}  // namespace
