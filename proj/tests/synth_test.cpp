#include "bustime/synth.hpp"

#include <gtest/gtest.h>

#include "bustime/segmentation.hpp"
#include "test_support.hpp"

namespace {

using namespace bustime;
using testing_support::read_file;
using testing_support::TempDir;

synth::SynthConfig small() {
  synth::SynthConfig cfg;
  cfg.trips = 50;
  cfg.inbound_fraction = 0.4;
  cfg.noisy_point_rate = 0.01;
  cfg.missing_segment_rate = 0.1;
  cfg.truncated_rate = 0.1;
  cfg.late_start_rate = 0.1;
  cfg.sparse_rate = 0.1;
  return cfg;
}

TEST(Synth, SameSeedSameBytes) {
  TempDir a, b;
  synth::write(a.path(), synth::generate(small()));
  synth::write(b.path(), synth::generate(small()));
  for (const char* f : {"gps.csv", "truth.csv", "gtfs/stops.txt", "gtfs/stop_times.txt"})
    EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;

  auto other = small();
  other.seed = 7;
  TempDir c;
  synth::write(c.path(), synth::generate(other));
  EXPECT_NE(read_file(a / "gps.csv"), read_file(c / "gps.csv"));
}

TEST(Synth, WrittenFilesParseBack) {
  TempDir dir;
  const auto data = synth::generate(small());
  synth::write(dir.path(), data);
  const auto routes = ingest::parse_gtfs(dir / "gtfs");
  ASSERT_EQ(routes.size(), 2u);
  EXPECT_EQ(routes[0].stops.size(), 59u);
  EXPECT_EQ(routes[0].scheduled_duration, data.routes.outbound.scheduled_duration);
  const auto gps = ingest::parse_gps(dir / "gps.csv");
  EXPECT_EQ(gps.records.size(), data.gps.size());
  EXPECT_EQ(gps.dropped, 0u);
}

TEST(Synth, TruthIsConsistent) {
  const auto cfg = small();
  const auto data = synth::generate(cfg);
  ASSERT_EQ(data.truth.trips.size(), cfg.trips);
  std::size_t offset = 0;
  for (const auto& t : data.truth.trips) {
    EXPECT_EQ(t.first_record, offset);
    offset += t.record_tags.size();
    ASSERT_EQ(t.stop_arrivals.size(), 59u);
    EXPECT_EQ(t.stop_arrivals[0], 0.0);
    for (std::size_t k = 1; k < 59; ++k) EXPECT_GT(t.stop_arrivals[k], t.stop_arrivals[k - 1]);
    for (std::size_t k = 1; k < t.record_tags.size(); ++k)
      EXPECT_GT(data.gps[t.first_record + k].timestamp, data.gps[t.first_record + k - 1].timestamp);
    const auto& first = data.gps[t.first_record];
    if (t.corruption != synth::TripCorruption::kLateStart)
      EXPECT_EQ(first.timestamp, t.departure_epoch);
    EXPECT_EQ(first.line_id, cfg.route_id);
  }
  EXPECT_EQ(offset, data.gps.size());
}

TEST(Synth, DeparturesFollowHeadwayWithinServiceHours) {
  auto cfg = small();
  cfg.trips = 250;
  const auto data = synth::generate(cfg);
  for (const auto& t : data.truth.trips) {
    const double tod = std::fmod(t.departure_epoch - cfg.start_epoch, 86400.0);
    EXPECT_GE(tod, cfg.service_start);
    EXPECT_LE(tod, cfg.service_end);
    EXPECT_EQ(std::fmod(tod - cfg.service_start, cfg.headway), 0.0);
  }
  // 103 departures per day from 06:00 to 23:00 every 10 minutes
  EXPECT_EQ(data.truth.trips[103].departure_epoch, cfg.start_epoch + 86400.0 + cfg.service_start);
}

TEST(Synth, NoisyPointsAreFarFromTruth) {
  auto cfg = small();
  cfg.noisy_point_rate = 0.05;
  cfg.gps_noise_sigma = 0.0;
  const auto data = synth::generate(cfg);
  std::size_t noisy = 0;
  for (const auto& t : data.truth.trips) {
    for (std::size_t k = 0; k < t.record_tags.size(); ++k) {
      if (t.record_tags[k] != synth::RecordTag::kNoisyPoint) continue;
      ++noisy;
      EXPECT_GE(k, 2u);
      EXPECT_LT(k + 2, t.record_tags.size());
      const double along = t.direction == Direction::kOutbound ? t.true_distance[k]
                                                               : cfg.route_length - t.true_distance[k];
      const auto truth_pos = geo::destination(cfg.origin, cfg.bearing_deg * geo::kDegToRad, along);
      const double off = geo::haversine(truth_pos, data.gps[t.first_record + k].position);
      EXPECT_GE(off, cfg.noisy_offset_min * 0.99);
      EXPECT_LE(off, cfg.noisy_offset_max * 1.01);
    }
  }
  EXPECT_GT(noisy, 50u);
}

TEST(Synth, MissingSegmentLeavesLongGap) {
  auto cfg = small();
  cfg.missing_segment_rate = 1.0;
  cfg.truncated_rate = cfg.late_start_rate = cfg.sparse_rate = 0.0;
  const auto data = synth::generate(cfg);
  for (const auto& t : data.truth.trips) {
    double widest = 0.0;
    for (std::size_t k = 1; k < t.record_tags.size(); ++k)
      widest = std::max(widest, data.gps[t.first_record + k].timestamp -
                                    data.gps[t.first_record + k - 1].timestamp);
    EXPECT_GT(widest, 900.0);
  }
}

TEST(Synth, MissingSegmentsSplitEveryJourney) {
  auto cfg = small();
  cfg.missing_segment_rate = 1.0;
  cfg.truncated_rate = cfg.late_start_rate = cfg.sparse_rate = 0.0;
  const auto data = synth::generate(cfg);
  const auto journeys = ingest::group_journeys(data.gps);
  ASSERT_EQ(journeys.size(), data.truth.trips.size());
  for (const auto& j : journeys) {
    const auto fragments = segmentation::split_by_gap(segmentation::deduplicate(j), {});
    EXPECT_EQ(fragments.size(), 2u) << j.vehicle_journey_id;
  }
  for (const auto& t : data.truth.trips) {
    EXPECT_EQ(t.corruption, synth::TripCorruption::kMissingSegment);
    EXPECT_FALSE(t.expected_reject().has_value());
  }
  // No fragment is a complete trip, so nothing survives segmentation.
  EXPECT_TRUE(segmentation::segment_all(journeys, data.routes, {}).trips.empty());
}

TEST(Synth, ArrivalsRecoverableFromCleanTrace) {
  synth::SynthConfig cfg;
  cfg.trips = 200;
  cfg.gps_noise_sigma = 0.0;
  cfg.dwell_max = 0.0;
  cfg.stay_point_rate = 0.0;
  cfg.noisy_point_rate = 0.0;
  const auto data = synth::generate(cfg);
  double worst = 0.0;
  for (const auto& t : data.truth.trips) {
    const auto& stops = data.routes.get(t.direction).stops;
    for (std::size_t k = 0; k < stops.size(); ++k) {
      const double s = stops[k].cumulative_distance;
      for (std::size_t r = 0; r + 1 < t.record_tags.size(); ++r) {
        const double a = t.true_distance[r], b = t.true_distance[r + 1];
        if (!(a <= s && s <= b && b > a)) continue;
        const double ta = data.gps[t.first_record + r].timestamp - t.departure_epoch;
        const double tb = data.gps[t.first_record + r + 1].timestamp - t.departure_epoch;
        worst = std::max(worst, std::abs(ta + (s - a) / (b - a) * (tb - ta) - t.stop_arrivals[k]));
        break;
      }
    }
  }
  EXPECT_LT(worst, cfg.sample_period / 2);
}

TEST(Synth, ConstantSpeedArrivalsAreDistanceOverSpeed) {
  synth::SynthConfig cfg;
  cfg.trips = 3;
  cfg.base_speed = 8.0;
  cfg.rush_amplitude = cfg.trip_speed_sigma = cfg.ar_sigma = cfg.dwell_max = 0.0;
  cfg.gps_noise_sigma = 0.0;
  cfg.stay_point_rate = cfg.noisy_point_rate = 0.0;
  const auto data = synth::generate(cfg);
  for (const auto& t : data.truth.trips) {
    const auto& stops = data.routes.outbound.stops;
    for (std::size_t k = 0; k < stops.size(); ++k)
      EXPECT_NEAR(t.stop_arrivals[k], stops[k].cumulative_distance / 8.0, 1e-9);
  }
}

TEST(Synth, SparseTripsHaveFewRecords) {
  auto cfg = small();
  cfg.sparse_rate = 1.0;
  cfg.missing_segment_rate = cfg.truncated_rate = cfg.late_start_rate = 0.0;
  for (const auto& t : synth::generate(cfg).truth.trips) {
    EXPECT_LT(t.record_tags.size(), 30u);
    EXPECT_EQ(t.expected_reject(), RejectReason::kTooShort);
  }
}

TEST(Synth, InvalidConfigRejected) {
  auto cfg = small();
  cfg.stops = 1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = small();
  cfg.truncated_rate = 0.9;
  EXPECT_THROW(synth::generate(cfg), Error);
}

TEST(TripTruth, PrimaryReasonIsAmongViolatedRules) {
  using synth::TripCorruption;
  for (auto c : {TripCorruption::kNone, TripCorruption::kMissingSegment, TripCorruption::kTruncated,
                 TripCorruption::kLateStart, TripCorruption::kSparse}) {
    synth::TripTruth t;
    t.corruption = c;
    const auto broken = t.violated_rules();
    EXPECT_EQ(broken.empty(), c == TripCorruption::kNone);
    if (const auto primary = t.expected_reject()) EXPECT_TRUE(broken.contains(*primary)) << synth::to_string(c);
  }
  synth::TripTruth truncated;
  truncated.corruption = TripCorruption::kTruncated;
  EXPECT_TRUE(truncated.violated_rules().contains(RejectReason::kEndpointTooFar));
}

}  // namespace
