#pragma once

// Deterministic synthetic line: a straight two-direction route with evenly
// spaced stops, simulated bus runs sampled like a GPS feed, and ground
// truth for every trip (stop arrival times and injected corruption).
//
// Corruption taxonomy:
//   stay points    - terminal idling, repeated identical fixes
//   noisy points   - isolated fixes displaced hundreds of meters
//   missing points - a reporting gap longer than the split threshold
// plus trip-level defects that the completeness rules must catch
// (truncated runs, late GPS start, too few fixes).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "bustime/csv.hpp"
#include "bustime/error.hpp"
#include "bustime/geo.hpp"
#include "bustime/ingest.hpp"
#include "bustime/outcome.hpp"
#include "bustime/segmentation.hpp"

namespace bustime::synth {

struct SynthConfig {
  std::uint64_t seed = 2012;
  std::string route_id = "46A";
  std::size_t stops = 59;
  double route_length = 19000.0;      // meters
  geo::GeoPoint origin{53.3560, -6.3290};
  double bearing_deg = 128.0;

  std::size_t trips = 500;
  std::size_t vehicles = 40;
  double start_epoch = 1351728000.0;  // 2012-11-01T00:00:00Z, first service day
  double service_start = 6 * 3600.0;  // seconds after midnight
  double service_end = 23 * 3600.0;
  double headway = 600.0;
  double inbound_fraction = 0.0;

  double base_speed = 6.0;         // m/s
  double rush_amplitude = 0.3;     // fractional slowdown at peak congestion
  double trip_speed_sigma = 0.08;  // persistent per-trip log-speed factor
  double ar_phi = 0.8;             // per-segment AR(1) on log-speed
  double ar_sigma = 0.15;
  double dwell_max = 20.0;         // seconds, uniform per intermediate stop

  double gps_noise_sigma = 10.0;   // meters per axis
  double sample_period = 30.0;
  double sample_jitter = 2.0;

  double stay_point_rate = 0.1;    // per trip: idling cluster at the destination
  std::size_t stay_point_count = 30;
  double noisy_point_rate = 0.002; // per interior record
  double noisy_offset_min = 300.0;
  double noisy_offset_max = 1500.0;
  double missing_segment_rate = 0.0;  // per trip
  double missing_gap_min = 960.0;     // seconds of silence, > split threshold
  double truncated_rate = 0.0;
  double late_start_rate = 0.0;
  double sparse_rate = 0.0;

  void validate() const {
    auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    const bool ok =
        stops >= 2 && route_length > 0 && trips > 0 && vehicles > 0 && headway > 0 &&
        service_end > service_start && base_speed > 0 && rush_amplitude >= 0 &&
        rush_amplitude < 1 && trip_speed_sigma >= 0 && ar_phi >= 0 && ar_phi < 1 &&
        ar_sigma >= 0 && dwell_max >= 0 && gps_noise_sigma >= 0 && sample_period > 0 &&
        sample_jitter >= 0 && sample_jitter < sample_period / 2 && rate_ok(stay_point_rate) &&
        rate_ok(noisy_point_rate) && rate_ok(missing_segment_rate) && rate_ok(truncated_rate) &&
        rate_ok(late_start_rate) && rate_ok(sparse_rate) && rate_ok(inbound_fraction) &&
        missing_segment_rate + truncated_rate + late_start_rate + sparse_rate <= 1.0 &&
        noisy_offset_max >= noisy_offset_min && noisy_offset_min >= 0 && geo::is_valid(origin);
    if (!ok) throw Error(ErrorCode::kInvalidConfig, "synthetic configuration out of range");
  }
};

enum class TripCorruption { kNone, kMissingSegment, kTruncated, kLateStart, kSparse };

constexpr std::string_view to_string(TripCorruption c) {
  switch (c) {
    case TripCorruption::kNone: return "none";
    case TripCorruption::kMissingSegment: return "missing_segment";
    case TripCorruption::kTruncated: return "truncated";
    case TripCorruption::kLateStart: return "late_start";
    case TripCorruption::kSparse: return "sparse";
  }
  return "unknown";
}

enum class RecordTag : std::uint8_t { kClean, kStayPoint, kNoisyPoint };

struct TripTruth {
  std::string vehicle_id;
  std::string vehicle_journey_id;
  Direction direction = Direction::kOutbound;
  double departure_epoch = 0.0;
  std::vector<double> stop_arrivals;  // seconds after departure, in travel order
  TripCorruption corruption = TripCorruption::kNone;
  bool stay_cluster = false;
  std::size_t first_record = 0;  // offset into SynthOutput::gps
  std::vector<RecordTag> record_tags;
  std::vector<double> true_distance;  // along-route meters per emitted record

  /// Reject reason the segmentation rules must produce for a trip-level
  /// defect. Missing segments split into several fragments and carry none.
  std::optional<RejectReason> expected_reject() const {
    switch (corruption) {
      case TripCorruption::kTruncated: return RejectReason::kTooShortInTimeOrDistance;
      case TripCorruption::kLateStart: return RejectReason::kEndpointTooFar;
      case TripCorruption::kSparse: return RejectReason::kTooShort;
      default: return std::nullopt;
    }
  }

  /// Every rule the uncorrupted-by-noise trace breaks. A truncated run also
  /// ends far from the terminus, so noise that inflates its travelled
  /// distance can legitimately surface the endpoint rule instead.
  std::set<RejectReason> violated_rules() const {
    switch (corruption) {
      case TripCorruption::kTruncated:
        return {RejectReason::kTooShortInTimeOrDistance, RejectReason::kEndpointTooFar};
      case TripCorruption::kLateStart: return {RejectReason::kEndpointTooFar};
      case TripCorruption::kSparse: return {RejectReason::kTooShort};
      case TripCorruption::kMissingSegment:
        return {RejectReason::kTooShort, RejectReason::kTooShortInTimeOrDistance, RejectReason::kEndpointTooFar};
      case TripCorruption::kNone: return {};
    }
    return {};
  }
};

struct GroundTruth {
  std::vector<TripTruth> trips;
};

struct SynthOutput {
  RoutePair routes;
  std::vector<GpsRecord> gps;
  GroundTruth truth;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// 0 off-peak, 1 at the 08:00 and 17:30 peaks.
inline double congestion(double time_of_day) {
  constexpr double kPeriod = 9.5 * 3600.0;
  return 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * (time_of_day - 8 * 3600.0) / kPeriod));
}

/// Piecewise-linear motion along the route for one run.
struct Run {
  std::vector<double> stop_s;  // along-route distance of stops, travel order
  std::vector<double> arrive;
  std::vector<double> depart;
  std::vector<double> speed;   // per segment

  double end() const { return arrive.back(); }

  double distance_at(double t) const {
    if (t <= 0.0) return 0.0;
    for (std::size_t k = 0; k + 1 < stop_s.size(); ++k) {
      if (t <= depart[k]) return stop_s[k];
      if (t <= arrive[k + 1]) return std::min(stop_s[k] + speed[k] * (t - depart[k]), stop_s[k + 1]);
    }
    return stop_s.back();
  }

  double time_at(double s) const {
    for (std::size_t k = 0; k + 1 < stop_s.size(); ++k) {
      if (s <= stop_s[k + 1]) return depart[k] + std::max(0.0, s - stop_s[k]) / speed[k];
    }
    return end();
  }
};

}  // namespace detail

/// Stop positions and the outbound/inbound definitions of the synthetic line.
inline RoutePair make_routes(const SynthConfig& cfg) {
  const double bearing = cfg.bearing_deg * geo::kDegToRad;
  const double n_seg = static_cast<double>(cfg.stops - 1);
  RoutePair pair;
  pair.outbound.route_id = pair.inbound.route_id = cfg.route_id;
  pair.outbound.direction = Direction::kOutbound;
  pair.inbound.direction = Direction::kInbound;
  for (std::size_t k = 0; k < cfg.stops; ++k) {
    const double s = cfg.route_length * static_cast<double>(k) / n_seg;
    pair.outbound.stops.push_back(
        {"S" + std::to_string(1000 + k), geo::destination(cfg.origin, bearing, s), s});
  }
  for (std::size_t j = 0; j < cfg.stops; ++j) {
    const auto& src = pair.outbound.stops[cfg.stops - 1 - j];
    pair.inbound.stops.push_back({src.stop_id, src.position, cfg.route_length - src.cumulative_distance});
  }
  const double schedule =
      std::round(cfg.route_length / cfg.base_speed + (n_seg - 1.0) * cfg.dwell_max / 2.0);
  for (auto* def : {&pair.outbound, &pair.inbound}) {
    def->total_length = def->stops.back().cumulative_distance;
    def->scheduled_duration = schedule;
  }
  return pair;
}

/// Generates the route pair, the raw feed, and per-trip ground truth.
/// Output is a pure function of the configuration.
inline SynthOutput generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthOutput out;
  out.routes = make_routes(cfg);
  const double bearing = cfg.bearing_deg * geo::kDegToRad;

  auto position_at = [&](Direction dir, double s) {
    const double along = dir == Direction::kOutbound ? s : cfg.route_length - s;
    return geo::destination(cfg.origin, bearing, along);
  };

  const auto per_day = static_cast<std::size_t>(
      std::floor((cfg.service_end - cfg.service_start) / cfg.headway)) + 1;

  for (std::size_t i = 0; i < cfg.trips; ++i) {
    std::mt19937_64 rng(detail::splitmix64(cfg.seed * 0x100000001B3ull + i));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    TripTruth truth;
    truth.vehicle_id = "V" + std::to_string(33000 + i % cfg.vehicles);
    truth.vehicle_journey_id = std::to_string(100000 + i);
    truth.direction = unit(rng) < cfg.inbound_fraction ? Direction::kInbound : Direction::kOutbound;
    const double day = static_cast<double>(i / per_day);
    const double tod = cfg.service_start + static_cast<double>(i % per_day) * cfg.headway;
    truth.departure_epoch = cfg.start_epoch + day * 86400.0 + tod;

    const double draw = unit(rng);
    double acc = cfg.missing_segment_rate;
    if (draw < acc) truth.corruption = TripCorruption::kMissingSegment;
    else if (draw < (acc += cfg.truncated_rate)) truth.corruption = TripCorruption::kTruncated;
    else if (draw < (acc += cfg.late_start_rate)) truth.corruption = TripCorruption::kLateStart;
    else if (draw < (acc += cfg.sparse_rate)) truth.corruption = TripCorruption::kSparse;
    truth.stay_cluster =
        unit(rng) < cfg.stay_point_rate && truth.corruption == TripCorruption::kNone;

    // Motion.
    const auto& def = out.routes.get(truth.direction);
    detail::Run run;
    for (const auto& stop : def.stops) run.stop_s.push_back(stop.cumulative_distance);
    const double trip_factor = cfg.trip_speed_sigma * normal(rng);
    double ar = cfg.ar_sigma * normal(rng);
    double clock = 0.0;
    run.arrive.push_back(0.0);
    run.depart.push_back(0.0);
    for (std::size_t k = 0; k + 1 < def.stops.size(); ++k) {
      if (k > 0) ar = cfg.ar_phi * ar + std::sqrt(1.0 - cfg.ar_phi * cfg.ar_phi) * cfg.ar_sigma * normal(rng);
      const double slow = 1.0 - cfg.rush_amplitude * detail::congestion(std::fmod(tod + clock, 86400.0));
      const double v = cfg.base_speed * slow * std::exp(trip_factor + ar);
      run.speed.push_back(v);
      clock += (run.stop_s[k + 1] - run.stop_s[k]) / v;
      run.arrive.push_back(clock);
      if (k + 2 < def.stops.size()) clock += cfg.dwell_max * unit(rng);
      run.depart.push_back(clock);
    }
    truth.stop_arrivals = run.arrive;

    // Sampling instants (whole seconds after departure).
    const double period = truth.corruption == TripCorruption::kSparse
                              ? std::ceil(run.end() / 25.0)
                              : cfg.sample_period;
    std::vector<double> times{0.0};
    for (std::size_t j = 1;; ++j) {
      double t = static_cast<double>(j) * period;
      if (cfg.sample_jitter > 0) t += cfg.sample_jitter * (2.0 * unit(rng) - 1.0);
      t = std::round(t);
      if (t >= std::floor(run.end())) break;
      if (t > times.back()) times.push_back(t);
    }
    const double end_t = std::max(std::round(run.end()), times.back() + 1.0);
    times.push_back(end_t);

    // Trip-level defects drop whole stretches of samples.
    double keep_from = -1.0, keep_to = end_t + 1.0, gap_from = 0.0, gap_to = -1.0;
    switch (truth.corruption) {
      case TripCorruption::kTruncated:
        keep_to = run.time_at(0.4 * cfg.route_length);
        break;
      case TripCorruption::kLateStart:
        keep_from = run.time_at(400.0 + 300.0 * unit(rng));
        break;
      case TripCorruption::kMissingSegment:
        gap_from = run.time_at(0.35 * cfg.route_length);
        gap_to = std::max(run.time_at(0.70 * cfg.route_length),
                          gap_from + cfg.missing_gap_min + cfg.sample_period);
        break;
      default:
        break;
    }

    truth.first_record = out.gps.size();
    auto emit = [&](double t, geo::GeoPoint p, RecordTag tag, double s) {
      out.gps.push_back({truth.departure_epoch + t, cfg.route_id, truth.vehicle_id,
                         truth.vehicle_journey_id, p});
      truth.record_tags.push_back(tag);
      truth.true_distance.push_back(s);
    };
    std::vector<double> kept;
    for (double t : times) {
      if (t < keep_from || t > keep_to) continue;
      if (t > gap_from && t < gap_to) continue;
      kept.push_back(t);
    }
    for (std::size_t j = 0; j < kept.size(); ++j) {
      const double s = run.distance_at(kept[j]);
      const geo::GeoPoint truth_pos = position_at(truth.direction, s);
      RecordTag tag = RecordTag::kClean;
      geo::PlanarPoint offset{cfg.gps_noise_sigma * normal(rng), cfg.gps_noise_sigma * normal(rng)};
      const bool interior = j >= 2 && j + 2 < kept.size();
      if (interior && unit(rng) < cfg.noisy_point_rate) {
        const double r = cfg.noisy_offset_min + (cfg.noisy_offset_max - cfg.noisy_offset_min) * unit(rng);
        const double a = 2.0 * std::numbers::pi * unit(rng);
        offset = {r * std::sin(a), r * std::cos(a)};
        tag = RecordTag::kNoisyPoint;
      }
      emit(kept[j], geo::unproject(truth_pos, offset), tag, s);
    }
    if (truth.stay_cluster && !kept.empty()) {
      const geo::GeoPoint idle = out.gps.back().position;
      for (std::size_t j = 1; j < cfg.stay_point_count; ++j)
        emit(kept.back() + static_cast<double>(j) * cfg.sample_period, idle, RecordTag::kStayPoint,
             cfg.route_length);
    }
    out.truth.trips.push_back(std::move(truth));
  }
  return out;
}

/// Writes `<dir>/gtfs/`, `<dir>/gps.csv` and `<dir>/truth.csv`.
inline void write(const std::filesystem::path& dir, const SynthOutput& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kUnwritableDirectory, "cannot create " + dir.string());
  const RouteDefinition defs[] = {data.routes.outbound, data.routes.inbound};
  ingest::write_gtfs(dir / "gtfs", defs);
  ingest::emit_gps(dir / "gps.csv", data.gps);

  auto out = csv::open_for_write(dir / "truth.csv");
  out << "vehicle_journey_id,vehicle_id,direction,departure_epoch,corruption,stay_cluster,"
         "noisy_points,records,stop_arrivals\n";
  for (const auto& t : data.truth.trips) {
    const auto noisy = std::count(t.record_tags.begin(), t.record_tags.end(), RecordTag::kNoisyPoint);
    out << t.vehicle_journey_id << ',' << t.vehicle_id << ',' << to_string(t.direction) << ','
        << csv::format_double(t.departure_epoch) << ',' << to_string(t.corruption) << ','
        << (t.stay_cluster ? 1 : 0) << ',' << noisy << ',' << t.record_tags.size() << ',';
    for (std::size_t k = 0; k < t.stop_arrivals.size(); ++k)
      out << (k ? ";" : "") << csv::format_fixed(t.stop_arrivals[k], 3);
    out << '\n';
  }
}

}  // namespace bustime::synth
