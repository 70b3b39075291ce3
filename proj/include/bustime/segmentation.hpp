#pragma once

// Raw journeys to clean origin-to-destination trips:
//   de-duplicate -> split on long gaps -> judge direction -> check completeness.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bustime/error.hpp"
#include "bustime/geo.hpp"
#include "bustime/ingest.hpp"
#include "bustime/outcome.hpp"

namespace bustime {

/// One GPS point of a segmented trip, relative to the trip start.
struct TripPoint {
  double t = 0.0;  // seconds since the first point
  double d = 0.0;  // meters travelled since the first point
  geo::GeoPoint position;
};

struct SegmentedTrip {
  std::string trip_id;
  std::string route_id;
  Direction direction = Direction::kOutbound;
  double departure_epoch = 0.0;
  double departure_time_of_day = 0.0;  // seconds since local midnight
  std::vector<TripPoint> points;
};

struct SegmentationConfig {
  double gap_split_s = 900.0;
  std::size_t direction_probe_points = 30;
  double endpoint_radius_m = 300.0;
  double min_completeness_fraction = 0.5;
  double utc_offset_s = 0.0;  // local time = UTC + offset, for time-of-day

  void validate() const {
    if (!(gap_split_s > 0) || direction_probe_points < 2 || !(endpoint_radius_m > 0) ||
        !(min_completeness_fraction > 0) || !(min_completeness_fraction <= 1.0))
      throw Error(ErrorCode::kInvalidConfig, "segmentation thresholds must be positive "
                                             "and the completeness fraction in (0, 1]");
  }
};

/// The two directions of one line, as read from GTFS.
struct RoutePair {
  RouteDefinition outbound;
  RouteDefinition inbound;

  const RouteDefinition& get(Direction d) const {
    return d == Direction::kOutbound ? outbound : inbound;
  }
};

struct FragmentReject {
  std::string vehicle_id;
  std::string vehicle_journey_id;
  std::size_t fragment = 0;
  double first_timestamp = 0.0;
  std::size_t points = 0;
  RejectReason reason = RejectReason::kTooShort;
};

struct SegmentationResult {
  std::vector<SegmentedTrip> trips;  // sorted by departure_epoch
  std::vector<FragmentReject> rejects;
  std::map<RejectReason, std::size_t> tally;
  std::size_t fragments = 0;
};

inline double time_of_day(double epoch, double utc_offset_s) {
  double tod = std::fmod(epoch + utc_offset_s, 86400.0);
  if (tod < 0) tod += 86400.0;
  return tod;
}

/// Throws if `trip` breaks the SegmentedTrip invariants.
inline void validate(const SegmentedTrip& trip, std::size_t min_points) {
  const auto& p = trip.points;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, "trip '" + trip.trip_id + "': " + what);
  };
  if (p.size() < min_points) fail("fewer than " + std::to_string(min_points) + " points");
  if (p.front().t != 0.0 || p.front().d != 0.0) fail("does not start at (0, 0)");
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (!(p[i].t > p[i - 1].t)) fail("times not strictly increasing at " + std::to_string(i));
    if (!(p[i].d >= p[i - 1].d)) fail("distance decreasing at " + std::to_string(i));
  }
}

namespace segmentation {

/// Collapses runs of consecutive records at an identical position to the
/// first record of each run.
inline RawJourney deduplicate(const RawJourney& journey) {
  RawJourney out{journey.vehicle_id, journey.vehicle_journey_id, {}};
  out.records.reserve(journey.records.size());
  for (const auto& r : journey.records) {
    if (!out.records.empty() && out.records.back().position == r.position) continue;
    out.records.push_back(r);
  }
  return out;
}

/// Cuts wherever consecutive timestamps differ by more than the gap threshold.
inline std::vector<RawJourney> split_by_gap(const RawJourney& journey,
                                            const SegmentationConfig& cfg) {
  std::vector<RawJourney> out;
  for (std::size_t i = 0; i < journey.records.size(); ++i) {
    if (i == 0 || journey.records[i].timestamp - journey.records[i - 1].timestamp > cfg.gap_split_s)
      out.push_back({journey.vehicle_id, journey.vehicle_journey_id, {}});
    out.back().records.push_back(journey.records[i]);
  }
  return out;
}

namespace detail {

inline std::optional<geo::PlanarPoint> displacement(geo::GeoPoint from, geo::GeoPoint to) {
  try {
    return geo::project(from, to);
  } catch (const Error&) {
    return std::nullopt;
  }
}

inline double cosine(geo::PlanarPoint a, geo::PlanarPoint b) {
  const double na = std::hypot(a.x, a.y);
  const double nb = std::hypot(b.x, b.y);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return (a.x * b.x + a.y * b.y) / (na * nb);
}

}  // namespace detail

/// Compares the vector from the first to the N-th record (N = probe
/// points) against each direction's first-stop to last-stop vector and
/// picks the direction with the larger, strictly positive, cosine.
inline Outcome<Direction> judge_direction(const RawJourney& fragment, const RoutePair& routes,
                                          const SegmentationConfig& cfg) {
  if (fragment.records.size() < cfg.direction_probe_points) return RejectReason::kTooShort;
  const auto probe = detail::displacement(fragment.records.front().position,
                                          fragment.records[cfg.direction_probe_points - 1].position);
  const auto out_ref = detail::displacement(routes.outbound.first_stop().position,
                                            routes.outbound.last_stop().position);
  const auto in_ref = detail::displacement(routes.inbound.first_stop().position,
                                           routes.inbound.last_stop().position);
  if (!probe || !out_ref || !in_ref) return RejectReason::kAmbiguousDirection;
  const double cos_out = detail::cosine(*probe, *out_ref);
  const double cos_in = detail::cosine(*probe, *in_ref);
  if (cos_out <= 0.0 && cos_in <= 0.0) return RejectReason::kAmbiguousDirection;
  if (cos_out == cos_in) return RejectReason::kAmbiguousDirection;
  return cos_out > cos_in ? Direction::kOutbound : Direction::kInbound;
}

/// Accepts a direction-judged fragment when it covers at least the
/// configured fraction of the scheduled duration and route length and
/// both ends lie within the endpoint radius of the terminal stops.
inline Outcome<SegmentedTrip> check_completeness(const RawJourney& fragment,
                                                 const RouteDefinition& route,
                                                 const SegmentationConfig& cfg) {
  const auto& recs = fragment.records;
  if (recs.empty()) return RejectReason::kTooShort;

  SegmentedTrip trip;
  trip.route_id = route.route_id;
  trip.direction = route.direction;
  trip.departure_epoch = recs.front().timestamp;
  trip.departure_time_of_day = time_of_day(trip.departure_epoch, cfg.utc_offset_s);
  trip.points.reserve(recs.size());
  trip.points.push_back({0.0, 0.0, recs.front().position});
  for (std::size_t i = 1; i < recs.size(); ++i) {
    const double t = recs[i].timestamp - recs.front().timestamp;
    if (!(t > trip.points.back().t)) continue;  // same timestamp, different fix
    const double step = geo::haversine(trip.points.back().position, recs[i].position);
    trip.points.push_back({t, trip.points.back().d + step, recs[i].position});
  }
  if (trip.points.size() < cfg.direction_probe_points) return RejectReason::kTooShort;

  const double duration = trip.points.back().t;
  const double travelled = trip.points.back().d;
  if (duration < cfg.min_completeness_fraction * route.scheduled_duration ||
      travelled < cfg.min_completeness_fraction * route.total_length)
    return RejectReason::kTooShortInTimeOrDistance;

  if (geo::haversine(recs.front().position, route.first_stop().position) > cfg.endpoint_radius_m ||
      geo::haversine(trip.points.back().position, route.last_stop().position) >
          cfg.endpoint_radius_m)
    return RejectReason::kEndpointTooFar;

  return trip;
}

/// Runs the full pipeline over every journey. Trips come back sorted by
/// departure epoch; every fragment is either a trip or a tallied reject.
inline SegmentationResult segment_all(std::span<const RawJourney> journeys,
                                      const RoutePair& routes, const SegmentationConfig& cfg) {
  cfg.validate();
  SegmentationResult result;
  for (const auto& journey : journeys) {
    const auto fragments = split_by_gap(deduplicate(journey), cfg);
    for (std::size_t f = 0; f < fragments.size(); ++f) {
      const auto& fragment = fragments[f];
      ++result.fragments;
      auto reject = [&](RejectReason why) {
        ++result.tally[why];
        result.rejects.push_back({journey.vehicle_id, journey.vehicle_journey_id, f,
                                  fragment.records.front().timestamp, fragment.records.size(),
                                  why});
      };
      const auto direction = judge_direction(fragment, routes, cfg);
      if (!accepted(direction)) {
        reject(reason(direction));
        continue;
      }
      auto trip = check_completeness(fragment, routes.get(std::get<Direction>(direction)), cfg);
      if (!accepted(trip)) {
        reject(reason(trip));
        continue;
      }
      auto& accepted_trip = std::get<SegmentedTrip>(trip);
      accepted_trip.trip_id =
          journey.vehicle_id + ":" + journey.vehicle_journey_id + ":" + std::to_string(f);
      result.trips.push_back(std::move(accepted_trip));
    }
  }
  std::stable_sort(result.trips.begin(), result.trips.end(),
                   [](const SegmentedTrip& a, const SegmentedTrip& b) {
                     return a.departure_epoch < b.departure_epoch;
                   });
  return result;
}

/// Picks the outbound/inbound pair for `route_id` (or the only route when
/// `route_id` is empty).
inline RoutePair select_route_pair(std::span<const RouteDefinition> routes,
                                   const std::string& route_id) {
  std::string id = route_id;
  if (id.empty()) {
    std::set<std::string> ids;
    for (const auto& r : routes) ids.insert(r.route_id);
    if (ids.size() != 1)
      throw Error(ErrorCode::kInvalidArgument,
                  "GTFS holds " + std::to_string(ids.size()) + " routes; select one explicitly");
    id = *ids.begin();
  }
  const RouteDefinition* out = nullptr;
  const RouteDefinition* in = nullptr;
  for (const auto& r : routes) {
    if (r.route_id != id) continue;
    (r.direction == Direction::kOutbound ? out : in) = &r;
  }
  if (out == nullptr || in == nullptr)
    throw Error(ErrorCode::kInvalidArgument,
                "route '" + id + "' needs both an outbound and an inbound definition");
  return {*out, *in};
}

}  // namespace segmentation
}  // namespace bustime
