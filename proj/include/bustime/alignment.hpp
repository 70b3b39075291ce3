#pragma once

// Segmented trips to model-ready travel-time vectors at common anchors.
//
// Stop-based: for each stop in order, the nearest remaining GPS point
// (kd-tree); that point and every earlier one are then retired, so the
// chosen points stay chronological.
// Distance-based: linear interpolation of t over d every 100 m.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bustime/error.hpp"
#include "bustime/geo.hpp"
#include "bustime/ingest.hpp"
#include "bustime/outcome.hpp"
#include "bustime/segmentation.hpp"

namespace bustime {

enum class Scheme { kStopBased, kDistanceBased };

constexpr std::string_view to_string(Scheme s) {
  return s == Scheme::kStopBased ? "stop_based" : "distance_based";
}

inline std::optional<Scheme> parse_scheme(std::string_view s) {
  if (s == "stop_based" || s == "stop") return Scheme::kStopBased;
  if (s == "distance_based" || s == "distance") return Scheme::kDistanceBased;
  return std::nullopt;
}

struct Anchor {
  std::string anchor_id;
  std::optional<geo::GeoPoint> position;  // absent for distance marks
  double cumulative_distance = 0.0;
};

struct AnchorSet {
  Scheme scheme = Scheme::kStopBased;
  std::vector<Anchor> anchors;

  std::size_t size() const { return anchors.size(); }

  std::vector<double> distances() const {
    std::vector<double> out;
    out.reserve(anchors.size());
    for (const auto& a : anchors) out.push_back(a.cumulative_distance);
    return out;
  }
};

/// Travel time from anchor 0 to every anchor; the unit every model consumes.
struct AlignedTrip {
  std::string trip_id;
  double departure_epoch = 0.0;
  double departure_time_of_day = 0.0;
  std::vector<double> times;  // times[0] == 0, strictly increasing
};

struct StopAlignment {
  AlignedTrip trip;
  std::vector<double> deviations;  // meters, stop to chosen GPS point
};

/// Summary of stop-to-point deviations, in meters.
struct DeviationStats {
  double mean = 0.0;
  double std = 0.0;
  double p1 = 0.0;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
  double p99 = 0.0;
  std::size_t count = 0;
};

inline constexpr double kDistanceAnchorSpacing = 100.0;

inline bool strictly_increasing(std::span<const double> v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) return false;
  return true;
}

namespace alignment {

struct AnchorSets {
  AnchorSet stop_based;
  AnchorSet distance_based;
};

/// Stop anchors are the route's stops; distance anchors sit at
/// 0, 100, ..., floor(L / 100) * 100 meters.
inline AnchorSets build_anchor_sets(const RouteDefinition& route) {
  AnchorSets out;
  out.stop_based.scheme = Scheme::kStopBased;
  for (const auto& s : route.stops)
    out.stop_based.anchors.push_back({s.stop_id, s.position, s.cumulative_distance});

  out.distance_based.scheme = Scheme::kDistanceBased;
  // The epsilon keeps L = 19000 - 1e-9 (coordinate round-off) at 191 marks.
  const auto marks = static_cast<std::size_t>(
      std::floor((route.total_length + 1e-6) / kDistanceAnchorSpacing));
  for (std::size_t k = 0; k <= marks; ++k) {
    const double at = static_cast<double>(k) * kDistanceAnchorSpacing;
    out.distance_based.anchors.push_back({"d" + std::to_string(k * 100), std::nullopt, at});
  }
  return out;
}

inline Outcome<StopAlignment> align_stop_based(const SegmentedTrip& trip, const AnchorSet& anchors) {
  if (anchors.scheme != Scheme::kStopBased)
    throw Error(ErrorCode::kInvalidArgument, "stop-based alignment needs stop anchors");
  if (anchors.anchors.empty() || trip.points.empty()) return RejectReason::kDegenerateAlignment;

  const geo::GeoPoint origin = *anchors.anchors.front().position;
  std::vector<geo::KdTree::Entry> entries;
  entries.reserve(trip.points.size());
  for (std::size_t i = 0; i < trip.points.size(); ++i) {
    try {
      entries.push_back({geo::project(origin, trip.points[i].position), i});
    } catch (const Error&) {
      // far-off fixes cannot be nearest to any stop
    }
  }
  geo::KdTree tree(std::move(entries));

  StopAlignment out;
  out.trip.trip_id = trip.trip_id;
  out.trip.times.reserve(anchors.size());
  out.deviations.reserve(anchors.size());
  for (const auto& anchor : anchors.anchors) {
    const auto hit = tree.nearest(geo::project(origin, *anchor.position));
    if (!hit) return RejectReason::kDegenerateAlignment;
    const auto& point = trip.points[hit->id];
    out.trip.times.push_back(point.t);
    out.deviations.push_back(geo::haversine(*anchor.position, point.position));
    tree.retire_before(hit->id);
  }

  const double base = out.trip.times.front();
  for (auto& t : out.trip.times) t -= base;
  if (!strictly_increasing(out.trip.times)) return RejectReason::kDegenerateAlignment;
  out.trip.departure_epoch = trip.departure_epoch + base;
  out.trip.departure_time_of_day = std::fmod(trip.departure_time_of_day + base, 86400.0);
  return out;
}

inline Outcome<AlignedTrip> align_distance_based(const SegmentedTrip& trip,
                                                 const AnchorSet& anchors) {
  if (anchors.scheme != Scheme::kDistanceBased)
    throw Error(ErrorCode::kInvalidArgument, "distance-based alignment needs distance anchors");
  const auto& pts = trip.points;
  if (pts.empty() || anchors.anchors.empty()) return RejectReason::kInsufficientCoverage;
  if (pts.back().d < anchors.anchors.back().cumulative_distance)
    return RejectReason::kInsufficientCoverage;

  AlignedTrip out;
  out.trip_id = trip.trip_id;
  out.departure_epoch = trip.departure_epoch;
  out.departure_time_of_day = trip.departure_time_of_day;
  out.times.reserve(anchors.size());
  std::size_t j = 0;
  for (const auto& anchor : anchors.anchors) {
    const double x = anchor.cumulative_distance;
    while (j < pts.size() && pts[j].d < x) ++j;
    if (j == pts.size()) return RejectReason::kInsufficientCoverage;
    if (pts[j].d == x || j == 0) {
      out.times.push_back(pts[j].t);
    } else {
      const auto& a = pts[j - 1];
      const auto& b = pts[j];
      out.times.push_back(a.t + (b.t - a.t) * (x - a.d) / (b.d - a.d));
    }
  }
  if (out.times.front() != 0.0 || !strictly_increasing(out.times))
    return RejectReason::kDegenerateAlignment;
  return out;
}

/// Mean, population standard deviation and linearly interpolated
/// percentiles (rank = p/100 * (n - 1)).
inline DeviationStats deviation_stats(std::span<const double> deviations) {
  if (deviations.empty()) throw Error(ErrorCode::kEmptyInput, "no deviations to summarise");
  std::vector<double> sorted(deviations.begin(), deviations.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());

  DeviationStats s;
  s.count = sorted.size();
  double sum = 0.0;
  for (double v : sorted) sum += v;
  s.mean = sum / n;
  double sq = 0.0;
  for (double v : sorted) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / n);

  auto percentile = [&](double p) {
    const double rank = p / 100.0 * (n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
  };
  s.p1 = percentile(1);
  s.p25 = percentile(25);
  s.p50 = percentile(50);
  s.p75 = percentile(75);
  s.p99 = percentile(99);
  return s;
}

}  // namespace alignment
}  // namespace bustime
