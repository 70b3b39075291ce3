#pragma once

// File formats exchanged between pipeline stages, and the in-memory chain
// from raw GPS to aligned corpora used by `bench`.
//
//   trips.csv           trip_id,seq,t_i,d_i,lat,lon       one row per point
//   trips_meta.csv      trip_id,route_id,direction,departure_epoch,departure_time_of_day
//   rejects.csv         reason,count
//   aligned_<s>.csv     trip_id,departure_epoch,departure_time_of_day,t_0..t_{n-1}
//   anchors_<s>.csv     anchor_id,cumulative_distance,lat,lon
//   deviation_stats.csv mean,std,p1,p25,p50,p75,p99,count

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "bustime/alignment.hpp"
#include "bustime/csv.hpp"
#include "bustime/ingest.hpp"
#include "bustime/models.hpp"
#include "bustime/segmentation.hpp"

namespace bustime::pipeline {

namespace detail {

inline std::string where(const csv::Table& t, std::size_t row) {
  return t.path.string() + ":" + std::to_string(t.line_numbers[row]);
}

inline double number(const csv::Table& t, std::size_t row, std::size_t col) {
  const auto& fields = t.rows[row];
  if (col >= fields.size())
    throw Error(ErrorCode::kMalformedRow, where(t, row) + ": missing column '" + t.header[col] + "'");
  const auto v = csv::parse_double(fields[col]);
  if (!v)
    throw Error(ErrorCode::kMalformedRow,
                where(t, row) + ": column '" + t.header[col] + "' is not a number: '" + fields[col] + "'");
  return *v;
}

inline const std::string& text(const csv::Table& t, std::size_t row, std::size_t col) {
  if (col >= t.rows[row].size())
    throw Error(ErrorCode::kMalformedRow, where(t, row) + ": missing column '" + t.header[col] + "'");
  return t.rows[row][col];
}

}  // namespace detail

/// Metadata sidecar lives next to the trips file: trips.csv -> trips_meta.csv.
inline std::filesystem::path meta_path(const std::filesystem::path& trips_path) {
  auto p = trips_path;
  p.replace_filename(trips_path.stem().string() + "_meta.csv");
  return p;
}

inline void write_trips(const std::filesystem::path& path, std::span<const SegmentedTrip> trips) {
  auto out = csv::open_for_write(path);
  auto meta = csv::open_for_write(meta_path(path));
  out << "trip_id,seq,t_i,d_i,lat,lon\n";
  meta << "trip_id,route_id,direction,departure_epoch,departure_time_of_day\n";
  for (const auto& trip : trips) {
    meta << trip.trip_id << ',' << trip.route_id << ',' << to_string(trip.direction) << ','
         << csv::format_double(trip.departure_epoch) << ',' << csv::format_double(trip.departure_time_of_day)
         << '\n';
    for (std::size_t i = 0; i < trip.points.size(); ++i) {
      const auto& p = trip.points[i];
      out << trip.trip_id << ',' << i << ',' << csv::format_double(p.t) << ',' << csv::format_double(p.d) << ','
          << csv::format_double(p.position.lat) << ',' << csv::format_double(p.position.lon) << '\n';
    }
  }
}

/// Reads a trips file and its sidecar back into trips, in sidecar order.
inline std::vector<SegmentedTrip> read_trips(const std::filesystem::path& path) {
  const auto pts = csv::read_table(path);
  const auto meta = csv::read_table(meta_path(path));

  std::vector<SegmentedTrip> trips;
  std::unordered_map<std::string, std::size_t> index;
  {
    const auto c_id = meta.require_column("trip_id");
    const auto c_route = meta.require_column("route_id");
    const auto c_dir = meta.require_column("direction");
    const auto c_epoch = meta.require_column("departure_epoch");
    const auto c_tod = meta.require_column("departure_time_of_day");
    for (std::size_t r = 0; r < meta.rows.size(); ++r) {
      SegmentedTrip t;
      t.trip_id = detail::text(meta, r, c_id);
      t.route_id = detail::text(meta, r, c_route);
      const auto dir = parse_direction(detail::text(meta, r, c_dir));
      if (!dir) throw Error(ErrorCode::kMalformedRow, detail::where(meta, r) + ": unknown direction");
      t.direction = *dir;
      t.departure_epoch = detail::number(meta, r, c_epoch);
      t.departure_time_of_day = detail::number(meta, r, c_tod);
      if (!index.emplace(t.trip_id, trips.size()).second)
        throw Error(ErrorCode::kMalformedRow, detail::where(meta, r) + ": duplicate trip '" + t.trip_id + "'");
      trips.push_back(std::move(t));
    }
  }

  const auto c_id = pts.require_column("trip_id");
  const auto c_seq = pts.require_column("seq");
  const auto c_t = pts.require_column("t_i");
  const auto c_d = pts.require_column("d_i");
  const auto c_lat = pts.require_column("lat");
  const auto c_lon = pts.require_column("lon");
  for (std::size_t r = 0; r < pts.rows.size(); ++r) {
    const auto& id = detail::text(pts, r, c_id);
    const auto it = index.find(id);
    if (it == index.end())
      throw Error(ErrorCode::kMalformedRow,
                  detail::where(pts, r) + ": trip '" + id + "' is missing from " + meta.path.string());
    auto& trip = trips[it->second];
    const double seq = detail::number(pts, r, c_seq);
    if (seq != static_cast<double>(trip.points.size()))
      throw Error(ErrorCode::kMalformedRow, detail::where(pts, r) + ": trip '" + id + "' points out of sequence");
    trip.points.push_back({detail::number(pts, r, c_t), detail::number(pts, r, c_d),
                           {detail::number(pts, r, c_lat), detail::number(pts, r, c_lon)}});
  }
  for (const auto& t : trips)
    if (t.points.empty())
      throw Error(ErrorCode::kMalformedRow, path.string() + ": trip '" + t.trip_id + "' has no points");
  return trips;
}

inline void write_reject_summary(const std::filesystem::path& path, const SegmentationResult& r) {
  auto out = csv::open_for_write(path);
  out << "reason,count\n";
  out << "Accepted," << r.trips.size() << '\n';
  for (auto reason : {RejectReason::kTooShort, RejectReason::kAmbiguousDirection, RejectReason::kEndpointTooFar,
                      RejectReason::kTooShortInTimeOrDistance}) {
    const auto it = r.tally.find(reason);
    out << to_string(reason) << ',' << (it == r.tally.end() ? 0 : it->second) << '\n';
  }
}

inline void write_aligned(const std::filesystem::path& path, std::span<const AlignedTrip> trips) {
  auto out = csv::open_for_write(path);
  const std::size_t n = trips.empty() ? 0 : trips.front().times.size();
  out << "trip_id,departure_epoch,departure_time_of_day";
  for (std::size_t i = 0; i < n; ++i) out << ",t_" << i;
  out << '\n';
  for (const auto& t : trips) {
    if (t.times.size() != n)
      throw Error(ErrorCode::kInvalidArgument, "trip '" + t.trip_id + "' has a different anchor count");
    out << t.trip_id << ',' << csv::format_double(t.departure_epoch) << ','
        << csv::format_double(t.departure_time_of_day);
    for (double v : t.times) out << ',' << csv::format_double(v);
    out << '\n';
  }
}

inline std::vector<AlignedTrip> read_aligned(const std::filesystem::path& path) {
  const auto table = csv::read_table(path);
  const auto c_id = table.require_column("trip_id");
  const auto c_epoch = table.require_column("departure_epoch");
  const auto c_tod = table.require_column("departure_time_of_day");
  std::vector<std::size_t> c_times;
  for (std::size_t i = 0;; ++i) {
    const auto c = table.column("t_" + std::to_string(i));
    if (!c) break;
    c_times.push_back(*c);
  }
  if (c_times.size() < 2)
    throw Error(ErrorCode::kMalformedRow, path.string() + ":1: expected columns t_0, t_1, ...");
  std::vector<AlignedTrip> trips;
  trips.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    AlignedTrip t;
    t.trip_id = detail::text(table, r, c_id);
    t.departure_epoch = detail::number(table, r, c_epoch);
    t.departure_time_of_day = detail::number(table, r, c_tod);
    for (auto c : c_times) t.times.push_back(detail::number(table, r, c));
    if (t.times.front() != 0.0 || !strictly_increasing(t.times))
      throw Error(ErrorCode::kMalformedRow, detail::where(table, r) + ": trip '" + t.trip_id +
                                                "' times must start at 0 and increase strictly");
    trips.push_back(std::move(t));
  }
  return trips;
}

inline void write_anchors(const std::filesystem::path& path, const AnchorSet& anchors) {
  auto out = csv::open_for_write(path);
  out << "anchor_id,cumulative_distance,lat,lon\n";
  for (const auto& a : anchors.anchors) {
    out << a.anchor_id << ',' << csv::format_double(a.cumulative_distance) << ',';
    if (a.position) out << csv::format_double(a.position->lat) << ',' << csv::format_double(a.position->lon);
    else out << ',';
    out << '\n';
  }
}

inline std::vector<double> read_anchor_distances(const std::filesystem::path& path) {
  const auto table = csv::read_table(path);
  const auto c = table.require_column("cumulative_distance");
  std::vector<double> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) out.push_back(detail::number(table, r, c));
  if (out.size() < 2 || !strictly_increasing(out))
    throw Error(ErrorCode::kMalformedRow, path.string() + ": need at least 2 strictly increasing anchor distances");
  return out;
}

inline void write_deviation_stats(const std::filesystem::path& path, const DeviationStats& s) {
  auto out = csv::open_for_write(path);
  out << "mean,std,p1,p25,p50,p75,p99,count\n";
  for (double v : {s.mean, s.std, s.p1, s.p25, s.p50, s.p75, s.p99}) out << csv::format_fixed(v, 2) << ',';
  out << s.count << '\n';
}

/// Both alignments of one direction's trips.
struct AlignmentRun {
  alignment::AnchorSets anchors;
  std::vector<AlignedTrip> stop_based;
  std::vector<AlignedTrip> distance_based;
  std::vector<double> deviations;  // every chosen stop point, all trips
  std::map<RejectReason, std::size_t> stop_rejects;
  std::map<RejectReason, std::size_t> distance_rejects;

  const std::vector<AlignedTrip>& trips(Scheme s) const {
    return s == Scheme::kStopBased ? stop_based : distance_based;
  }
  const AnchorSet& anchor_set(Scheme s) const {
    return s == Scheme::kStopBased ? anchors.stop_based : anchors.distance_based;
  }
};

/// Aligns every trip under both schemes. With `common_only`, a trip
/// rejected by either scheme is dropped from both so the two corpora hold
/// the same trips in the same (departure) order.
inline AlignmentRun align_all(std::span<const SegmentedTrip> trips, const RouteDefinition& route,
                              bool common_only = true) {
  AlignmentRun run;
  run.anchors = alignment::build_anchor_sets(route);
  std::vector<const SegmentedTrip*> sorted;
  for (const auto& t : trips) sorted.push_back(&t);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](auto* a, auto* b) { return a->departure_epoch < b->departure_epoch; });

  for (const auto* t : sorted) {
    auto s = alignment::align_stop_based(*t, run.anchors.stop_based);
    auto d = alignment::align_distance_based(*t, run.anchors.distance_based);
    if (!accepted(s)) ++run.stop_rejects[reason(s)];
    if (!accepted(d)) ++run.distance_rejects[reason(d)];
    if (common_only && !(accepted(s) && accepted(d))) continue;
    if (accepted(s)) {
      auto& sa = std::get<StopAlignment>(s);
      run.deviations.insert(run.deviations.end(), sa.deviations.begin(), sa.deviations.end());
      run.stop_based.push_back(std::move(sa.trip));
    }
    if (accepted(d)) run.distance_based.push_back(std::move(std::get<AlignedTrip>(d)));
  }
  return run;
}

/// Raw GPS plus route pair to aligned corpora for one direction.
struct Corpus {
  SegmentationResult segmentation;
  AlignmentRun alignment;
};

inline Corpus build_corpus(std::span<const GpsRecord> gps, const RoutePair& routes,
                           const SegmentationConfig& cfg, Direction direction = Direction::kOutbound) {
  Corpus corpus;
  const auto journeys = ingest::group_journeys(gps);
  corpus.segmentation = segmentation::segment_all(journeys, routes, cfg);
  std::vector<SegmentedTrip> chosen;
  for (const auto& t : corpus.segmentation.trips)
    if (t.direction == direction) chosen.push_back(t);
  corpus.alignment = align_all(chosen, routes.get(direction));
  return corpus;
}

inline TrainingSet training_set(std::vector<double> anchors, std::span<const AlignedTrip> trips) {
  TrainingSet ts;
  ts.anchor_distances = std::move(anchors);
  ts.trips.assign(trips.begin(), trips.end());
  return ts;
}

}  // namespace bustime::pipeline
