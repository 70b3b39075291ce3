#pragma once

// GTFS schedule and raw GPS feed parsing.
//
// GPS rows follow the public Dublin bus layout (15 columns, no header):
//
//   timestamp_us, line_id, direction, journey_pattern, timeframe,
//   vehicle_journey_id, operator, congestion, lon, lat, delay, block,
//   vehicle_id, stop_id, at_stop
//
// Only timestamp, line, journey, coordinates and vehicle are retained.
// A header row is accepted and detected by a non-numeric first field.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bustime/csv.hpp"
#include "bustime/error.hpp"
#include "bustime/geo.hpp"

namespace bustime {

enum class Direction { kOutbound, kInbound };

constexpr std::string_view to_string(Direction d) {
  return d == Direction::kOutbound ? "outbound" : "inbound";
}

inline std::optional<Direction> parse_direction(std::string_view s) {
  if (s == "outbound" || s == "0") return Direction::kOutbound;
  if (s == "inbound" || s == "1") return Direction::kInbound;
  return std::nullopt;
}

struct GpsRecord {
  double timestamp = 0.0;  // unix seconds
  std::string line_id;
  std::string vehicle_id;
  std::string vehicle_journey_id;
  geo::GeoPoint position;

  friend bool operator==(const GpsRecord&, const GpsRecord&) = default;
};

struct RouteStop {
  std::string stop_id;
  geo::GeoPoint position;
  double cumulative_distance = 0.0;  // meters from the first stop
};

struct RouteDefinition {
  std::string route_id;
  Direction direction = Direction::kOutbound;
  std::vector<RouteStop> stops;
  double scheduled_duration = 0.0;  // seconds
  double total_length = 0.0;        // meters

  const RouteStop& first_stop() const { return stops.front(); }
  const RouteStop& last_stop() const { return stops.back(); }
};

/// Records sharing one (vehicle_id, vehicle_journey_id), time-sorted.
struct RawJourney {
  std::string vehicle_id;
  std::string vehicle_journey_id;
  std::vector<GpsRecord> records;
};

struct GpsParseResult {
  std::vector<GpsRecord> records;
  std::size_t rows = 0;     // data rows seen (header excluded)
  std::size_t dropped = 0;  // rows rejected as malformed or implausible
};

namespace ingest {

/// Timestamps before 2000-01-01T00:00:00Z are treated as sensor garbage.
inline constexpr double kMinPlausibleEpoch = 946'684'800.0;

namespace detail {

inline std::optional<double> parse_gtfs_time(std::string_view s) {
  s = csv::trim(s);
  if (s.empty()) return std::nullopt;
  int parts[3] = {0, 0, 0};
  int idx = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == ':') {
      if (idx >= 3) return std::nullopt;
      auto v = csv::parse_int(s.substr(start, i - start));
      if (!v || *v < 0) return std::nullopt;
      parts[idx++] = static_cast<int>(*v);
      start = i + 1;
    }
  }
  if (idx != 3 || parts[1] >= 60 || parts[2] >= 60) return std::nullopt;
  return parts[0] * 3600.0 + parts[1] * 60.0 + parts[2];
}

[[noreturn]] inline void malformed(const csv::Table& t, std::size_t row, const std::string& what) {
  throw Error(ErrorCode::kMalformedRow,
              t.path.string() + ":" + std::to_string(t.line_numbers[row]) + ": " + what);
}

inline const std::string& field(const csv::Table& t, std::size_t row, std::size_t col) {
  if (col >= t.rows[row].size()) malformed(t, row, "too few fields");
  return t.rows[row][col];
}

inline std::string quote_if_needed(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

struct StopTime {
  std::size_t row;  // index into the stop_times table
  long long sequence;
  std::string stop_id;
  std::optional<double> arrival;
  std::optional<double> departure;
  std::optional<double> shape_dist;
};

/// Distance of each stop along a shape polyline, searching forward only.
inline std::optional<std::vector<double>> distances_along_shape(
    std::span<const geo::GeoPoint> shape, std::span<const geo::GeoPoint> stops) {
  if (shape.size() < 2) return std::nullopt;
  try {
    const geo::GeoPoint origin = shape.front();
    std::vector<geo::PlanarPoint> pts;
    pts.reserve(shape.size());
    for (const auto& p : shape) pts.push_back(geo::project(origin, p));
    std::vector<double> cum(shape.size(), 0.0);
    for (std::size_t i = 1; i < shape.size(); ++i)
      cum[i] = cum[i - 1] + geo::haversine(shape[i - 1], shape[i]);

    std::vector<double> out;
    std::size_t seg_from = 0;
    double last = -1.0;
    for (const auto& stop : stops) {
      const geo::PlanarPoint q = geo::project(origin, stop);
      double best_d2 = std::numeric_limits<double>::infinity();
      double best_along = 0.0;
      std::size_t best_seg = seg_from;
      for (std::size_t s = seg_from; s + 1 < pts.size(); ++s) {
        const double vx = pts[s + 1].x - pts[s].x;
        const double vy = pts[s + 1].y - pts[s].y;
        const double len2 = vx * vx + vy * vy;
        double frac = 0.0;
        if (len2 > 0.0)
          frac = std::clamp(((q.x - pts[s].x) * vx + (q.y - pts[s].y) * vy) / len2, 0.0, 1.0);
        const geo::PlanarPoint foot{pts[s].x + frac * vx, pts[s].y + frac * vy};
        const double d2 = geo::squared_distance(q, foot);
        const double along = cum[s] + frac * (cum[s + 1] - cum[s]);
        if (d2 < best_d2 && along >= last) {
          best_d2 = d2;
          best_along = along;
          best_seg = s;
        }
      }
      out.push_back(best_along);
      last = best_along;
      seg_from = best_seg;
    }
    return out;
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Reads routes, trips, stops, stop_times and (optionally) shapes from a
/// GTFS directory. One RouteDefinition is produced per (route, direction),
/// taken from that pair's trip with the most stops.
///
/// Stop distances come from stop_times.shape_dist_traveled when every stop
/// carries one, else from the trip's shape polyline, else from chaining
/// haversine between consecutive stops.
inline std::vector<RouteDefinition> parse_gtfs(const std::filesystem::path& dir) {
  for (const char* name : {"routes.txt", "trips.txt", "stops.txt", "stop_times.txt"}) {
    if (!std::filesystem::exists(dir / name))
      throw Error(ErrorCode::kMissingFile, (dir / name).string() + " not found");
  }
  const csv::Table routes = csv::read_table(dir / "routes.txt");
  const csv::Table trips = csv::read_table(dir / "trips.txt");
  const csv::Table stops = csv::read_table(dir / "stops.txt");
  const csv::Table stop_times = csv::read_table(dir / "stop_times.txt");

  std::vector<std::string> route_order;
  std::set<std::string> route_ids;
  {
    const std::size_t c_id = routes.require_column("route_id");
    for (std::size_t r = 0; r < routes.rows.size(); ++r) {
      const auto& id = detail::field(routes, r, c_id);
      if (route_ids.insert(id).second) route_order.push_back(id);
    }
  }

  std::unordered_map<std::string, geo::GeoPoint> stop_pos;
  {
    const std::size_t c_id = stops.require_column("stop_id");
    const std::size_t c_lat = stops.require_column("stop_lat");
    const std::size_t c_lon = stops.require_column("stop_lon");
    for (std::size_t r = 0; r < stops.rows.size(); ++r) {
      auto lat = csv::parse_double(detail::field(stops, r, c_lat));
      auto lon = csv::parse_double(detail::field(stops, r, c_lon));
      if (!lat || !lon || !geo::is_valid({*lat, *lon}))
        detail::malformed(stops, r, "invalid stop coordinates");
      stop_pos[detail::field(stops, r, c_id)] = {*lat, *lon};
    }
  }

  struct TripInfo {
    std::string trip_id, route_id, shape_id;
    Direction direction;
  };
  std::vector<TripInfo> trip_list;
  {
    const std::size_t c_route = trips.require_column("route_id");
    const std::size_t c_trip = trips.require_column("trip_id");
    const auto c_dir = trips.column("direction_id");
    const auto c_shape = trips.column("shape_id");
    for (std::size_t r = 0; r < trips.rows.size(); ++r) {
      TripInfo info;
      info.route_id = detail::field(trips, r, c_route);
      info.trip_id = detail::field(trips, r, c_trip);
      if (!route_ids.contains(info.route_id))
        detail::malformed(trips, r, "unknown route_id '" + info.route_id + "'");
      info.direction = Direction::kOutbound;
      if (c_dir && *c_dir < trips.rows[r].size() && !trips.rows[r][*c_dir].empty()) {
        auto d = parse_direction(trips.rows[r][*c_dir]);
        if (!d) detail::malformed(trips, r, "invalid direction_id");
        info.direction = *d;
      }
      if (c_shape && *c_shape < trips.rows[r].size()) info.shape_id = trips.rows[r][*c_shape];
      trip_list.push_back(std::move(info));
    }
  }

  std::unordered_map<std::string, std::vector<detail::StopTime>> times_by_trip;
  {
    const std::size_t c_trip = stop_times.require_column("trip_id");
    const std::size_t c_stop = stop_times.require_column("stop_id");
    const std::size_t c_seq = stop_times.require_column("stop_sequence");
    const auto c_arr = stop_times.column("arrival_time");
    const auto c_dep = stop_times.column("departure_time");
    const auto c_dist = stop_times.column("shape_dist_traveled");
    auto optional_field = [&](std::size_t r, std::optional<std::size_t> c) -> std::string_view {
      if (!c || *c >= stop_times.rows[r].size()) return {};
      return stop_times.rows[r][*c];
    };
    for (std::size_t r = 0; r < stop_times.rows.size(); ++r) {
      detail::StopTime st;
      st.row = r;
      auto seq = csv::parse_int(detail::field(stop_times, r, c_seq));
      if (!seq) detail::malformed(stop_times, r, "invalid stop_sequence");
      st.sequence = *seq;
      st.stop_id = detail::field(stop_times, r, c_stop);
      if (!stop_pos.contains(st.stop_id))
        detail::malformed(stop_times, r, "unknown stop_id '" + st.stop_id + "'");
      for (auto [col, target] : {std::pair{c_arr, &st.arrival}, std::pair{c_dep, &st.departure}}) {
        auto text = optional_field(r, col);
        if (csv::trim(text).empty()) continue;
        *target = detail::parse_gtfs_time(text);
        if (!*target) detail::malformed(stop_times, r, "invalid time '" + std::string(text) + "'");
      }
      if (auto text = optional_field(r, c_dist); !csv::trim(text).empty()) {
        st.shape_dist = csv::parse_double(text);
        if (!st.shape_dist) detail::malformed(stop_times, r, "invalid shape_dist_traveled");
      }
      times_by_trip[detail::field(stop_times, r, c_trip)].push_back(std::move(st));
    }
    for (auto& [_, v] : times_by_trip)
      std::stable_sort(v.begin(), v.end(),
                       [](const auto& a, const auto& b) { return a.sequence < b.sequence; });
  }

  std::unordered_map<std::string, std::vector<geo::GeoPoint>> shapes;
  if (std::filesystem::exists(dir / "shapes.txt")) {
    const csv::Table table = csv::read_table(dir / "shapes.txt");
    const std::size_t c_id = table.require_column("shape_id");
    const std::size_t c_lat = table.require_column("shape_pt_lat");
    const std::size_t c_lon = table.require_column("shape_pt_lon");
    const std::size_t c_seq = table.require_column("shape_pt_sequence");
    std::unordered_map<std::string, std::vector<std::pair<long long, geo::GeoPoint>>> raw;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      auto lat = csv::parse_double(detail::field(table, r, c_lat));
      auto lon = csv::parse_double(detail::field(table, r, c_lon));
      auto seq = csv::parse_int(detail::field(table, r, c_seq));
      if (!lat || !lon || !seq || !geo::is_valid({*lat, *lon}))
        detail::malformed(table, r, "invalid shape point");
      raw[detail::field(table, r, c_id)].emplace_back(*seq, geo::GeoPoint{*lat, *lon});
    }
    for (auto& [id, pts] : raw) {
      std::stable_sort(pts.begin(), pts.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      auto& out = shapes[id];
      for (const auto& p : pts) out.push_back(p.second);
    }
  }

  std::vector<RouteDefinition> result;
  for (const auto& route_id : route_order) {
    for (Direction dir_value : {Direction::kOutbound, Direction::kInbound}) {
      const TripInfo* chosen = nullptr;
      std::size_t chosen_count = 0;
      bool any_trip = false;
      for (const auto& trip : trip_list) {
        if (trip.route_id != route_id || trip.direction != dir_value) continue;
        any_trip = true;
        auto it = times_by_trip.find(trip.trip_id);
        const std::size_t count = it == times_by_trip.end() ? 0 : it->second.size();
        if (count > chosen_count) {
          chosen = &trip;
          chosen_count = count;
        }
      }
      if (!any_trip) continue;
      if (chosen == nullptr || chosen_count < 2) {
        throw Error(ErrorCode::kRouteWithoutStops,
                    "route '" + route_id + "' (" + std::string(to_string(dir_value)) +
                        ") has no trip with at least 2 stops in " +
                        (dir / "stop_times.txt").string());
      }

      const auto& times = times_by_trip.at(chosen->trip_id);
      RouteDefinition def;
      def.route_id = route_id;
      def.direction = dir_value;
      std::vector<geo::GeoPoint> positions;
      for (const auto& st : times) positions.push_back(stop_pos.at(st.stop_id));

      std::vector<double> dist(times.size(), 0.0);
      const bool all_shape_dist =
          std::all_of(times.begin(), times.end(), [](const auto& st) { return st.shape_dist.has_value(); });
      std::optional<std::vector<double>> along;
      if (!all_shape_dist && shapes.contains(chosen->shape_id))
        along = detail::distances_along_shape(shapes.at(chosen->shape_id), positions);
      for (std::size_t i = 0; i < times.size(); ++i) {
        if (all_shape_dist) {
          dist[i] = *times[i].shape_dist - *times[0].shape_dist;
        } else if (along) {
          dist[i] = (*along)[i] - (*along)[0];
        } else if (i > 0) {
          dist[i] = dist[i - 1] + geo::haversine(positions[i - 1], positions[i]);
        }
        if (i > 0 && !(dist[i] > dist[i - 1]))
          detail::malformed(stop_times, times[i].row,
                            "stop distances not strictly increasing on trip '" +
                                chosen->trip_id + "'");
      }

      for (std::size_t i = 0; i < times.size(); ++i)
        def.stops.push_back({times[i].stop_id, positions[i], dist[i]});
      def.total_length = dist.back();
      const auto start = times.front().departure ? times.front().departure : times.front().arrival;
      const auto end = times.back().arrival ? times.back().arrival : times.back().departure;
      def.scheduled_duration = (start && end && *end > *start) ? *end - *start : 0.0;
      result.push_back(std::move(def));
    }
  }
  return result;
}

/// Parses one GPS feed file. Malformed or implausible rows are counted in
/// `dropped`; the output is ordered by timestamp (file order on ties).
inline GpsParseResult parse_gps(const std::filesystem::path& path) {
  GpsParseResult out;
  const auto lines = csv::read_lines(path, ErrorCode::kUnreadableFile);
  bool first = true;
  for (const auto& line : lines) {
    if (csv::trim(line).empty()) continue;
    const auto fields = csv::split_line(line);
    if (first) {
      first = false;
      if (!csv::parse_double(fields[0])) continue;  // header
    }
    ++out.rows;
    if (fields.size() < 13) {
      ++out.dropped;
      continue;
    }
    const auto ts_us = csv::parse_int(fields[0]);
    std::optional<double> ts;
    if (ts_us) ts = static_cast<double>(*ts_us) / 1e6;
    else if (auto d = csv::parse_double(fields[0])) ts = *d / 1e6;
    const auto lon = csv::parse_double(fields[8]);
    const auto lat = csv::parse_double(fields[9]);
    if (!ts || *ts < kMinPlausibleEpoch || !lat || !lon || !geo::is_valid({*lat, *lon}) ||
        (*lat == 0.0 && *lon == 0.0)) {
      ++out.dropped;
      continue;
    }
    GpsRecord rec;
    rec.timestamp = *ts;
    rec.line_id = std::string(csv::trim(fields[1]));
    rec.vehicle_journey_id = std::string(csv::trim(fields[5]));
    rec.vehicle_id = std::string(csv::trim(fields[12]));
    rec.position = {*lat, *lon};
    out.records.push_back(std::move(rec));
  }
  std::stable_sort(out.records.begin(), out.records.end(),
                   [](const GpsRecord& a, const GpsRecord& b) { return a.timestamp < b.timestamp; });
  return out;
}

/// Writes records in the 15-column feed layout read by `parse_gps`.
inline void emit_gps(const std::filesystem::path& path, std::span<const GpsRecord> records,
                     bool header = false) {
  auto out = csv::open_for_write(path);
  if (header)
    out << "timestamp_us,line_id,direction,journey_pattern,timeframe,vehicle_journey_id,"
           "operator,congestion,lon,lat,delay,block,vehicle_id,stop_id,at_stop\n";
  for (const auto& r : records) {
    out << std::llround(r.timestamp * 1e6) << ',' << detail::quote_if_needed(r.line_id)
        << ",0,null,null," << detail::quote_if_needed(r.vehicle_journey_id) << ",SY,0,"
        << csv::format_double(r.position.lon) << ',' << csv::format_double(r.position.lat)
        << ",0,0," << detail::quote_if_needed(r.vehicle_id) << ",null,0\n";
  }
  if (!out) throw Error(ErrorCode::kUnwritableDirectory, "write failure on " + path.string());
}

/// Partitions records by (vehicle_id, vehicle_journey_id). Each journey is
/// time-sorted; journeys are ordered by their first timestamp.
inline std::vector<RawJourney> group_journeys(std::span<const GpsRecord> records) {
  std::map<std::pair<std::string, std::string>, std::vector<GpsRecord>> groups;
  for (const auto& r : records) groups[{r.vehicle_id, r.vehicle_journey_id}].push_back(r);
  std::vector<RawJourney> out;
  out.reserve(groups.size());
  for (auto& [key, recs] : groups) {
    std::stable_sort(recs.begin(), recs.end(),
                     [](const GpsRecord& a, const GpsRecord& b) { return a.timestamp < b.timestamp; });
    out.push_back({key.first, key.second, std::move(recs)});
  }
  std::stable_sort(out.begin(), out.end(), [](const RawJourney& a, const RawJourney& b) {
    return a.records.front().timestamp < b.records.front().timestamp;
  });
  return out;
}

namespace detail {
inline std::string format_gtfs_time(double seconds) {
  const long long s = std::llround(seconds);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%02lld:%02lld:%02lld", s / 3600, (s / 60) % 60, s % 60);
  return buf;
}
}  // namespace detail

/// Writes a minimal GTFS directory (one trip per route definition) that
/// `parse_gtfs` reads back into the same definitions. Scheduled stop times
/// are spread in proportion to distance, starting at `service_start`.
inline void write_gtfs(const std::filesystem::path& dir, std::span<const RouteDefinition> routes,
                       double service_start = 6 * 3600.0) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kUnwritableDirectory, "cannot create " + dir.string());

  auto r_out = csv::open_for_write(dir / "routes.txt");
  auto t_out = csv::open_for_write(dir / "trips.txt");
  auto s_out = csv::open_for_write(dir / "stops.txt");
  auto st_out = csv::open_for_write(dir / "stop_times.txt");
  auto sh_out = csv::open_for_write(dir / "shapes.txt");
  r_out << "route_id,route_short_name,route_type\n";
  t_out << "route_id,service_id,trip_id,direction_id,shape_id\n";
  s_out << "stop_id,stop_name,stop_lat,stop_lon\n";
  st_out << "trip_id,arrival_time,departure_time,stop_id,stop_sequence,shape_dist_traveled\n";
  sh_out << "shape_id,shape_pt_lat,shape_pt_lon,shape_pt_sequence,shape_dist_traveled\n";

  std::set<std::string> written_routes, written_stops;
  for (const auto& def : routes) {
    if (written_routes.insert(def.route_id).second)
      r_out << def.route_id << ',' << def.route_id << ",3\n";
    const std::string suffix = def.direction == Direction::kOutbound ? "_0" : "_1";
    const std::string trip_id = def.route_id + suffix;
    const std::string shape_id = "shape_" + def.route_id + suffix;
    t_out << def.route_id << ",all," << trip_id << ','
          << (def.direction == Direction::kOutbound ? 0 : 1) << ',' << shape_id << '\n';
    for (std::size_t i = 0; i < def.stops.size(); ++i) {
      const auto& stop = def.stops[i];
      if (written_stops.insert(stop.stop_id).second)
        s_out << stop.stop_id << ",stop " << stop.stop_id << ','
              << csv::format_double(stop.position.lat) << ','
              << csv::format_double(stop.position.lon) << '\n';
      const double frac = def.total_length > 0 ? stop.cumulative_distance / def.total_length : 0.0;
      const std::string when = detail::format_gtfs_time(service_start + frac * def.scheduled_duration);
      st_out << trip_id << ',' << when << ',' << when << ',' << stop.stop_id << ',' << (i + 1)
             << ',' << csv::format_double(stop.cumulative_distance) << '\n';
      sh_out << shape_id << ',' << csv::format_double(stop.position.lat) << ','
             << csv::format_double(stop.position.lon) << ',' << (i + 1) << ','
             << csv::format_double(stop.cumulative_distance) << '\n';
    }
  }
}

}  // namespace ingest
}  // namespace bustime
