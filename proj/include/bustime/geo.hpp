#pragma once

// Geographic primitives and a 2-d kd-tree with point retirement.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bustime/error.hpp"

namespace bustime::geo {

inline constexpr double kEarthRadiusM = 6'371'000.0;
inline constexpr double kDegToRad = std::numbers::pi / 180.0;

/// WGS84 degrees.
struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

inline bool is_valid(GeoPoint p) {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 &&
         p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
}

/// Meters east (x) and north (y) of a projection origin.
struct PlanarPoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const PlanarPoint&, const PlanarPoint&) = default;
};

inline double squared_distance(PlanarPoint a, PlanarPoint b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

/// Great-circle distance in meters on a sphere of mean Earth radius.
inline double haversine(GeoPoint a, GeoPoint b) {
  const double dlat = (b.lat - a.lat) * kDegToRad;
  const double dlon = (b.lon - a.lon) * kDegToRad;
  const double s_lat = std::sin(dlat / 2.0);
  const double s_lon = std::sin(dlon / 2.0);
  const double h = s_lat * s_lat + std::cos(a.lat * kDegToRad) *
                                       std::cos(b.lat * kDegToRad) * s_lon * s_lon;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

/// Equirectangular projection around `origin`. Valid for city-scale
/// extents only: both coordinate differences must stay under one degree.
inline PlanarPoint project(GeoPoint origin, GeoPoint p) {
  const double dlat = p.lat - origin.lat;
  const double dlon = p.lon - origin.lon;
  if (!(std::abs(dlat) < 1.0) || !(std::abs(dlon) < 1.0)) {
    throw Error(ErrorCode::kOutOfProjectionRange,
                "point (" + std::to_string(p.lat) + ", " + std::to_string(p.lon) +
                    ") is more than 1 degree from projection origin (" +
                    std::to_string(origin.lat) + ", " + std::to_string(origin.lon) + ")");
  }
  return {dlon * std::cos(origin.lat * kDegToRad) * kEarthRadiusM * kDegToRad,
          dlat * kEarthRadiusM * kDegToRad};
}

/// Inverse of `project`.
inline GeoPoint unproject(GeoPoint origin, PlanarPoint p) {
  return {origin.lat + p.y / (kEarthRadiusM * kDegToRad),
          origin.lon + p.x / (std::cos(origin.lat * kDegToRad) * kEarthRadiusM * kDegToRad)};
}

/// Point reached by travelling `distance_m` from `start` along the great
/// circle with initial bearing `bearing_rad` (clockwise from north).
inline GeoPoint destination(GeoPoint start, double bearing_rad, double distance_m) {
  const double delta = distance_m / kEarthRadiusM;
  const double lat1 = start.lat * kDegToRad;
  const double lon1 = start.lon * kDegToRad;
  const double lat2 = std::asin(std::sin(lat1) * std::cos(delta) +
                                std::cos(lat1) * std::sin(delta) * std::cos(bearing_rad));
  const double lon2 =
      lon1 + std::atan2(std::sin(bearing_rad) * std::sin(delta) * std::cos(lat1),
                        std::cos(delta) - std::sin(lat1) * std::sin(lat2));
  return {lat2 / kDegToRad, lon2 / kDegToRad};
}

/// Result of a nearest-point query.
struct Neighbor {
  std::size_t id = 0;
  double distance = 0.0;  // meters
};

/// Balanced 2-d tree (median split, alternating axes) over planar points
/// that carry a payload id. Points are never physically removed: retired
/// ids are skipped during search and fully retired subtrees are pruned.
///
/// Ties in distance resolve to the lowest payload id, so results match a
/// linear scan exactly.
class KdTree {
 public:
  struct Entry {
    PlanarPoint point;
    std::size_t id = 0;
  };

  KdTree() = default;

  explicit KdTree(std::vector<Entry> entries) {
    nodes_.reserve(entries.size());
    for (const auto& e : entries) nodes_.push_back({e.point, e.id, 0, false});
    build(0, nodes_.size(), 0);

    by_id_.reserve(nodes_.size());
    for (std::size_t pos = 0; pos < nodes_.size(); ++pos)
      by_id_.emplace_back(nodes_[pos].id, pos);
    std::sort(by_id_.begin(), by_id_.end());
    alive_ = nodes_.size();
  }

  std::size_t size() const { return nodes_.size(); }
  std::size_t alive() const { return alive_; }
  bool empty() const { return alive_ == 0; }

  /// Nearest non-retired point to `q`, or nullopt when none is left.
  std::optional<Neighbor> nearest(PlanarPoint q) const {
    if (alive_ == 0) return std::nullopt;
    Best best;
    search(q, 0, nodes_.size(), 0, best);
    return Neighbor{nodes_[best.pos].id, std::sqrt(best.d2)};
  }

  /// Retires every point carrying payload `id`.
  void retire(std::size_t id) {
    auto it = std::lower_bound(by_id_.begin(), by_id_.end(),
                               std::pair<std::size_t, std::size_t>{id, 0});
    for (; it != by_id_.end() && it->first == id; ++it) retire_position(it->second);
  }

  /// Retires every point whose payload id is <= `id`. Idempotent.
  void retire_before(std::size_t id) {
    while (cursor_ < by_id_.size() && by_id_[cursor_].first <= id) {
      retire_position(by_id_[cursor_].second);
      ++cursor_;
    }
  }

  bool is_retired(std::size_t id) const {
    auto it = std::lower_bound(by_id_.begin(), by_id_.end(),
                               std::pair<std::size_t, std::size_t>{id, 0});
    return it == by_id_.end() || it->first != id || nodes_[it->second].retired;
  }

 private:
  struct Node {
    PlanarPoint p;
    std::size_t id;
    std::uint32_t alive_below;  // non-retired points in this node's subtree
    bool retired;
  };

  struct Best {
    double d2 = std::numeric_limits<double>::infinity();
    std::size_t id = std::numeric_limits<std::size_t>::max();
    std::size_t pos = 0;
  };

  static double coord(const PlanarPoint& p, int axis) { return axis == 0 ? p.x : p.y; }
  static std::size_t middle(std::size_t lo, std::size_t hi) { return lo + (hi - lo) / 2; }

  void build(std::size_t lo, std::size_t hi, int depth) {
    if (lo >= hi) return;
    const int axis = depth % 2;
    const std::size_t mid = middle(lo, hi);
    std::nth_element(nodes_.begin() + static_cast<std::ptrdiff_t>(lo),
                     nodes_.begin() + static_cast<std::ptrdiff_t>(mid),
                     nodes_.begin() + static_cast<std::ptrdiff_t>(hi),
                     [axis](const Node& a, const Node& b) {
                       const double ca = coord(a.p, axis);
                       const double cb = coord(b.p, axis);
                       return ca < cb || (ca == cb && a.id < b.id);
                     });
    nodes_[mid].alive_below = static_cast<std::uint32_t>(hi - lo);
    build(lo, mid, depth + 1);
    build(mid + 1, hi, depth + 1);
  }

  void retire_position(std::size_t pos) {
    if (nodes_[pos].retired) return;
    std::size_t lo = 0;
    std::size_t hi = nodes_.size();
    while (lo < hi) {
      const std::size_t mid = middle(lo, hi);
      --nodes_[mid].alive_below;
      if (pos == mid) break;
      if (pos < mid) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    nodes_[pos].retired = true;
    --alive_;
  }

  void search(PlanarPoint q, std::size_t lo, std::size_t hi, int depth, Best& best) const {
    if (lo >= hi) return;
    const std::size_t mid = middle(lo, hi);
    const Node& node = nodes_[mid];
    if (node.alive_below == 0) return;

    if (!node.retired) {
      const double d2 = squared_distance(q, node.p);
      if (d2 < best.d2 || (d2 == best.d2 && node.id < best.id)) best = {d2, node.id, mid};
    }

    const int axis = depth % 2;
    const double diff = coord(q, axis) - coord(node.p, axis);
    const bool left_first = diff < 0.0;
    if (left_first) {
      search(q, lo, mid, depth + 1, best);
      if (diff * diff <= best.d2) search(q, mid + 1, hi, depth + 1, best);
    } else {
      search(q, mid + 1, hi, depth + 1, best);
      if (diff * diff <= best.d2) search(q, lo, mid, depth + 1, best);
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<std::size_t, std::size_t>> by_id_;  // (id, position)
  std::size_t cursor_ = 0;
  std::size_t alive_ = 0;
};

}  // namespace bustime::geo
