#include "bustime/geo.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

namespace {

using bustime::Error;
using bustime::ErrorCode;
using namespace bustime::geo;

constexpr GeoPoint kDublin{53.3498, -6.2603};

// Spherical law of cosines: an independent great-circle formula.
double law_of_cosines(GeoPoint a, GeoPoint b) {
  const double p1 = a.lat * kDegToRad, p2 = b.lat * kDegToRad;
  const double dl = (b.lon - a.lon) * kDegToRad;
  const double c = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(dl);
  return kEarthRadiusM * std::acos(std::clamp(c, -1.0, 1.0));
}

// Brute-force oracle: lowest (squared distance, id) among live points.
std::optional<std::size_t> linear_scan(const std::vector<KdTree::Entry>& pts,
                                       const std::vector<bool>& retired, PlanarPoint q) {
  std::optional<std::size_t> best;
  double best_d2 = 0;
  for (const auto& e : pts) {
    if (retired[e.id]) continue;
    const double d2 = squared_distance(q, e.point);
    if (!best || d2 < best_d2 || (d2 == best_d2 && e.id < *best)) {
      best = e.id;
      best_d2 = d2;
    }
  }
  return best;
}

std::vector<KdTree::Entry> random_points(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-5000.0, 5000.0);
  std::vector<KdTree::Entry> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back({{u(rng), u(rng)}, i});
  return pts;
}

TEST(Haversine, IdentityIsZero) { EXPECT_EQ(haversine(kDublin, kDublin), 0.0); }

TEST(Haversine, Symmetric) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lat(-80, 80), lon(-179, 179);
  for (int i = 0; i < 100; ++i) {
    const GeoPoint a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)};
    EXPECT_EQ(haversine(a, b), haversine(b, a));
    EXPECT_GE(haversine(a, b), 0.0);
  }
}

TEST(Haversine, MatchesLawOfCosines) {
  const GeoPoint north{53.3589, -6.2603};
  EXPECT_NEAR(haversine(kDublin, north), law_of_cosines(kDublin, north), 0.5);
  EXPECT_NEAR(haversine(kDublin, north), 1011.9, 1.0);
}

TEST(Project, OriginMapsToZero) {
  EXPECT_EQ(project(kDublin, kDublin), (PlanarPoint{0.0, 0.0}));
}

TEST(Project, PureNorthHasZeroX) {
  const auto p = project(kDublin, {kDublin.lat + 0.05, kDublin.lon});
  EXPECT_EQ(p.x, 0.0);
  EXPECT_GT(p.y, 0.0);
}

TEST(Project, RejectsPointsBeyondOneDegree) {
  try {
    project(kDublin, {kDublin.lat + 1.2, kDublin.lon});
    FAIL() << "expected OutOfProjectionRange";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOutOfProjectionRange);
  }
  EXPECT_THROW(project(kDublin, {kDublin.lat, kDublin.lon - 1.0}), Error);
}

TEST(Project, EuclideanAgreesWithHaversineAtCityScale) {
  // Pairs inside a 7 km x 13 km box around the projection origin.
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dlat(-0.03, 0.03), dlon(-0.05, 0.05);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const GeoPoint a{kDublin.lat + dlat(rng), kDublin.lon + dlon(rng)};
    const GeoPoint b{kDublin.lat + dlat(rng), kDublin.lon + dlon(rng)};
    const double h = haversine(a, b);
    if (h < 1.0) continue;
    const double e = std::sqrt(squared_distance(project(kDublin, a), project(kDublin, b)));
    worst = std::max(worst, std::abs(e - h) / h);
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Project, PairExtentUpToThirtyKilometres) {
  // Projection centred on the pair's first point; the partner up to 30 km
  // away. The cos(origin latitude) scale drifts by tan(lat) * dlat, which
  // at 53 degrees N reaches 0.12% for 30 km north-east offsets.
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> bearing(0, 2 * std::numbers::pi), dist(100, 30000);
  for (int i = 0; i < 1000; ++i) {
    const GeoPoint a = kDublin;
    const double d = dist(rng);
    const GeoPoint b = destination(a, bearing(rng), d);
    const double h = haversine(a, b);
    const auto pb = project(a, b);
    const double tolerance = d <= 20000 ? 1e-3 : 1.25e-3;
    EXPECT_NEAR(std::hypot(pb.x, pb.y), h, tolerance * h) << "extent " << d;
  }
}

TEST(Destination, TravelsRequestedDistance) {
  const GeoPoint b = destination(kDublin, 2.0, 19000.0);
  EXPECT_NEAR(haversine(kDublin, b), 19000.0, 1e-6);
}

TEST(Unproject, InvertsProject) {
  const GeoPoint p{53.31, -6.2};
  const GeoPoint back = unproject(kDublin, project(kDublin, p));
  EXPECT_NEAR(back.lat, p.lat, 1e-12);
  EXPECT_NEAR(back.lon, p.lon, 1e-12);
}

TEST(KdTree, ExactHitReturnsPointAtZeroDistance) {
  std::mt19937_64 rng(1);
  const auto pts = random_points(rng, 50);
  KdTree tree(pts);
  const auto hit = tree.nearest(pts[17].point);
  ASSERT_TRUE(hit);
  EXPECT_EQ(hit->id, 17u);
  EXPECT_EQ(hit->distance, 0.0);
}

TEST(KdTree, MatchesLinearScan) {
  std::mt19937_64 rng(2);
  const auto pts = random_points(rng, 1000);
  KdTree tree(pts);
  std::vector<bool> retired(pts.size(), false);
  std::uniform_real_distribution<double> u(-6000.0, 6000.0);
  for (int q = 0; q < 200; ++q) {
    const PlanarPoint query{u(rng), u(rng)};
    EXPECT_EQ(tree.nearest(query)->id, *linear_scan(pts, retired, query));
  }
}

TEST(KdTree, RetiringNearestYieldsSecondNearest) {
  std::mt19937_64 rng(3);
  const auto pts = random_points(rng, 1000);
  std::uniform_real_distribution<double> u(-5000.0, 5000.0);
  for (int q = 0; q < 50; ++q) {
    KdTree tree(pts);
    std::vector<bool> retired(pts.size(), false);
    const PlanarPoint query{u(rng), u(rng)};
    const std::size_t first = *linear_scan(pts, retired, query);
    tree.retire(first);
    retired[first] = true;
    EXPECT_EQ(tree.nearest(query)->id, *linear_scan(pts, retired, query));
  }
}

TEST(KdTree, RetireBeforeRestrictsToLaterIds) {
  std::mt19937_64 rng(4);
  const auto pts = random_points(rng, 300);
  KdTree tree(pts);
  std::vector<bool> retired(pts.size(), false);
  tree.retire_before(120);
  for (std::size_t i = 0; i <= 120; ++i) retired[i] = true;
  EXPECT_EQ(tree.alive(), 179u);
  std::uniform_real_distribution<double> u(-5000.0, 5000.0);
  for (int q = 0; q < 100; ++q) {
    const PlanarPoint query{u(rng), u(rng)};
    const auto hit = tree.nearest(query);
    EXPECT_GT(hit->id, 120u);
    EXPECT_EQ(hit->id, *linear_scan(pts, retired, query));
  }
}

TEST(KdTree, RetireBeforeLastIdExhaustsTree) {
  std::mt19937_64 rng(5);
  KdTree tree(random_points(rng, 40));
  tree.retire_before(39);
  EXPECT_TRUE(tree.empty());
  EXPECT_FALSE(tree.nearest({0, 0}).has_value());
  tree.retire_before(39);  // idempotent
  EXPECT_TRUE(tree.empty());
}

TEST(KdTree, RetiringIdZeroOnTwoPointsLeavesOne) {
  KdTree tree({{{0, 0}, 0}, {{10, 0}, 1}});
  tree.retire_before(0);
  EXPECT_EQ(tree.alive(), 1u);
  EXPECT_EQ(tree.nearest({0, 0})->id, 1u);
}

TEST(KdTree, TiesBreakTowardLowestId) {
  // Four points equidistant from the origin, inserted out of id order.
  KdTree tree({{{0, 5}, 9}, {{5, 0}, 3}, {{0, -5}, 4}, {{-5, 0}, 7}});
  EXPECT_EQ(tree.nearest({0, 0})->id, 3u);
  tree.retire(3);
  EXPECT_EQ(tree.nearest({0, 0})->id, 4u);
}

TEST(KdTree, DuplicateCoordinatesResolveById) {
  std::vector<KdTree::Entry> pts;
  for (std::size_t i = 0; i < 64; ++i) pts.push_back({{static_cast<double>(i % 4), 0.0}, 63 - i});
  KdTree tree(pts);
  std::vector<bool> retired(64, false);
  for (int round = 0; round < 64; ++round) {
    const auto expect = linear_scan(pts, retired, {1.2, 0.0});
    const auto got = tree.nearest({1.2, 0.0});
    ASSERT_EQ(got->id, *expect);
    tree.retire(got->id);
    retired[got->id] = true;
  }
  EXPECT_TRUE(tree.empty());
}

TEST(KdTree, RetirementIsMonotone) {
  std::mt19937_64 rng(6);
  const auto pts = random_points(rng, 500);
  KdTree tree(pts);
  std::size_t alive = tree.alive();
  std::uniform_int_distribution<std::size_t> pick(0, 499);
  for (int i = 0; i < 300; ++i) {
    const std::size_t id = pick(rng);
    if (i % 3 == 0) tree.retire_before(id / 4);
    else tree.retire(id);
    EXPECT_LE(tree.alive(), alive);
    alive = tree.alive();
    if (auto hit = tree.nearest({0, 0})) EXPECT_FALSE(tree.is_retired(hit->id));
  }
}

}  // namespace
