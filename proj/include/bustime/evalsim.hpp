#pragma once

// Real-time prediction replay, accuracy metrics and wall-clock timing.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "bustime/models.hpp"

namespace bustime {

/// One estimate made when a bus reached anchor `from` for anchor `target`.
struct EstimateRecord {
  std::size_t trip = 0;
  std::size_t from = 0;
  std::size_t target = 0;
  double predicted = 0.0;
  double actual = 0.0;

  friend bool operator==(const EstimateRecord&, const EstimateRecord&) = default;
};

/// kPerEstimate scores every record of the replay. kFirstQueryOnly keeps
/// only queries issued at the origin (one estimate per trip and anchor),
/// which is the population the printed metric formulas sum over.
enum class AccuracyMode { kPerEstimate, kFirstQueryOnly };

struct AccuracyReport {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // percent
  std::size_t estimate_count = 0;
};

/// Replays every test trip anchor by anchor: at each c in 0..n-2 the model
/// sees t_0..t_c and its estimates for c+1..n-1 are recorded.
inline std::vector<EstimateRecord> simulate(const Predictor& model, std::span<const AlignedTrip> trips) {
  const std::size_t n = model.anchor_count();
  std::vector<EstimateRecord> out;
  out.reserve(trips.size() * n * (n - 1) / 2);
  for (std::size_t j = 0; j < trips.size(); ++j) {
    const auto& trip = trips[j];
    if (trip.times.size() != n)
      throw Error(ErrorCode::kInvalidArgument, "trip '" + trip.trip_id + "' has " +
                                                   std::to_string(trip.times.size()) + " anchors, model expects " +
                                                   std::to_string(n));
    for (std::size_t c = 0; c + 1 < n; ++c) {
      Prediction p;
      try {
        p = model.predict({trip.departure_time_of_day, c, std::span<const double>(trip.times.data(), c + 1)});
      } catch (const Error& e) {
        throw Error(e.code(), "trip '" + trip.trip_id + "' at anchor " + std::to_string(c) + ": " + e.what());
      }
      if (p.estimates.size() != n - c - 1)
        throw Error(ErrorCode::kInvalidArgument, "model '" + model.name() + "' returned " +
                                                     std::to_string(p.estimates.size()) + " estimates for trip '" +
                                                     trip.trip_id + "' at anchor " + std::to_string(c));
      for (std::size_t i = c + 1; i < n; ++i) out.push_back({j, c, i, p.estimates[i - c - 1], trip.times[i]});
    }
  }
  return out;
}

/// MAE, MAPE (mean relative error in percent) and the grouped RMSE: the
/// square root of the summed squared errors of each (trip, query anchor)
/// group, summed over groups and divided by the record count. With one
/// group per trip this is the per-trip-root form of the printed formula.
/// Records are ordered canonically first, so results do not depend on
/// input order.
inline AccuracyReport accuracy(std::span<const EstimateRecord> records,
                               AccuracyMode mode = AccuracyMode::kPerEstimate) {
  std::vector<EstimateRecord> rs;
  rs.reserve(records.size());
  for (const auto& r : records)
    if (mode == AccuracyMode::kPerEstimate || r.from == 0) rs.push_back(r);
  if (rs.empty()) throw Error(ErrorCode::kEmptyRecords, "no estimate records to score");
  std::sort(rs.begin(), rs.end(), [](const EstimateRecord& a, const EstimateRecord& b) {
    return std::tie(a.trip, a.from, a.target) < std::tie(b.trip, b.from, b.target);
  });

  double abs_sum = 0.0, rel_sum = 0.0, root_sum = 0.0, group_sq = 0.0;
  for (std::size_t k = 0; k < rs.size(); ++k) {
    const auto& r = rs[k];
    if (!(r.actual > 0.0))
      throw Error(ErrorCode::kInvalidArgument, "record for trip " + std::to_string(r.trip) + " anchor " +
                                                   std::to_string(r.target) + " has non-positive actual time");
    const double err = r.predicted - r.actual;
    abs_sum += std::abs(err);
    rel_sum += std::abs(err) / r.actual;
    group_sq += err * err;
    const bool group_ends = k + 1 == rs.size() || rs[k + 1].trip != r.trip || rs[k + 1].from != r.from;
    if (group_ends) {
      root_sum += std::sqrt(group_sq);
      group_sq = 0.0;
    }
  }
  const double count = static_cast<double>(rs.size());
  return {abs_sum / count, root_sum / count, rel_sum / count * 100.0, rs.size()};
}

template <class T>
struct Timed {
  T value;
  double seconds = 0.0;
};

/// Wall-clock seconds spent in `train()`.
template <class Train>
auto time_train(Train&& train) -> Timed<decltype(train())> {
  const auto start = std::chrono::steady_clock::now();
  auto model = train();
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
  return {std::move(model), dt.count()};
}

/// Aggregate wall-clock seconds of the full replay over `trips`, measured
/// after one untimed warm-up replay.
inline Timed<std::vector<EstimateRecord>> time_predict(const Predictor& model, std::span<const AlignedTrip> trips,
                                                       bool warm_up = true) {
  if (warm_up) (void)simulate(model, trips);
  const auto start = std::chrono::steady_clock::now();
  auto records = simulate(model, trips);
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
  return {std::move(records), dt.count()};
}

}  // namespace bustime
