#pragma once

// Common train/predict contract and the trajectory-matching models:
// delay (mean profile plus current offset), k-NN and kernel regression.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bustime/alignment.hpp"
#include "bustime/error.hpp"
#include "bustime/model_io.hpp"

namespace bustime {

/// Uniform-length aligned trips over one anchor set.
struct TrainingSet {
  std::vector<double> anchor_distances;
  std::vector<AlignedTrip> trips;

  std::size_t anchor_count() const { return anchor_distances.size(); }

  void validate() const {
    if (trips.empty()) throw Error(ErrorCode::kEmptyInput, "training set has no trips");
    if (anchor_distances.size() < 2)
      throw Error(ErrorCode::kInvalidArgument, "training set needs at least 2 anchors");
    for (const auto& t : trips) {
      if (t.times.size() != anchor_distances.size())
        throw Error(ErrorCode::kInvalidArgument,
                    "trip '" + t.trip_id + "' has " + std::to_string(t.times.size()) +
                        " times, expected " + std::to_string(anchor_distances.size()));
    }
  }

  /// Trips as rows of an m x n matrix.
  Eigen::MatrixXd time_matrix() const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(trips.size()),
                      static_cast<Eigen::Index>(anchor_count()));
    for (std::size_t j = 0; j < trips.size(); ++j)
      for (std::size_t i = 0; i < anchor_count(); ++i)
        m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = trips[j].times[i];
    return m;
  }
};

/// A bus has just reached anchor `current`; `observed` holds t_0..t_current.
struct Query {
  double departure_time_of_day = 0.0;
  std::size_t current = 0;
  std::span<const double> observed;
};

/// Estimates for anchors current+1 .. n-1.
struct Prediction {
  std::vector<double> estimates;
};

enum class ModelKind : std::uint32_t { kDelay = 1, kKnn = 2, kKr = 3, kBam = 4, kLstm = 5 };

constexpr std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kDelay: return "delay";
    case ModelKind::kKnn: return "knn";
    case ModelKind::kKr: return "kr";
    case ModelKind::kBam: return "bam";
    case ModelKind::kLstm: return "lstm";
  }
  return "unknown";
}

inline std::optional<ModelKind> parse_model_kind(std::string_view s) {
  for (auto k : {ModelKind::kDelay, ModelKind::kKnn, ModelKind::kKr, ModelKind::kBam, ModelKind::kLstm})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string name() const = 0;
  virtual std::size_t anchor_count() const = 0;
  virtual Prediction predict(const Query& q) const = 0;
  /// Parameters for persistence; pseudo-models may decline.
  virtual ParamArchive archive() const {
    throw Error(ErrorCode::kInvalidArgument, "model '" + name() + "' cannot be saved");
  }
};

/// Throws unless `q` is a valid query for `n` anchors.
inline void validate_query(const Query& q, std::size_t n) {
  if (n < 2 || q.current + 2 > n)
    throw Error(ErrorCode::kInvalidArgument, "query anchor " + std::to_string(q.current) +
                                                 " out of range for " + std::to_string(n) + " anchors");
  if (q.observed.size() != q.current + 1)
    throw Error(ErrorCode::kInvalidArgument, "query must observe exactly anchors 0.." +
                                                 std::to_string(q.current));
  if (q.observed[0] != 0.0 || !strictly_increasing(q.observed))
    throw Error(ErrorCode::kInvalidArgument, "observed times must start at 0 and increase strictly");
}

/// Forces estimates above observed[c] and strictly increasing, with at
/// least one second between consecutive values.
inline void clamp_estimates(std::vector<double>& est, double floor) {
  double prev = floor;
  for (auto& v : est) {
    if (!(v >= prev + 1.0)) v = prev + 1.0;  // also replaces NaN
    prev = v;
  }
}

namespace models {

inline std::vector<double> mean_profile(const TrainingSet& ts) {
  std::vector<double> mu(ts.anchor_count(), 0.0);
  for (const auto& t : ts.trips)
    for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += t.times[i];
  for (auto& v : mu) v /= static_cast<double>(ts.trips.size());
  return mu;
}

/// estimate_i = mu_i + (observed_c - mu_c).
class DelayModel final : public Predictor {
 public:
  DelayModel(std::vector<double> anchors, std::vector<double> mu)
      : anchors_(std::move(anchors)), mu_(std::move(mu)) {}

  static DelayModel train(const TrainingSet& ts) {
    ts.validate();
    return {ts.anchor_distances, mean_profile(ts)};
  }

  static DelayModel from_archive(const ParamArchive& a) {
    return {a.vector("anchors"), a.vector("mu")};
  }

  std::string name() const override { return "delay"; }
  std::size_t anchor_count() const override { return mu_.size(); }
  const std::vector<double>& mean() const { return mu_; }

  Prediction predict(const Query& q) const override {
    validate_query(q, mu_.size());
    const double offset = q.observed[q.current] - mu_[q.current];
    Prediction p;
    p.estimates.reserve(mu_.size() - q.current - 1);
    for (std::size_t i = q.current + 1; i < mu_.size(); ++i) p.estimates.push_back(mu_[i] + offset);
    clamp_estimates(p.estimates, q.observed[q.current]);
    return p;
  }

  ParamArchive archive() const override {
    ParamArchive a;
    a.kind = static_cast<std::uint32_t>(ModelKind::kDelay);
    a.anchor_count = mu_.size();
    a.add_vector("anchors", anchors_);
    a.add_vector("mu", mu_);
    return a;
  }

 private:
  std::vector<double> anchors_;
  std::vector<double> mu_;
};

namespace detail {

/// Squared Euclidean distance between `observed` and each stored prefix.
inline Eigen::VectorXd prefix_distances(const Eigen::MatrixXd& times, std::span<const double> observed) {
  const auto c = static_cast<Eigen::Index>(observed.size());
  const Eigen::Map<const Eigen::RowVectorXd> obs(observed.data(), c);
  return (times.leftCols(c).rowwise() - obs).rowwise().squaredNorm();
}

/// Neighbour j's future re-anchored at the query's current time.
inline void add_shifted_future(const Eigen::MatrixXd& times, Eigen::Index j, const Query& q,
                               double weight, std::vector<double>& acc) {
  const auto c = static_cast<Eigen::Index>(q.current);
  const double shift = q.observed[q.current] - times(j, c);
  for (Eigen::Index i = c + 1; i < times.cols(); ++i)
    acc[static_cast<std::size_t>(i - c - 1)] += weight * (times(j, i) + shift);
}

inline Eigen::Index nearest_trip(const Eigen::VectorXd& d2) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < d2.size(); ++j)
    if (d2[j] < d2[best]) best = j;  // strict: earlier trip wins ties
  return best;
}

}  // namespace detail

/// Averages the re-anchored futures of the k trips whose observed prefix is
/// closest in Euclidean distance. Ties go to the earlier training trip.
class KnnModel final : public Predictor {
 public:
  KnnModel(std::vector<double> anchors, Eigen::MatrixXd times, std::size_t k)
      : anchors_(std::move(anchors)), times_(std::move(times)), k_(k) {
    if (k_ == 0) throw Error(ErrorCode::kInvalidConfig, "k must be at least 1");
    if (k_ > static_cast<std::size_t>(times_.rows()))
      throw Error(ErrorCode::kKTooLarge, "k = " + std::to_string(k_) + " exceeds the " +
                                             std::to_string(times_.rows()) + " training trips");
  }

  static KnnModel train(const TrainingSet& ts, std::size_t k) {
    ts.validate();
    return {ts.anchor_distances, ts.time_matrix(), k};
  }

  static KnnModel from_archive(const ParamArchive& a) {
    return {a.vector("anchors"), a.matrix("times"), static_cast<std::size_t>(a.scalar("k"))};
  }

  std::string name() const override { return "knn"; }
  std::size_t anchor_count() const override { return static_cast<std::size_t>(times_.cols()); }
  std::size_t k() const { return k_; }

  Prediction predict(const Query& q) const override {
    validate_query(q, anchor_count());
    const Eigen::VectorXd d2 = detail::prefix_distances(times_, q.observed);
    Prediction p;
    p.estimates.assign(anchor_count() - q.current - 1, 0.0);
    if (k_ == 1) {
      detail::add_shifted_future(times_, detail::nearest_trip(d2), q, 1.0, p.estimates);
    } else {
      std::vector<Eigen::Index> order(static_cast<std::size_t>(d2.size()));
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k_), order.end(),
                        [&](Eigen::Index a, Eigen::Index b) {
                          return d2[a] < d2[b] || (d2[a] == d2[b] && a < b);
                        });
      for (std::size_t r = 0; r < k_; ++r) detail::add_shifted_future(times_, order[r], q, 1.0, p.estimates);
      for (auto& v : p.estimates) v /= static_cast<double>(k_);
    }
    clamp_estimates(p.estimates, q.observed[q.current]);
    return p;
  }

  ParamArchive archive() const override {
    ParamArchive a;
    a.kind = static_cast<std::uint32_t>(ModelKind::kKnn);
    a.anchor_count = anchor_count();
    a.add_vector("anchors", anchors_);
    a.add_matrix("times", times_);
    a.add_scalar("k", static_cast<double>(k_));
    return a;
  }

 private:
  std::vector<double> anchors_;
  Eigen::MatrixXd times_;
  std::size_t k_;
};

/// Median of pairwise squared prefix distances over anchors 0..floor(n/2);
/// 1.0 when that median is zero (identical prefixes) or undefined.
inline double median_bandwidth(const Eigen::MatrixXd& times) {
  const Eigen::Index m = times.rows();
  const Eigen::Index c = times.cols() / 2 + 1;
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = a + 1; b < m; ++b)
      d2.push_back((times.row(a).head(c) - times.row(b).head(c)).squaredNorm());
  if (d2.empty()) return 1.0;
  const auto mid = d2.begin() + static_cast<std::ptrdiff_t>(d2.size() / 2);
  std::nth_element(d2.begin(), mid, d2.end());
  double median = *mid;
  if (d2.size() % 2 == 0) median = 0.5 * (median + *std::max_element(d2.begin(), mid));
  return median > 0.0 && std::isfinite(median) ? median : 1.0;
}

/// Gaussian-weighted average of every training trip's re-anchored future,
/// w_j = exp(-||observed - t^j[0..c]||^2 / h).
///
/// Weights are evaluated as exp(-(D_j - min D) / h). The common factor
/// cancels in the normalisation, so the estimate is unchanged, but the
/// nearest trip always keeps weight 1 and tiny h degrades to 1-NN instead
/// of 0/0.
class KrModel final : public Predictor {
 public:
  KrModel(std::vector<double> anchors, Eigen::MatrixXd times, double bandwidth)
      : anchors_(std::move(anchors)), times_(std::move(times)), h_(bandwidth) {
    if (!(h_ > 0.0) || !std::isfinite(h_))
      throw Error(ErrorCode::kInvalidConfig, "KR bandwidth must be positive and finite");
  }

  static KrModel train(const TrainingSet& ts, std::optional<double> bandwidth = std::nullopt) {
    ts.validate();
    auto times = ts.time_matrix();
    const double h = bandwidth ? *bandwidth : median_bandwidth(times);
    return {ts.anchor_distances, std::move(times), h};
  }

  static KrModel from_archive(const ParamArchive& a) {
    return {a.vector("anchors"), a.matrix("times"), a.scalar("bandwidth")};
  }

  std::string name() const override { return "kr"; }
  std::size_t anchor_count() const override { return static_cast<std::size_t>(times_.cols()); }
  double bandwidth() const { return h_; }

  Prediction predict(const Query& q) const override {
    validate_query(q, anchor_count());
    const Eigen::VectorXd d2 = detail::prefix_distances(times_, q.observed);
    const double d_min = d2.minCoeff();
    Prediction p;
    p.estimates.assign(anchor_count() - q.current - 1, 0.0);
    double total = 0.0;
    for (Eigen::Index j = 0; j < d2.size(); ++j) {
      const double w = std::exp(-(d2[j] - d_min) / h_);
      if (w == 0.0) continue;
      total += w;
      detail::add_shifted_future(times_, j, q, w, p.estimates);
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
      std::fill(p.estimates.begin(), p.estimates.end(), 0.0);
      detail::add_shifted_future(times_, detail::nearest_trip(d2), q, 1.0, p.estimates);
    } else {
      for (auto& v : p.estimates) v /= total;
    }
    clamp_estimates(p.estimates, q.observed[q.current]);
    return p;
  }

  ParamArchive archive() const override {
    ParamArchive a;
    a.kind = static_cast<std::uint32_t>(ModelKind::kKr);
    a.anchor_count = anchor_count();
    a.add_vector("anchors", anchors_);
    a.add_matrix("times", times_);
    a.add_scalar("bandwidth", h_);
    return a;
  }

 private:
  std::vector<double> anchors_;
  Eigen::MatrixXd times_;
  double h_;
};

}  // namespace models
}  // namespace bustime
