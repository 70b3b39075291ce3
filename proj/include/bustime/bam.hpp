#pragma once

// Basic additive model: t = b0 + f1(departure time of day) + f2(distance),
// f1 and f2 cubic B-spline expansions on clamped uniform knots, fitted by
// ridge-penalised least squares (the intercept is not penalised).

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "bustime/models.hpp"

namespace bustime {

/// Cubic B-spline basis on [lo, hi] with `interior` uniform interior knots
/// and clamped (4-fold) end knots; interior + 4 functions.
class CubicBSplineBasis {
 public:
  static constexpr int kDegree = 3;

  CubicBSplineBasis() = default;
  CubicBSplineBasis(double lo, double hi, std::size_t interior) : lo_(lo), hi_(hi) {
    if (!(hi > lo)) throw Error(ErrorCode::kInvalidArgument, "spline range must be non-empty");
    for (int i = 0; i <= kDegree; ++i) knots_.push_back(lo);
    for (std::size_t j = 1; j <= interior; ++j)
      knots_.push_back(lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(interior + 1));
    for (int i = 0; i <= kDegree; ++i) knots_.push_back(hi);
  }

  std::size_t size() const { return knots_.size() - kDegree - 1; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

  /// Index of the first non-zero function at x and the 4 values there
  /// (Cox-de Boor recursion). x is clamped to [lo, hi].
  std::size_t evaluate(double x, double out[kDegree + 1]) const {
    x = std::clamp(x, lo_, hi_);
    // knot span: knots_[s] <= x < knots_[s+1], with x == hi in the last span
    const std::size_t last = size() - 1;
    std::size_t s = last;
    if (x < hi_) {
      s = static_cast<std::size_t>(
              std::upper_bound(knots_.begin() + kDegree, knots_.begin() + static_cast<std::ptrdiff_t>(last + 1), x) -
              knots_.begin()) - 1;
    }
    double left[kDegree + 1], right[kDegree + 1];
    out[0] = 1.0;
    for (int j = 1; j <= kDegree; ++j) {
      left[j] = x - knots_[s + 1 - j];
      right[j] = knots_[s + j] - x;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double tmp = out[r] / (right[r + 1] + left[j - r]);
        out[r] = saved + right[r + 1] * tmp;
        saved = left[j - r] * tmp;
      }
      out[j] = saved;
    }
    return s - kDegree;
  }

  /// Dense row of all basis values at x.
  Eigen::VectorXd row(double x) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size()));
    double b[kDegree + 1];
    const std::size_t first = evaluate(x, b);
    for (int r = 0; r <= kDegree; ++r) v[static_cast<Eigen::Index>(first) + r] = b[r];
    return v;
  }

 private:
  double lo_ = 0.0;
  double hi_ = 1.0;
  std::vector<double> knots_;
};

namespace models {

struct BamConfig {
  std::size_t interior_knots = 10;
  double lambda = 1e-3;

  void validate() const {
    if (interior_knots == 0 || !(lambda >= 0.0))
      throw Error(ErrorCode::kInvalidConfig, "BAM needs at least one knot and lambda >= 0");
  }
};

class BamModel final : public Predictor {
 public:
  BamModel(std::vector<double> anchors, CubicBSplineBasis tod, CubicBSplineBasis dist,
           Eigen::VectorXd coef, BamConfig cfg)
      : anchors_(std::move(anchors)), tod_(std::move(tod)), dist_(std::move(dist)),
        coef_(std::move(coef)), cfg_(cfg) {
    const auto k1 = static_cast<Eigen::Index>(tod_.size());
    const auto k2 = static_cast<Eigen::Index>(dist_.size());
    if (coef_.size() != 1 + k1 + k2)
      throw Error(ErrorCode::kBadModelFile, "BAM coefficient count does not match its bases");
    anchor_effect_.reserve(anchors_.size());
    for (double d : anchors_) anchor_effect_.push_back(dist_.row(d).dot(coef_.segment(1 + k1, k2)));
  }

  static BamModel train(const TrainingSet& ts, const BamConfig& cfg = {}) {
    ts.validate();
    cfg.validate();
    auto range = [](double lo, double hi) {
      if (!(hi > lo)) return std::pair{lo - 0.5, lo + 0.5};  // degenerate: all equal
      return std::pair{lo, hi};
    };
    double tmin = ts.trips.front().departure_time_of_day, tmax = tmin;
    for (const auto& t : ts.trips) {
      tmin = std::min(tmin, t.departure_time_of_day);
      tmax = std::max(tmax, t.departure_time_of_day);
    }
    const auto [t_lo, t_hi] = range(tmin, tmax);
    const auto [d_lo, d_hi] = range(ts.anchor_distances[1], ts.anchor_distances.back());
    CubicBSplineBasis tod(t_lo, t_hi, cfg.interior_knots);
    CubicBSplineBasis dist(d_lo, d_hi, cfg.interior_knots);

    const auto k1 = static_cast<Eigen::Index>(tod.size());
    const auto k2 = static_cast<Eigen::Index>(dist.size());
    const Eigen::Index p = 1 + k1 + k2;
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);

    // Each design row has 9 non-zeros: intercept + 4 + 4.
    std::vector<std::array<double, 4>> dist_vals(ts.anchor_count());
    std::vector<Eigen::Index> dist_first(ts.anchor_count());
    for (std::size_t i = 1; i < ts.anchor_count(); ++i)
      dist_first[i] = 1 + k1 + static_cast<Eigen::Index>(dist.evaluate(ts.anchor_distances[i], dist_vals[i].data()));
    for (const auto& trip : ts.trips) {
      double tv[4];
      const Eigen::Index tf = 1 + static_cast<Eigen::Index>(tod.evaluate(trip.departure_time_of_day, tv));
      for (std::size_t i = 1; i < ts.anchor_count(); ++i) {
        Eigen::Index idx[9];
        double val[9];
        idx[0] = 0;
        val[0] = 1.0;
        for (int r = 0; r < 4; ++r) {
          idx[1 + r] = tf + r;
          val[1 + r] = tv[r];
          idx[5 + r] = dist_first[i] + r;
          val[5 + r] = dist_vals[i][static_cast<std::size_t>(r)];
        }
        const double y = trip.times[i];
        for (int a = 0; a < 9; ++a) {
          xty[idx[a]] += val[a] * y;
          for (int b = 0; b < 9; ++b) xtx(idx[a], idx[b]) += val[a] * val[b];
        }
      }
    }
    for (Eigen::Index j = 1; j < p; ++j) xtx(j, j) += cfg.lambda;

    const Eigen::LLT<Eigen::MatrixXd> llt(xtx);
    if (llt.info() != Eigen::Success || !(llt.rcond() >= 1e-12))
      throw Error(ErrorCode::kSingularFit, "additive model normal equations are singular "
                                           "(too little data or lambda = 0)");
    Eigen::VectorXd coef = llt.solve(xty);
    if (!coef.allFinite()) throw Error(ErrorCode::kSingularFit, "additive model fit is not finite");
    return {ts.anchor_distances, std::move(tod), std::move(dist), std::move(coef), cfg};
  }

  static BamModel from_archive(const ParamArchive& a) {
    BamConfig cfg;
    cfg.interior_knots = static_cast<std::size_t>(a.scalar("interior_knots"));
    cfg.lambda = a.scalar("lambda");
    const auto r = a.vector("ranges");
    if (r.size() != 4) throw Error(ErrorCode::kBadModelFile, "BAM ranges must hold 4 values");
    const auto c = a.vector("coef");
    return {a.vector("anchors"), CubicBSplineBasis(r[0], r[1], cfg.interior_knots),
            CubicBSplineBasis(r[2], r[3], cfg.interior_knots),
            Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size())), cfg};
  }

  std::string name() const override { return "bam"; }
  std::size_t anchor_count() const override { return anchors_.size(); }
  const Eigen::VectorXd& coefficients() const { return coef_; }

  double intercept() const { return coef_[0]; }

  double tod_effect(double tod) const {
    const auto k1 = static_cast<Eigen::Index>(tod_.size());
    return tod_.row(tod).dot(coef_.segment(1, k1));
  }

  double distance_effect(double d) const {
    const auto k1 = static_cast<Eigen::Index>(tod_.size());
    const auto k2 = static_cast<Eigen::Index>(dist_.size());
    return dist_.row(d).dot(coef_.segment(1 + k1, k2));
  }

  /// Fitted surface before any clamping.
  double surface(double tod, double d) const { return intercept() + tod_effect(tod) + distance_effect(d); }

  Prediction predict(const Query& q) const override {
    validate_query(q, anchors_.size());
    const double base = intercept() + tod_effect(q.departure_time_of_day);
    Prediction p;
    p.estimates.reserve(anchors_.size() - q.current - 1);
    for (std::size_t i = q.current + 1; i < anchors_.size(); ++i)
      p.estimates.push_back(base + anchor_effect_[i]);
    clamp_estimates(p.estimates, q.observed[q.current]);
    return p;
  }

  ParamArchive archive() const override {
    ParamArchive a;
    a.kind = static_cast<std::uint32_t>(ModelKind::kBam);
    a.anchor_count = anchors_.size();
    a.add_vector("anchors", anchors_);
    a.add_scalar("interior_knots", static_cast<double>(cfg_.interior_knots));
    a.add_scalar("lambda", cfg_.lambda);
    const double ranges[] = {tod_.lo(), tod_.hi(), dist_.lo(), dist_.hi()};
    a.add_vector("ranges", ranges);
    a.add_vector("coef", std::vector<double>(coef_.data(), coef_.data() + coef_.size()));
    return a;
  }

 private:
  std::vector<double> anchors_;
  CubicBSplineBasis tod_;
  CubicBSplineBasis dist_;
  Eigen::VectorXd coef_;
  BamConfig cfg_;
  std::vector<double> anchor_effect_;
};

}  // namespace models
}  // namespace bustime
