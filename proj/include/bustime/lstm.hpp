#pragma once

// Single-layer LSTM regressor over anchor sequences.
//
// Step s (s = 0 .. n-2) sees x_s = (tod, t_s, d_s, d_{s+1}), each min-max
// scaled with training-set ranges, and predicts the scaled t_{s+1}.
// Gate order in the stacked weights is input, forget, cell, output:
//
//   z = Wx x + Wh h + b
//   i = sig(z_i)  f = sig(z_f)  g = tanh(z_g)  o = sig(z_o)
//   c' = f*c + i*g   h' = o*tanh(c')   y = wy.h' + by
//
// Training minimises the mean squared error over every step of every
// trip with full-batch Adam.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bustime/models.hpp"

namespace bustime::models {

struct LstmConfig {
  std::size_t hidden = 32;
  std::size_t epochs = 200;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double init_range = 0.08;
  std::uint64_t seed = 2012;
  std::size_t chunk = 128;  // trips per forward/backward block (memory bound only)

  void validate() const {
    if (hidden == 0 || !(learning_rate > 0) || !(init_range > 0) || chunk == 0 ||
        !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(epsilon > 0))
      throw Error(ErrorCode::kInvalidConfig, "LSTM hyperparameters out of range");
  }
};

/// Per-feature min-max ranges; degenerate ranges scale by 1.
struct FeatureScaling {
  double tod_min = 0, tod_max = 1, t_min = 0, t_max = 1, d_min = 0, d_max = 1;

  static double unit(double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) : v - lo; }
  double tod(double v) const { return unit(v, tod_min, tod_max); }
  double time(double v) const { return unit(v, t_min, t_max); }
  double dist(double v) const { return unit(v, d_min, d_max); }
  double unscale_time(double v) const { return t_max > t_min ? t_min + v * (t_max - t_min) : v + t_min; }

  static FeatureScaling fit(const TrainingSet& ts) {
    FeatureScaling s;
    s.tod_min = s.tod_max = ts.trips.front().departure_time_of_day;
    s.t_min = s.t_max = ts.trips.front().times.front();
    for (const auto& trip : ts.trips) {
      s.tod_min = std::min(s.tod_min, trip.departure_time_of_day);
      s.tod_max = std::max(s.tod_max, trip.departure_time_of_day);
      for (double t : trip.times) {
        s.t_min = std::min(s.t_min, t);
        s.t_max = std::max(s.t_max, t);
      }
    }
    s.d_min = ts.anchor_distances.front();
    s.d_max = ts.anchor_distances.back();
    return s;
  }
};

/// LSTM weights packed in one vector: Wx (4H x 4), Wh (4H x H), b (4H),
/// wy (H), by (1). Matrices are column-major views into `theta`.
class LstmWeights {
 public:
  static constexpr Eigen::Index kInput = 4;

  LstmWeights() = default;
  explicit LstmWeights(std::size_t hidden)
      : h_(static_cast<Eigen::Index>(hidden)), theta_(Eigen::VectorXd::Zero(count(hidden))) {}
  LstmWeights(std::size_t hidden, Eigen::VectorXd theta) : h_(static_cast<Eigen::Index>(hidden)), theta_(std::move(theta)) {
    if (theta_.size() != count(hidden))
      throw Error(ErrorCode::kBadModelFile, "LSTM parameter count does not match hidden size");
  }

  static Eigen::Index count(std::size_t hidden) {
    const auto h = static_cast<Eigen::Index>(hidden);
    return 4 * h * kInput + 4 * h * h + 4 * h + h + 1;
  }

  Eigen::Index hidden() const { return h_; }
  Eigen::VectorXd& theta() { return theta_; }
  const Eigen::VectorXd& theta() const { return theta_; }

  using CMap = Eigen::Map<const Eigen::MatrixXd>;
  using CVec = Eigen::Map<const Eigen::VectorXd>;
  CMap wx() const { return {theta_.data(), 4 * h_, kInput}; }
  CMap wh() const { return {theta_.data() + off_wh(), 4 * h_, h_}; }
  CVec b() const { return {theta_.data() + off_b(), 4 * h_}; }
  CVec wy() const { return {theta_.data() + off_wy(), h_}; }
  double by() const { return theta_[off_by()]; }

  Eigen::Index off_wh() const { return 4 * h_ * kInput; }
  Eigen::Index off_b() const { return off_wh() + 4 * h_ * h_; }
  Eigen::Index off_wy() const { return off_b() + 4 * h_; }
  Eigen::Index off_by() const { return off_wy() + h_; }

  static LstmWeights random(std::size_t hidden, double range, std::uint64_t seed) {
    LstmWeights w(hidden);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-range, range);
    for (Eigen::Index i = 0; i < w.theta_.size(); ++i) w.theta_[i] = u(rng);
    return w;
  }

 private:
  Eigen::Index h_ = 0;
  Eigen::VectorXd theta_;
};

/// Scaled training sequences: one column per trip.
struct LstmData {
  Eigen::RowVectorXd tod;  // 1 x m
  Eigen::MatrixXd t;       // n x m
  Eigen::VectorXd d;       // n

  static LstmData build(const TrainingSet& ts, const FeatureScaling& s) {
    LstmData data;
    const auto m = static_cast<Eigen::Index>(ts.trips.size());
    const auto n = static_cast<Eigen::Index>(ts.anchor_count());
    data.tod.resize(m);
    data.t.resize(n, m);
    data.d.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) data.d[i] = s.dist(ts.anchor_distances[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto& trip = ts.trips[static_cast<std::size_t>(j)];
      data.tod[j] = s.tod(trip.departure_time_of_day);
      for (Eigen::Index i = 0; i < n; ++i) data.t(i, j) = s.time(trip.times[static_cast<std::size_t>(i)]);
    }
    return data;
  }
};

namespace lstm_detail {

inline Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& z) { return 1.0 / (1.0 + (-z).exp()); }

}  // namespace lstm_detail

/// Mean squared error over all steps and trips, and its gradient with
/// respect to the packed parameters (backpropagation through time).
inline std::pair<double, Eigen::VectorXd> lstm_loss_and_gradient(const LstmWeights& w,
                                                                   const LstmData& data,
                                                                   std::size_t chunk = 128) {
  using Eigen::ArrayXXd;
  using Eigen::MatrixXd;
  const Eigen::Index H = w.hidden();
  const Eigen::Index n = data.t.rows();
  const Eigen::Index m = data.t.cols();
  const Eigen::Index steps = n - 1;
  const double norm = 1.0 / static_cast<double>(m * steps);

  const auto wx = w.wx();
  const auto wh = w.wh();
  const auto b = w.b();
  const auto wy = w.wy();
  const double by = w.by();

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(w.theta().size());
  Eigen::Map<MatrixXd> g_wx(grad.data(), 4 * H, LstmWeights::kInput);
  Eigen::Map<MatrixXd> g_wh(grad.data() + w.off_wh(), 4 * H, H);
  Eigen::Map<Eigen::VectorXd> g_b(grad.data() + w.off_b(), 4 * H);
  Eigen::Map<Eigen::VectorXd> g_wy(grad.data() + w.off_wy(), H);
  double g_by = 0.0;
  double loss = 0.0;

  std::vector<MatrixXd> xs(static_cast<std::size_t>(steps));
  std::vector<ArrayXXd> gi(xs.size()), gf(xs.size()), gg(xs.size()), go(xs.size()), cs(xs.size()),
      tcs(xs.size()), hs(xs.size());

  for (Eigen::Index j0 = 0; j0 < m; j0 += static_cast<Eigen::Index>(chunk)) {
    const Eigen::Index B = std::min<Eigen::Index>(static_cast<Eigen::Index>(chunk), m - j0);
    ArrayXXd h_prev = ArrayXXd::Zero(H, B);
    ArrayXXd c_prev = ArrayXXd::Zero(H, B);
    std::vector<Eigen::RowVectorXd> dy(xs.size());

    for (Eigen::Index s = 0; s < steps; ++s) {
      const auto k = static_cast<std::size_t>(s);
      MatrixXd& x = xs[k];
      x.resize(LstmWeights::kInput, B);
      x.row(0) = data.tod.segment(j0, B);
      x.row(1) = data.t.row(s).segment(j0, B);
      x.row(2).setConstant(data.d[s]);
      x.row(3).setConstant(data.d[s + 1]);
      const ArrayXXd z = ((wx * x + wh * h_prev.matrix()).colwise() + b).array();
      gi[k] = lstm_detail::sigmoid(z.topRows(H));
      gf[k] = lstm_detail::sigmoid(z.middleRows(H, H));
      gg[k] = z.middleRows(2 * H, H).tanh();
      go[k] = lstm_detail::sigmoid(z.bottomRows(H));
      cs[k] = gf[k] * c_prev + gi[k] * gg[k];
      tcs[k] = cs[k].tanh();
      hs[k] = go[k] * tcs[k];
      const Eigen::RowVectorXd y = (wy.transpose() * hs[k].matrix()).array() + by;
      const Eigen::RowVectorXd err = y - data.t.row(s + 1).segment(j0, B);
      loss += err.squaredNorm();
      dy[k] = 2.0 * norm * err;
      h_prev = hs[k];
      c_prev = cs[k];
    }

    ArrayXXd dh_next = ArrayXXd::Zero(H, B);
    ArrayXXd dc_next = ArrayXXd::Zero(H, B);
    MatrixXd dz(4 * H, B);
    for (Eigen::Index s = steps - 1; s >= 0; --s) {
      const auto k = static_cast<std::size_t>(s);
      g_wy += hs[k].matrix() * dy[k].transpose();
      g_by += dy[k].sum();
      const ArrayXXd dh = (wy * dy[k]).array() + dh_next;
      const ArrayXXd dc = dh * go[k] * (1.0 - tcs[k].square()) + dc_next;
      const ArrayXXd c_before = s > 0 ? cs[k - 1] : ArrayXXd::Zero(H, B);
      dz.topRows(H) = (dc * gg[k] * gi[k] * (1.0 - gi[k])).matrix();
      dz.middleRows(H, H) = (dc * c_before * gf[k] * (1.0 - gf[k])).matrix();
      dz.middleRows(2 * H, H) = (dc * gi[k] * (1.0 - gg[k].square())).matrix();
      dz.bottomRows(H) = (dh * tcs[k] * go[k] * (1.0 - go[k])).matrix();
      g_wx += dz * xs[k].transpose();
      if (s > 0) g_wh += dz * hs[k - 1].matrix().transpose();
      g_b += dz.rowwise().sum();
      dh_next = (wh.transpose() * dz).array();
      dc_next = dc * gf[k];
    }
  }
  grad[w.off_by()] = g_by;
  return {loss * norm, std::move(grad)};
}

class LstmModel final : public Predictor {
 public:
  LstmModel(std::vector<double> anchors, LstmWeights weights, FeatureScaling scaling,
            std::vector<double> loss_history)
      : anchors_(std::move(anchors)), w_(std::move(weights)), scaling_(scaling),
        loss_history_(std::move(loss_history)) {}

  /// Adam on the full-batch gradient. loss_history()[e] is the loss before
  /// update e; the last entry is the loss after training.
  static LstmModel train(const TrainingSet& ts, const LstmConfig& cfg = {}) {
    ts.validate();
    cfg.validate();
    const FeatureScaling scaling = FeatureScaling::fit(ts);
    const LstmData data = LstmData::build(ts, scaling);
    LstmWeights w = LstmWeights::random(cfg.hidden, cfg.init_range, cfg.seed);

    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(w.theta().size());
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(w.theta().size());
    std::vector<double> history;
    history.reserve(cfg.epochs + 1);
    for (std::size_t epoch = 0; epoch <= cfg.epochs; ++epoch) {
      auto [loss, grad] = lstm_loss_and_gradient(w, data, cfg.chunk);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw Error(ErrorCode::kNonFiniteLoss,
                    "LSTM loss became non-finite at epoch " + std::to_string(epoch));
      history.push_back(loss);
      if (epoch == cfg.epochs) break;
      const double step = static_cast<double>(epoch + 1);
      m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * grad;
      m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(cfg.beta1, step);
      const double c2 = 1.0 - std::pow(cfg.beta2, step);
      w.theta().array() -=
          cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.epsilon);
    }
    return {ts.anchor_distances, std::move(w), scaling, std::move(history)};
  }

  static LstmModel from_archive(const ParamArchive& a) {
    const auto s = a.vector("scaling");
    if (s.size() != 6) throw Error(ErrorCode::kBadModelFile, "LSTM scaling must hold 6 values");
    const auto theta = a.vector("theta");
    LstmWeights w(static_cast<std::size_t>(a.scalar("hidden")),
                  Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size())));
    return {a.vector("anchors"), std::move(w), FeatureScaling{s[0], s[1], s[2], s[3], s[4], s[5]},
            a.vector("loss_history")};
  }

  std::string name() const override { return "lstm"; }
  std::size_t anchor_count() const override { return anchors_.size(); }
  const LstmWeights& weights() const { return w_; }
  const FeatureScaling& scaling() const { return scaling_; }
  const std::vector<double>& loss_history() const { return loss_history_; }

  /// One-step-ahead predictions along a known trip (true t_s fed at every
  /// step): element s estimates t_{s+1}, unscaled.
  std::vector<double> teacher_forced(const AlignedTrip& trip) const {
    State st(w_.hidden());
    std::vector<double> out;
    for (std::size_t s = 0; s + 1 < anchors_.size(); ++s)
      out.push_back(scaling_.unscale_time(step(st, trip.departure_time_of_day, scaling_.time(trip.times[s]), s)));
    return out;
  }

  /// Unclamped estimates for anchors c+1..n-1: the observed prefix is fed
  /// as truth, then each prediction becomes the next step's input.
  std::vector<double> rollout(const Query& q) const {
    validate_query(q, anchors_.size());
    State st(w_.hidden());
    double y = 0.0;
    for (std::size_t s = 0; s <= q.current; ++s)
      y = step(st, q.departure_time_of_day, scaling_.time(q.observed[s]), s);
    std::vector<double> out{scaling_.unscale_time(y)};
    for (std::size_t s = q.current + 1; s + 1 < anchors_.size(); ++s) {
      y = step(st, q.departure_time_of_day, y, s);
      out.push_back(scaling_.unscale_time(y));
    }
    return out;
  }

  Prediction predict(const Query& q) const override {
    Prediction p{rollout(q)};
    clamp_estimates(p.estimates, q.observed[q.current]);
    return p;
  }

  ParamArchive archive() const override {
    ParamArchive a;
    a.kind = static_cast<std::uint32_t>(ModelKind::kLstm);
    a.anchor_count = anchors_.size();
    a.add_vector("anchors", anchors_);
    a.add_scalar("hidden", static_cast<double>(w_.hidden()));
    a.add_vector("theta", std::vector<double>(w_.theta().data(), w_.theta().data() + w_.theta().size()));
    const double s[] = {scaling_.tod_min, scaling_.tod_max, scaling_.t_min,
                        scaling_.t_max,   scaling_.d_min,   scaling_.d_max};
    a.add_vector("scaling", s);
    a.add_vector("loss_history", loss_history_);
    return a;
  }

 private:
  struct State {
    explicit State(Eigen::Index h) : h(Eigen::VectorXd::Zero(h)), c(Eigen::VectorXd::Zero(h)) {}
    Eigen::VectorXd h, c;
  };

  /// Advances the cell by step s with scaled travel-time input `t_scaled`;
  /// returns the scaled estimate of t_{s+1}.
  double step(State& st, double tod, double t_scaled, std::size_t s) const {
    const Eigen::Index H = w_.hidden();
    Eigen::Vector4d x(scaling_.tod(tod), t_scaled, scaling_.dist(anchors_[s]), scaling_.dist(anchors_[s + 1]));
    const Eigen::VectorXd z = w_.wx() * x + w_.wh() * st.h + w_.b();
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (Eigen::Index r = 0; r < H; ++r) {
      const double i = sig(z[r]);
      const double f = sig(z[H + r]);
      const double g = std::tanh(z[2 * H + r]);
      const double o = sig(z[3 * H + r]);
      st.c[r] = f * st.c[r] + i * g;
      st.h[r] = o * std::tanh(st.c[r]);
    }
    return w_.wy().dot(st.h) + w_.by();
  }

  std::vector<double> anchors_;
  LstmWeights w_;
  FeatureScaling scaling_;
  std::vector<double> loss_history_;
};

}  // namespace bustime::models
