#ifndef SMOLNN_PREDICTOR_HPP_
#define SMOLNN_PREDICTOR_HPP_

// Training of the extrapolating network: each epoch takes one ADAM step on the
// data loss over the training window and one on the derivative-sign penalty
// over the full horizon. Validation loss never contributes a gradient.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "smolnn/error.hpp"
#include "smolnn/mlp.hpp"

namespace smolnn {

struct PenaltyCoefficients {
  double c1 = 1.0;  // y' >= 0
  double c2 = 1.0;  // y'' <= 0
  double c3 = 1.0;  // y''' >= 0
};

struct TrainConfig {
  double train_begin = 0.0;  // t_a
  double train_end = 0.0;    // t_b
  double valid_end = 0.0;    // t_c
  double horizon = 0.0;      // T
  double grid_dt = 0.0;      // spacing of every training grid; grids are k * grid_dt
  PenaltyCoefficients penalty;
  std::size_t max_epochs = 20000;
  std::uint64_t seed = 0;
  double stop_tol = 1e-6;
  std::size_t hidden = 5;
  // First-layer weights are optimized as w1 * time_scale, i.e. against the
  // input t / time_scale. A power of two keeps the conversion exact.
  double time_scale = 1.0;
  double lr = 0.001;

  void validate() const {
    detail::require(train_begin < train_end && train_end < valid_end && valid_end <= horizon,
                    "train: need t_a < t_b < t_c <= T");
    detail::require(train_begin >= 0.0, "train: windows must start at t >= 0");
    detail::require(grid_dt > 0.0, "train: grid_dt must be > 0");
    detail::require(hidden >= 1, "train: hidden width must be >= 1");
    detail::require(max_epochs >= 1, "train: max_epochs must be >= 1");
    int e = 0;
    detail::require(time_scale > 0.0 && std::frexp(time_scale, &e) == 0.5,
                    "train: time_scale must be a power of two");
  }
};

/// Time grids on integer multiples of grid_dt: the training window [t_a, t_b],
/// the validation window (t_b, t_c], and the full horizon [0, T].
struct TrainGrids {
  std::vector<double> train;
  std::vector<double> valid;
  std::vector<double> full;

  static TrainGrids build(const TrainConfig& cfg) {
    const double dt = cfg.grid_dt;
    auto idx_ceil = [dt](double t) { return static_cast<long long>(std::ceil(t / dt - 1e-9)); };
    auto idx_floor = [dt](double t) { return static_cast<long long>(std::floor(t / dt + 1e-9)); };
    TrainGrids g;
    for (long long i = idx_ceil(cfg.train_begin); i <= idx_floor(cfg.train_end); ++i) g.train.push_back(i * dt);
    for (long long i = idx_floor(cfg.train_end) + 1; i <= idx_floor(cfg.valid_end); ++i) g.valid.push_back(i * dt);
    for (long long i = 0; i <= idx_floor(cfg.horizon); ++i) g.full.push_back(i * dt);
    if (g.train.empty() || g.valid.empty()) throw ConfigError("train: empty training or validation grid");
    return g;
  }
};

struct TrainReport {
  std::vector<double> loss_train;
  std::vector<double> loss_valid;
  std::vector<double> loss_d;  // penalty at the weights its gradient step was taken from
  std::size_t epochs = 0;
  std::size_t returned_epoch = 0;  // 1-based epoch whose weights were returned
  bool stopped_by_criterion = false;
  std::uint64_t seed = 0;
  std::uint64_t data_steps = 0;
  std::uint64_t penalty_steps = 0;

  friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

struct TrainResult {
  MlpWeights weights;
  TrainReport report;
};

/// Mean squared deviation from the target over a grid.
inline double loss_u(const MlpWeights& w, std::span<const double> times, std::span<const double> target) {
  if (times.size() != target.size() || times.empty()) throw ConfigError("loss_u: bad grid");
  double s = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double e = forward(w, times[i]) - target[i];
    s += e * e;
  }
  return s / static_cast<double>(times.size());
}

inline double loss_u_grad(const MlpWeights& w, std::span<const double> times,
                          std::span<const double> target, MlpGradient& grad) {
  if (times.size() != target.size() || times.empty()) throw ConfigError("loss_u: bad grid");
  const double inv_n = 1.0 / static_cast<double>(times.size());
  std::vector<std::array<double, 4>> coeffs(times.size());
  double s = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double e = forward(w, times[i]) - target[i];
    s += e * e;
    coeffs[i] = {2.0 * e * inv_n, 0.0, 0.0, 0.0};
  }
  grad = grad_loss(w, times, coeffs);
  return s * inv_n;
}

/// Mean over the grid of c1 relu(-y') + c2 relu(y'') + c3 relu(-y''').
inline double loss_d(const MlpWeights& w, std::span<const double> times, const PenaltyCoefficients& c) {
  if (times.empty()) throw ConfigError("loss_d: empty grid");
  double s = 0.0;
  for (double t : times) {
    const auto d = forward_derivs(w, t);
    s += c.c1 * std::max(-d.d1(), 0.0) + c.c2 * std::max(d.d2(), 0.0) + c.c3 * std::max(-d.d3(), 0.0);
  }
  return s / static_cast<double>(times.size());
}

inline double loss_d_grad(const MlpWeights& w, std::span<const double> times,
                          const PenaltyCoefficients& c, MlpGradient& grad) {
  if (times.empty()) throw ConfigError("loss_d: empty grid");
  const double inv_n = 1.0 / static_cast<double>(times.size());
  std::vector<std::array<double, 4>> coeffs(times.size());
  double s = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const auto d = forward_derivs(w, times[i]);
    const double p1 = std::max(-d.d1(), 0.0);
    const double p2 = std::max(d.d2(), 0.0);
    const double p3 = std::max(-d.d3(), 0.0);
    s += c.c1 * p1 + c.c2 * p2 + c.c3 * p3;
    coeffs[i] = {0.0, p1 > 0.0 ? -c.c1 * inv_n : 0.0, p2 > 0.0 ? c.c2 * inv_n : 0.0,
                 p3 > 0.0 ? -c.c3 * inv_n : 0.0};
  }
  grad = grad_loss(w, times, coeffs);
  return s * inv_n;
}

/// Fraction of grid points where y' < -tol, y'' > tol, or y''' < -tol.
inline double sign_violation_fraction(const MlpWeights& w, std::span<const double> times, double tol = 1e-6) {
  if (times.empty()) return 0.0;
  std::size_t bad = 0;
  for (double t : times) {
    const auto d = forward_derivs(w, t);
    bad += (d.d1() < -tol || d.d2() > tol || d.d3() < -tol) ? 1 : 0;
  }
  return static_cast<double>(bad) / static_cast<double>(times.size());
}

inline std::vector<double> extrapolate(const MlpWeights& w, std::span<const double> times) {
  std::vector<double> y(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) y[i] = forward(w, times[i]);
  return y;
}

namespace detail {

inline MlpWeights to_time_units(const MlpWeights& scaled, double time_scale) {
  MlpWeights w = scaled;
  for (double& a : w.w1) a /= time_scale;
  return w;
}

}  // namespace detail

/// Stops at the first epoch whose training loss is the lowest seen so far
/// while the validation loss is below stop_tol; otherwise returns the weights
/// with the lowest validation loss after max_epochs.
inline TrainResult train_predictor(const std::function<double(double)>& target, const TrainConfig& cfg) {
  cfg.validate();
  const auto grids = TrainGrids::build(cfg);
  std::vector<double> u_train(grids.train.size()), u_valid(grids.valid.size());
  try {
    for (std::size_t i = 0; i < grids.train.size(); ++i) u_train[i] = target(grids.train[i]);
    for (std::size_t i = 0; i < grids.valid.size(); ++i) u_valid[i] = target(grids.valid[i]);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("train: target does not cover the training and validation windows: ") + e.what());
  }

  MlpWeights scaled = init_weights(cfg.hidden, cfg.seed);
  AdamState data_opt(cfg.hidden), penalty_opt(cfg.hidden);
  data_opt.lr = penalty_opt.lr = cfg.lr;

  TrainResult out;
  auto& rep = out.report;
  rep.seed = cfg.seed;
  rep.loss_train.reserve(cfg.max_epochs);
  rep.loss_valid.reserve(cfg.max_epochs);
  rep.loss_d.reserve(cfg.max_epochs);

  double min_train = std::numeric_limits<double>::infinity();
  double min_valid = std::numeric_limits<double>::infinity();
  MlpWeights best = detail::to_time_units(scaled, cfg.time_scale);
  MlpGradient g;

  auto step = [&](MlpGradient& grad, AdamState& opt) {
    for (double& a : grad.w1) a /= cfg.time_scale;  // chain rule into w1 * time_scale
    adam_step(scaled, grad, opt);
  };

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    MlpWeights w = detail::to_time_units(scaled, cfg.time_scale);
    loss_u_grad(w, grids.train, u_train, g);
    step(g, data_opt);
    ++rep.data_steps;

    w = detail::to_time_units(scaled, cfg.time_scale);
    const double ld = loss_d_grad(w, grids.full, cfg.penalty, g);
    step(g, penalty_opt);
    ++rep.penalty_steps;

    w = detail::to_time_units(scaled, cfg.time_scale);
    const double lt = loss_u(w, grids.train, u_train);
    const double lv = loss_u(w, grids.valid, u_valid);
    if (!std::isfinite(lt) || !std::isfinite(lv) || !std::isfinite(ld) || !w.all_finite()) {
      throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch));
    }
    rep.loss_train.push_back(lt);
    rep.loss_valid.push_back(lv);
    rep.loss_d.push_back(ld);
    rep.epochs = epoch;

    if (lt < min_train) {
      min_train = lt;
      if (lv < cfg.stop_tol) {
        rep.stopped_by_criterion = true;
        rep.returned_epoch = epoch;
        out.weights = w;
        return out;
      }
    }
    if (lv < min_valid) {
      min_valid = lv;
      best = w;
      rep.returned_epoch = epoch;
    }
  }
  out.weights = best;
  return out;
}

inline void write_train_report_csv(const TrainReport& r, std::ostream& os) {
  os << "epoch,loss_t,loss_v,loss_d\n";
  char buf[128];
  for (std::size_t i = 0; i < r.loss_train.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", i + 1, r.loss_train[i], r.loss_valid[i], r.loss_d[i]);
    os << buf;
  }
}

}  // namespace smolnn

#endif  // SMOLNN_PREDICTOR_HPP_
