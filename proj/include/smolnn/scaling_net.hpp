#ifndef SMOLNN_SCALING_NET_HPP_
#define SMOLNN_SCALING_NET_HPP_

// Piecewise-linear profile families over cluster size k,
//
//   F(k) = sum_j w_j * max(b_j - k, 0) + ln(eps),
//
// fitted per time sample to log-transformed density profiles. M = 1 is the
// slope/breakpoint family (W, B); M = 2 adds a second segment.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smolnn/error.hpp"
#include "smolnn/integrator.hpp"
#include "smolnn/spline.hpp"
#include "smolnn/transforms.hpp"

namespace smolnn {

template <std::size_t M>
struct ReluProfile {
  static_assert(M >= 1);
  static constexpr std::size_t kNeurons = M;
  static constexpr std::size_t kArity = 2 * M;

  std::array<double, M> w{};  // slopes, log-density per size unit
  std::array<double, M> b{};  // breakpoints, size units

  double operator()(double k, double log_floor) const noexcept {
    double y = log_floor;
    for (std::size_t j = 0; j < M; ++j) y += w[j] * std::max(b[j] - k, 0.0);
    return y;
  }

  /// Flat layout: w_1..w_M, b_1..b_M.
  std::array<double, kArity> to_array() const {
    std::array<double, kArity> a{};
    std::copy(w.begin(), w.end(), a.begin());
    std::copy(b.begin(), b.end(), a.begin() + M);
    return a;
  }

  static ReluProfile from_array(const std::array<double, kArity>& a) {
    ReluProfile p;
    std::copy(a.begin(), a.begin() + M, p.w.begin());
    std::copy(a.begin() + M, a.end(), p.b.begin());
    return p;
  }

  friend bool operator==(const ReluProfile&, const ReluProfile&) = default;
};

/// W(t) * max(B(t) - k, 0) + ln(eps).
struct ScalingParams1 : ReluProfile<1> {
  ScalingParams1() = default;
  ScalingParams1(double slope, double breakpoint) : ReluProfile<1>{{slope}, {breakpoint}} {}
  ScalingParams1(const ReluProfile<1>& p) : ReluProfile<1>(p) {}  // NOLINT

  double slope() const noexcept { return w[0]; }
  double breakpoint() const noexcept { return b[0]; }
};

using ScalingParams2 = ReluProfile<2>;

inline ScalingParams2 nest(const ScalingParams1& p, double second_breakpoint) {
  return ScalingParams2{{p.slope(), 0.0}, {p.breakpoint(), second_breakpoint}};
}

template <std::size_t M>
double eval_family(const ReluProfile<M>& p, std::size_t k, const TransformConfig& cfg) {
  if (k == 0) throw ConfigError("eval_family: cluster sizes are 1-based");
  return p(static_cast<double>(k), cfg.log_floor());
}

/// Prefix sums of 1, k, k^2, r, k r, r^2 with r_k = profile_k - ln(eps), so the
/// squared error of any linear piece alpha - beta k over a contiguous range of
/// sizes is evaluated in O(1).
class ProfileMoments {
 public:
  ProfileMoments(std::span<const double> profile, double log_floor) : n_(profile.size()) {
    s_.assign(n_ + 1, {});
    for (std::size_t i = 0; i < n_; ++i) {
      const double k = static_cast<double>(i + 1);
      const double r = profile[i] - log_floor;
      auto& dst = s_[i + 1];
      const auto& src = s_[i];
      dst = {src[0] + k, src[1] + k * k, src[2] + r, src[3] + k * r, src[4] + r * r};
    }
  }

  std::size_t size() const noexcept { return n_; }

  struct Range {
    double count = 0, sk = 0, skk = 0, sr = 0, skr = 0, srr = 0;
  };

  /// Sums over sizes lo..hi inclusive (1-based); empty if hi < lo.
  Range range(std::size_t lo, std::size_t hi) const {
    if (hi < lo) return {};
    const auto& a = s_[lo - 1];
    const auto& z = s_[hi];
    return {static_cast<double>(hi - lo + 1), z[0] - a[0], z[1] - a[1],
            z[2] - a[2], z[3] - a[3], z[4] - a[4]};
  }

  double total_rr() const { return s_[n_][4]; }

  /// Largest size strictly below b, clamped to [0, n].
  std::size_t last_active(double b) const {
    if (!(b > 1.0)) return 0;
    const double c = std::ceil(b) - 1.0;
    return c >= static_cast<double>(n_) ? n_ : static_cast<std::size_t>(c);
  }

 private:
  std::size_t n_;
  std::vector<std::array<double, 5>> s_;
};

namespace detail {

/// Sum of squared residuals of the piece alpha - beta k against r over a range,
/// plus its partial derivatives in (alpha, beta).
struct PieceLoss {
  double q = 0, dq_dalpha = 0, dq_dbeta = 0;
};

inline PieceLoss piece_loss(const ProfileMoments::Range& s, double alpha, double beta) {
  if (s.count == 0) return {};
  const double q = alpha * alpha * s.count - 2.0 * alpha * beta * s.sk + beta * beta * s.skk -
                   2.0 * alpha * s.sr + 2.0 * beta * s.skr + s.srr;
  const double da = 2.0 * (alpha * s.count - beta * s.sk - s.sr);
  const double db = 2.0 * (-alpha * s.sk + beta * s.skk + s.skr);
  return {std::max(q, 0.0), da, db};
}

}  // namespace detail

/// Mean squared error and its (sub)gradient. The ReLU kink contributes zero.
template <std::size_t M>
double profile_loss(const ReluProfile<M>& p, const ProfileMoments& mom,
                    std::array<double, 2 * M>* grad = nullptr) {
  std::array<std::size_t, M> order{};
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return p.b[x] > p.b[y]; });

  if (grad) grad->fill(0.0);
  double total = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  // Walk from the largest breakpoint down; the top j neurons are active on
  // last_active(b_(j+1)) < k <= last_active(b_(j)).
  const std::size_t n = mom.size();
  std::size_t upper = n;
  {
    const std::size_t first = mom.last_active(p.b[order[0]]);
    total += mom.range(first + 1, n).srr;
    upper = first;
  }
  for (std::size_t j = 0; j < M; ++j) {
    const std::size_t idx = order[j];
    alpha += p.w[idx] * p.b[idx];
    beta += p.w[idx];
    const std::size_t lower = j + 1 < M ? mom.last_active(p.b[order[j + 1]]) : 0;
    const auto piece = detail::piece_loss(mom.range(lower + 1, upper), alpha, beta);
    total += piece.q;
    if (grad) {
      for (std::size_t a = 0; a <= j; ++a) {
        const std::size_t act = order[a];
        (*grad)[act] += piece.dq_dalpha * p.b[act] + piece.dq_dbeta;
        (*grad)[M + act] += piece.dq_dalpha * p.w[act];
      }
    }
    upper = lower;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad) {
    for (auto& g : *grad) g *= inv_n;
  }
  return total * inv_n;
}

/// Direct O(N) mean squared error, used for reported fit quality.
template <std::size_t M>
double profile_mse(const ReluProfile<M>& p, std::span<const double> profile, double log_floor) {
  double s = 0.0;
  for (std::size_t i = 0; i < profile.size(); ++i) {
    const double e = p(static_cast<double>(i + 1), log_floor) - profile[i];
    s += e * e;
  }
  return profile.empty() ? 0.0 : s / static_cast<double>(profile.size());
}

enum class FitMethod { Adam, Exact };

struct FitConfig {
  FitMethod method = FitMethod::Adam;
  std::size_t iterations = 2000;
  double lr_start = 3e-3;  // relative to each parameter's scale
  double lr_end = 1e-7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-12;
  std::size_t divergence_window = 10;

  void validate() const {
    detail::require(iterations >= 1, "fit: iterations must be >= 1");
    detail::require(lr_start > 0.0 && lr_end > 0.0, "fit: learning rates must be > 0");
  }
};

template <std::size_t M>
struct ProfileFit {
  ReluProfile<M> params;
  double rmse = 0.0;
};

namespace detail {

inline void check_profile(std::span<const double> profile, double log_floor) {
  if (profile.empty()) throw ConfigError("fit_profile: empty profile");
  for (double v : profile) {
    if (!std::isfinite(v) || v < log_floor - 1e-9) {
      throw ConfigError("fit_profile: profile values must be >= ln(eps)");
    }
  }
}

}  // namespace detail

/// ADAM on the mean squared error, run in coordinates normalized by the
/// magnitude of the starting point, with an exponentially decaying step.
/// Returns the best iterate seen, so the result is never worse than init.
template <std::size_t M>
ProfileFit<M> fit_profile(std::span<const double> profile, const ReluProfile<M>& init,
                          const FitConfig& opt, const TransformConfig& cfg) {
  opt.validate();
  const double floor = cfg.log_floor();
  detail::check_profile(profile, floor);
  const ProfileMoments mom(profile, floor);
  constexpr std::size_t K = 2 * M;

  auto x = init.to_array();
  std::array<double, K> scale{};
  double wmax = 0.0, bmax = 0.0;
  for (std::size_t j = 0; j < M; ++j) {
    wmax = std::max(wmax, std::abs(init.w[j]));
    bmax = std::max(bmax, std::abs(init.b[j]));
  }
  for (std::size_t j = 0; j < M; ++j) {
    scale[j] = init.w[j] != 0.0 ? std::abs(init.w[j]) : (wmax > 0.0 ? wmax : 1.0);
    scale[M + j] = init.b[j] != 0.0 ? std::abs(init.b[j]) : (bmax > 0.0 ? bmax : 1.0);
  }

  std::array<double, K> g{}, m{}, v{};
  const double initial_loss = profile_loss(init, mom);
  double best_loss = initial_loss;
  auto best = x;
  double prev_loss = initial_loss;
  std::size_t rising = 0;
  double b1t = 1.0, b2t = 1.0;
  const double decay =
      opt.iterations > 1 ? std::log(opt.lr_end / opt.lr_start) / static_cast<double>(opt.iterations - 1) : 0.0;

  for (std::size_t it = 0; it < opt.iterations && best_loss > 0.0; ++it) {
    const auto cur = ReluProfile<M>::from_array(x);
    const double loss = profile_loss(cur, mom, &g);
    if (!std::isfinite(loss)) throw NumericalError("fit_profile: non-finite loss");
    if (loss < best_loss) {
      best_loss = loss;
      best = x;
    }
    rising = (loss > initial_loss && loss > prev_loss) ? rising + 1 : 0;
    if (rising >= opt.divergence_window) {
      throw NumericalError("fit_profile: loss rose above its initial value for " +
                           std::to_string(rising) + " consecutive iterations");
    }
    prev_loss = loss;

    const double lr = opt.lr_start * std::exp(decay * static_cast<double>(it));
    b1t *= opt.beta1;
    b2t *= opt.beta2;
    for (std::size_t i = 0; i < K; ++i) {
      const double gi = g[i] * scale[i];
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * gi;
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * gi * gi;
      const double mh = m[i] / (1.0 - b1t);
      const double vh = v[i] / (1.0 - b2t);
      x[i] -= lr * scale[i] * mh / (std::sqrt(vh) + opt.adam_eps);
    }
  }
  const auto last = ReluProfile<M>::from_array(x);
  if (profile_loss(last, mom) < best_loss) best = x;

  ProfileFit<M> out{ReluProfile<M>::from_array(best), 0.0};
  out.rmse = std::sqrt(profile_mse(out.params, profile, floor));
  return out;
}

/// Integer breakpoint scan with the slope solved in closed form for each
/// candidate; ties resolve to the smallest breakpoint.
inline ProfileFit<1> fit_profile_exact(std::span<const double> profile, const TransformConfig& cfg) {
  const double floor = cfg.log_floor();
  detail::check_profile(profile, floor);
  const ProfileMoments mom(profile, floor);
  const std::size_t n = profile.size();
  double best_loss = mom.total_rr();
  ScalingParams1 best(1.0, 1.0);
  for (std::size_t m = 2; m <= n + 1; ++m) {
    // Active sizes k = 1..m-1 with regressor (m - k).
    const auto s = mom.range(1, m - 1);
    const double md = static_cast<double>(m);
    const double xx = md * md * s.count - 2.0 * md * s.sk + s.skk;
    const double xr = md * s.sr - s.skr;
    if (xx <= 0.0) continue;
    const double w = xr / xx;
    if (!(w > 0.0)) continue;
    const ScalingParams1 cand(w, md);
    const double loss = profile_loss(static_cast<const ReluProfile<1>&>(cand), mom);
    if (loss < best_loss * (1.0 - 1e-12) - 1e-300) {
      best_loss = loss;
      best = cand;
    }
  }
  ProfileFit<1> out{best, 0.0};
  out.rmse = std::sqrt(profile_mse(out.params, profile, floor));
  return out;
}

/// Deterministic start for the first sample: the first size sitting at the
/// cutoff as breakpoint, least-squares slope to its left.
inline ScalingParams1 initial_guess(std::span<const double> profile, const TransformConfig& cfg) {
  const double floor = cfg.log_floor();
  detail::check_profile(profile, floor);
  std::size_t bp = profile.size() + 1;
  for (std::size_t i = 0; i < profile.size(); ++i) {
    if (profile[i] <= floor + 1e-12) {
      bp = i + 1;
      break;
    }
  }
  if (bp == 1) return {1.0, 1.0};
  double xr = 0.0, xx = 0.0;
  for (std::size_t k = 1; k < bp; ++k) {
    const double x = static_cast<double>(bp - k);
    xr += x * (profile[k - 1] - floor);
    xx += x * x;
  }
  const double w = xr / xx;
  return {w > 0.0 ? w : 1.0, static_cast<double>(bp)};
}

/// Fitted parameters on the strided sample grid, with natural cubic splines
/// per parameter for dense resampling.
template <std::size_t M>
struct ParamTrajectory {
  std::vector<double> times;
  std::vector<ReluProfile<M>> params;
  std::vector<double> fit_rmse;
  /// For M = 2: RMSE of the nested one-neuron fit at the same samples.
  std::vector<double> baseline_rmse;
  std::array<NaturalSpline, 2 * M> splines;

  std::size_t size() const noexcept { return times.size(); }

  std::vector<double> component(std::size_t c) const {
    std::vector<double> out(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) out[i] = params[i].to_array()[c];
    return out;
  }

  void build_splines() {
    if (times.size() < 2) return;
    for (std::size_t c = 0; c < 2 * M; ++c) {
      const auto y = component(c);
      splines[c] = NaturalSpline(times, y);
    }
  }

  ReluProfile<M> interpolate(double t) const {
    std::array<double, 2 * M> a{};
    for (std::size_t c = 0; c < 2 * M; ++c) a[c] = splines[c](t);
    return ReluProfile<M>::from_array(a);
  }
};

inline std::vector<double> log_profile(std::span<const double> state, const TransformConfig& cfg) {
  std::vector<double> p(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) p[i] = log_density(state[i], cfg);
  return p;
}

/// Sample rows stride, 2 stride, ... whose time is >= start_time.
inline std::vector<std::size_t> strided_rows(const DensitySeries& series, std::size_t stride,
                                             double start_time = 0.0) {
  std::vector<std::size_t> rows;
  for (std::size_t i = stride; i < series.rows(); i += stride) {
    if (series.time(i) >= start_time - 0.5 * series.dt) rows.push_back(i);
  }
  return rows;
}

/// Sequential fit over strided samples, each warm-started from its predecessor.
/// For M = 2 each sample is also fitted with the one-neuron family, and the
/// two-neuron fit starts from whichever of (previous two-neuron result,
/// nested one-neuron result) ends with the lower loss.
template <std::size_t M>
ParamTrajectory<M> fit_trajectory(const DensitySeries& series, std::size_t stride,
                                  const TransformConfig& cfg, const FitConfig& opt,
                                  double start_time = 0.0) {
  static_assert(M == 1 || M == 2, "fit_trajectory supports one- and two-neuron families");
  cfg.validate();
  if (stride == 0) throw ConfigError("fit_trajectory: stride must be >= 1");
  if (series.rows() < 2) throw ConfigError("fit_trajectory: empty series");
  if (M == 2 && opt.method == FitMethod::Exact) {
    throw ConfigError("fit_trajectory: exact fitting is only available for the one-neuron family");
  }
  const auto rows = strided_rows(series, stride, start_time);
  if (rows.empty()) throw ConfigError("fit_trajectory: no samples at or after the start time");

  ParamTrajectory<M> traj;
  std::optional<ScalingParams1> prev1;
  std::optional<ScalingParams2> prev2;
  for (auto row : rows) {
    const auto profile = log_profile(series.row(row), cfg);
    ProfileFit<1> one;
    if (opt.method == FitMethod::Exact) {
      one = fit_profile_exact(profile, cfg);
    } else {
      const ReluProfile<1> init = prev1 ? *prev1 : initial_guess(profile, cfg);
      one = fit_profile<1>(profile, init, opt, cfg);
    }
    prev1 = ScalingParams1(one.params);
    traj.times.push_back(series.time(row));
    if constexpr (M == 1) {
      traj.params.push_back(one.params);
      traj.fit_rmse.push_back(one.rmse);
    } else {
      auto nested = fit_profile<2>(profile, nest(*prev1, 0.5 * prev1->breakpoint()), opt, cfg);
      if (prev2) {
        auto warm = fit_profile<2>(profile, *prev2, opt, cfg);
        if (warm.rmse < nested.rmse) nested = warm;
      }
      if (!(nested.rmse <= one.rmse)) nested = {nest(*prev1, 0.5 * prev1->breakpoint()), one.rmse};
      prev2 = nested.params;
      traj.params.push_back(nested.params);
      traj.fit_rmse.push_back(nested.rmse);
      traj.baseline_rmse.push_back(one.rmse);
    }
  }
  traj.build_splines();
  return traj;
}

}  // namespace smolnn

#endif  // SMOLNN_SCALING_NET_HPP_
