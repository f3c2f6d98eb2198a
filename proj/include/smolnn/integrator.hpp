#ifndef SMOLNN_INTEGRATOR_HPP_
#define SMOLNN_INTEGRATOR_HPP_

// Truncated Smoluchowski system with optional unit monomer source:
//
//   dc_k/dt = 1/2 sum_{i+j=k} K(i,j) c_i c_j - c_k sum_{j<=N} K(k,j) c_j + [k == 1] * source
//
// State vectors hold c_k at index k - 1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "smolnn/error.hpp"
#include "smolnn/fft_convolution.hpp"
#include "smolnn/kernels.hpp"

namespace smolnn {

enum class Method { Euler, RK4 };
enum class RhsMode { Direct, Fast };

struct SolverConfig {
  std::size_t n = 0;
  double dt = 0.0;
  std::size_t steps = 0;
  Method method = Method::RK4;
  bool source = false;
  RhsMode rhs_mode = RhsMode::Fast;
  std::size_t store_stride = 1;  // keep every store_stride-th state

  void validate() const {
    detail::require(n >= 1, "solver: n must be >= 1");
    detail::require(std::isfinite(dt) && dt > 0.0, "solver: dt must be > 0");
    detail::require(steps >= 1, "solver: steps must be >= 1");
    detail::require(store_stride >= 1, "solver: store_stride must be >= 1");
  }
};

/// Densities on a uniform time grid starting at t = 0. Row i is the state at
/// time i * dt; row 0 is the initial condition.
struct DensitySeries {
  std::size_t n = 0;
  double dt = 0.0;
  std::vector<double> data;  // row-major, rows() x n

  std::size_t rows() const noexcept { return n == 0 ? 0 : data.size() / n; }
  /// Number of time steps after the initial row.
  std::size_t steps() const noexcept { return rows() == 0 ? 0 : rows() - 1; }
  double time(std::size_t i) const noexcept { return static_cast<double>(i) * dt; }

  std::vector<double> times() const {
    std::vector<double> t(rows());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = time(i);
    return t;
  }

  std::span<const double> row(std::size_t i) const { return {data.data() + i * n, n}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * n, n}; }
  double at(std::size_t i, std::size_t k) const { return data[i * n + (k - 1)]; }

  /// Density of the largest retained size, c_N(t_i).
  double tail(std::size_t i) const { return data[i * n + n - 1]; }

  void append(std::span<const double> state) { data.insert(data.end(), state.begin(), state.end()); }
};

inline std::vector<double> monodisperse(std::size_t n) {
  std::vector<double> c(n, 0.0);
  if (n > 0) c[0] = 1.0;
  return c;
}

/// Total mass sum_k k c_k.
inline double mass(std::span<const double> state) {
  double m = 0.0;
  for (std::size_t k = 0; k < state.size(); ++k) m += static_cast<double>(k + 1) * state[k];
  return m;
}

inline double mass(const DensitySeries& series, std::size_t at_step) {
  if (at_step >= series.rows()) throw ConfigError("mass: step index out of range");
  return mass(series.row(at_step));
}

namespace detail {

inline void require_finite(std::span<const double> state, const char* who) {
  for (double v : state) {
    if (!std::isfinite(v)) throw NumericalError(std::string(who) + ": non-finite state entry");
  }
}

}  // namespace detail

/// Pairwise evaluation, Theta(N^2).
inline void rhs_direct(std::span<const double> state, const KernelSpec& kernel, bool source,
                       std::span<double> out) {
  detail::require_finite(state, "rhs_direct");
  const std::size_t n = state.size();
  if (out.size() != n) throw ConfigError("rhs_direct: output size mismatch");
  for (std::size_t k = 1; k <= n; ++k) {
    double gain = 0.0;
    for (std::size_t i = 1; i < k; ++i) gain += kernel(i, k - i) * state[i - 1] * state[k - i - 1];
    double loss = 0.0;
    for (std::size_t j = 1; j <= n; ++j) loss += kernel(k, j) * state[j - 1];
    out[k - 1] = 0.5 * gain - state[k - 1] * loss;
  }
  if (source && n > 0) out[0] += 1.0;
}

inline std::vector<double> rhs_direct(std::span<const double> state, const KernelSpec& kernel,
                                      bool source) {
  std::vector<double> out(state.size());
  rhs_direct(state, kernel, source, out);
  return out;
}

/// Separable-kernel evaluation in O(R N log N). Owns its FFT plans and
/// scratch, so one instance must not be shared between threads.
class FastRhs {
 public:
  explicit FastRhs(SeparableKernel kernel)
      : kernel_(std::move(kernel)),
        conv_(kernel_.n),
        xa_(kernel_.n),
        xb_(kernel_.n),
        gain_(kernel_.n) {}

  std::size_t size() const noexcept { return kernel_.n; }
  const SeparableKernel& kernel() const noexcept { return kernel_; }

  void operator()(std::span<const double> state, bool source, std::span<double> out) {
    const std::size_t n = kernel_.n;
    if (state.size() != n || out.size() != n) {
      throw ConfigError("rhs_fast: state size " + std::to_string(state.size()) +
                        " does not match factorization size " + std::to_string(n));
    }
    detail::require_finite(state, "rhs_fast");
    std::fill(out.begin(), out.end(), 0.0);
    conv_.reset();
    for (const auto& f : kernel_.factors) {
      double dot = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        xa_[k] = f.a[k] * state[k];
        xb_[k] = f.b[k] * state[k];
        dot += xb_[k];
      }
      for (std::size_t k = 0; k < n; ++k) out[k] -= xa_[k] * dot;
      if (f.a == f.b) {
        conv_.accumulate(xa_, xa_);
      } else {
        conv_.accumulate(xa_, xb_);
      }
    }
    // Lag m of the 0-based convolution pairs sizes summing to m + 2.
    if (n >= 2) {
      conv_.finish(std::span<double>(gain_).first(n - 1));
      for (std::size_t k = 2; k <= n; ++k) out[k - 1] += 0.5 * gain_[k - 2];
    }
    if (source) out[0] += 1.0;
  }

 private:
  SeparableKernel kernel_;
  FftConvolver conv_;
  std::vector<double> xa_;
  std::vector<double> xb_;
  std::vector<double> gain_;
};

inline std::vector<double> rhs_fast(std::span<const double> state, const SeparableKernel& kernel,
                                    bool source) {
  FastRhs rhs(kernel);
  std::vector<double> out(state.size());
  rhs(state, source, out);
  return out;
}

/// Fixed-step march. Negative entries produced by a step are clamped to zero
/// before the state is stored or advanced further.
inline DensitySeries integrate(const SolverConfig& cfg, const KernelSpec& kernel,
                               std::span<const double> initial) {
  cfg.validate();
  if (initial.size() != cfg.n) {
    throw ConfigError("integrate: initial state has " + std::to_string(initial.size()) +
                      " entries, expected " + std::to_string(cfg.n));
  }
  for (double v : initial) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("integrate: initial state must be >= 0");
  }

  const std::size_t n = cfg.n;
  std::unique_ptr<FastRhs> fast;
  if (cfg.rhs_mode == RhsMode::Fast) fast = std::make_unique<FastRhs>(factorize(kernel, n));
  auto eval = [&](std::span<const double> x, std::span<double> dx) {
    if (fast) {
      (*fast)(x, cfg.source, dx);
    } else {
      rhs_direct(x, kernel, cfg.source, dx);
    }
  };

  DensitySeries series;
  series.n = n;
  series.dt = cfg.dt * static_cast<double>(cfg.store_stride);
  series.data.reserve((cfg.steps / cfg.store_stride + 1) * n);
  series.append(initial);

  std::vector<double> c(initial.begin(), initial.end());
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  const double dt = cfg.dt;

  for (std::size_t s = 1; s <= cfg.steps; ++s) {
    try {
      if (cfg.method == Method::Euler) {
        eval(c, k1);
        for (std::size_t i = 0; i < n; ++i) c[i] += dt * k1[i];
      } else {
        eval(c, k1);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = c[i] + 0.5 * dt * k1[i];
        eval(tmp, k2);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = c[i] + 0.5 * dt * k2[i];
        eval(tmp, k3);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = c[i] + dt * k3[i];
        eval(tmp, k4);
        for (std::size_t i = 0; i < n; ++i) {
          c[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
      }
    } catch (const NumericalError&) {
      throw NumericalError("integrate: non-finite state at step " + std::to_string(s) +
                           " (dt too large?)");
    }
    for (double& v : c) {
      if (!std::isfinite(v)) {
        throw NumericalError("integrate: non-finite state at step " + std::to_string(s) +
                             " (dt too large?)");
      }
      v = std::max(v, 0.0);
    }
    if (s % cfg.store_stride == 0) series.append(c);
  }
  return series;
}

}  // namespace smolnn

#endif  // SMOLNN_INTEGRATOR_HPP_
