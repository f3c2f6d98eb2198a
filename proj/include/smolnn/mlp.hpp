#ifndef SMOLNN_MLP_HPP_
#define SMOLNN_MLP_HPP_

// Scalar-in, scalar-out sigmoid network
//
//   y(t) = sum_j w2_j * sigma(w1_j * t + b1_j) + b2
//
// with closed-form input derivatives up to third order and their exact
// weight gradients.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "smolnn/error.hpp"

namespace smolnn {

struct MlpWeights {
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;

  MlpWeights() = default;
  explicit MlpWeights(std::size_t hidden) : w1(hidden, 0.0), b1(hidden, 0.0), w2(hidden, 0.0) {}

  std::size_t hidden() const noexcept { return w1.size(); }
  std::size_t param_count() const noexcept { return 3 * hidden() + 1; }

  bool all_finite() const {
    for (const auto* v : {&w1, &b1, &w2}) {
      for (double x : *v) {
        if (!std::isfinite(x)) return false;
      }
    }
    return std::isfinite(b2);
  }

  /// Applies f(param&, other_param) over both weight sets in a fixed order.
  template <class F>
  void zip(const MlpWeights& other, F&& f) {
    for (std::size_t j = 0; j < hidden(); ++j) f(w1[j], other.w1[j]);
    for (std::size_t j = 0; j < hidden(); ++j) f(b1[j], other.b1[j]);
    for (std::size_t j = 0; j < hidden(); ++j) f(w2[j], other.w2[j]);
    f(b2, other.b2);
  }

  friend bool operator==(const MlpWeights&, const MlpWeights&) = default;
};

/// Gradients share the weight layout.
using MlpGradient = MlpWeights;

/// Uniform in [-0.5, 0.5] from a seeded 64-bit Mersenne twister.
inline MlpWeights init_weights(std::size_t hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  MlpWeights w(hidden);
  for (std::size_t j = 0; j < hidden; ++j) w.w1[j] = u(rng);
  for (std::size_t j = 0; j < hidden; ++j) w.b1[j] = u(rng);
  for (std::size_t j = 0; j < hidden; ++j) w.w2[j] = u(rng);
  w.b2 = u(rng);
  return w;
}

/// sigma and its derivatives of order 0..4.
inline std::array<double, 5> sigmoid_derivs(double z) {
  const double s = 1.0 / (1.0 + std::exp(-z));
  const double s1 = s * (1.0 - s);
  const double u = 1.0 - 2.0 * s;
  const double s2 = s1 * u;
  const double s3 = s2 * u - 2.0 * s1 * s1;
  const double s4 = s3 * u - 6.0 * s1 * s2;
  return {s, s1, s2, s3, s4};
}

/// y and its first three derivatives in t.
struct Derivs {
  std::array<double, 4> d{};

  double y() const { return d[0]; }
  double d1() const { return d[1]; }
  double d2() const { return d[2]; }
  double d3() const { return d[3]; }
};

inline Derivs forward_derivs(const MlpWeights& w, double t) {
  Derivs out;
  out.d[0] = w.b2;
  for (std::size_t j = 0; j < w.hidden(); ++j) {
    const auto s = sigmoid_derivs(w.w1[j] * t + w.b1[j]);
    double p = 1.0;
    for (std::size_t n = 0; n < 4; ++n) {
      out.d[n] += w.w2[j] * p * s[n];
      p *= w.w1[j];
    }
  }
  return out;
}

inline double forward(const MlpWeights& w, double t) {
  double y = w.b2;
  for (std::size_t j = 0; j < w.hidden(); ++j) {
    y += w.w2[j] * (1.0 / (1.0 + std::exp(-(w.w1[j] * t + w.b1[j]))));
  }
  return y;
}

/// Gradient of sum_i sum_n coeffs[i][n] * y^(n)(times[i]) with respect to
/// every weight; coeffs are the loss's partials in y, y', y'', y'''.
inline MlpGradient grad_loss(const MlpWeights& w, std::span<const double> times,
                             std::span<const std::array<double, 4>> coeffs) {
  if (times.size() != coeffs.size()) throw ConfigError("grad_loss: times/coeffs size mismatch");
  MlpGradient g(w.hidden());
  for (std::size_t i = 0; i < times.size(); ++i) {
    const auto& c = coeffs[i];
    const double t = times[i];
    g.b2 += c[0];
    for (std::size_t j = 0; j < w.hidden(); ++j) {
      const double a = w.w1[j];
      const auto s = sigmoid_derivs(a * t + w.b1[j]);
      double gw1 = 0.0, gb1 = 0.0, gw2 = 0.0;
      double pn = 1.0;     // a^n
      double pnm1 = 0.0;   // n * a^(n-1)
      for (std::size_t n = 0; n < 4; ++n) {
        if (c[n] != 0.0) {
          gw2 += c[n] * pn * s[n];
          gb1 += c[n] * w.w2[j] * pn * s[n + 1];
          gw1 += c[n] * w.w2[j] * (pnm1 * s[n] + pn * s[n + 1] * t);
        }
        pnm1 = static_cast<double>(n + 1) * pn;
        pn *= a;
      }
      g.w1[j] += gw1;
      g.b1[j] += gb1;
      g.w2[j] += gw2;
    }
  }
  return g;
}

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  MlpWeights m;
  MlpWeights v;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t hidden) : m(hidden), v(hidden) {}
};

/// Bias-corrected ADAM update in place.
inline void adam_step(MlpWeights& w, const MlpGradient& g, AdamState& s) {
  if (g.hidden() != w.hidden() || s.m.hidden() != w.hidden() || s.v.hidden() != w.hidden()) {
    throw ConfigError("adam_step: shape mismatch");
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  auto update = [&](double& p, double gi, double& m, double& v) {
    m = s.beta1 * m + (1.0 - s.beta1) * gi;
    v = s.beta2 * v + (1.0 - s.beta2) * gi * gi;
    p -= s.lr * (m / c1) / (std::sqrt(v / c2) + s.eps);
  };
  for (std::size_t j = 0; j < w.hidden(); ++j) update(w.w1[j], g.w1[j], s.m.w1[j], s.v.w1[j]);
  for (std::size_t j = 0; j < w.hidden(); ++j) update(w.b1[j], g.b1[j], s.m.b1[j], s.v.b1[j]);
  for (std::size_t j = 0; j < w.hidden(); ++j) update(w.w2[j], g.w2[j], s.m.w2[j], s.v.w2[j]);
  update(w.b2, g.b2, s.m.b2, s.v.b2);
}

/// Integrates the logistic system dx_j/dt = w1_j x_j (1 - x_j), x_j(0) = sigma(b1_j)
/// with RK4 and returns max_t |sum_j w2_j x_j(t) + b2 - y(t)| over the step grid.
inline double verify_ode_equivalence(const MlpWeights& w, double horizon, double dt) {
  detail::require(dt > 0.0 && horizon >= 0.0, "verify_ode_equivalence: need dt > 0, horizon >= 0");
  for (double b : w.b1) {
    if (!std::isfinite(b)) throw ConfigError("verify_ode_equivalence: hidden biases must be finite");
  }
  const std::size_t h = w.hidden();
  std::vector<double> x(h);
  for (std::size_t j = 0; j < h; ++j) x[j] = 1.0 / (1.0 + std::exp(-w.b1[j]));
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));

  auto readout = [&] {
    double y = w.b2;
    for (std::size_t j = 0; j < h; ++j) y += w.w2[j] * x[j];
    return y;
  };
  double worst = std::abs(readout() - forward(w, 0.0));
  for (std::size_t s = 1; s <= steps; ++s) {
    for (std::size_t j = 0; j < h; ++j) {
      const double a = w.w1[j];
      auto f = [a](double v) { return a * v * (1.0 - v); };
      const double k1 = f(x[j]);
      const double k2 = f(x[j] + 0.5 * dt * k1);
      const double k3 = f(x[j] + 0.5 * dt * k2);
      const double k4 = f(x[j] + dt * k3);
      x[j] += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    worst = std::max(worst, std::abs(readout() - forward(w, static_cast<double>(s) * dt)));
  }
  return worst;
}

/// Hidden bias whose sigmoid equals the initial value x0 of the logistic ODE.
inline double bias_from_initial_value(double x0) {
  if (!(x0 > 0.0 && x0 < 1.0)) throw ConfigError("bias_from_initial_value: x0 must lie in (0, 1)");
  return -std::log(1.0 / x0 - 1.0);
}

/// Lipschitz constants of the logistic system and its readout for weights
/// bounded by a1 (output) and a2 (input) with n1 hidden units.
struct CorollaryConstants {
  double l_x = 0.0;
  double l_theta = 0.0;
  double l_h = 0.0;
  double l_h_theta = 0.0;
};

inline CorollaryConstants corollary_constants(double a1, double a2, std::size_t n1) {
  detail::require(a1 > 0.0 && a2 > 0.0 && n1 >= 1, "corollary_constants: need a1, a2 > 0, n1 >= 1");
  const double r = std::sqrt(static_cast<double>(n1));
  return {a2 * r, r / 4.0, a1 * r, std::sqrt(static_cast<double>(n1) + 1.0)};
}

// Flat CSV "layer,index,value" with layers w1, b1, w2, b2.

inline void write_weights_csv(const MlpWeights& w, std::ostream& os) {
  os << "layer,index,value\n";
  char buf[64];
  auto put = [&](const char* layer, std::size_t i, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << layer << ',' << i << ',' << buf << '\n';
  };
  for (std::size_t j = 0; j < w.hidden(); ++j) put("w1", j, w.w1[j]);
  for (std::size_t j = 0; j < w.hidden(); ++j) put("b1", j, w.b1[j]);
  for (std::size_t j = 0; j < w.hidden(); ++j) put("w2", j, w.w2[j]);
  put("b2", 0, w.b2);
}

inline MlpWeights read_weights_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "layer,index,value") {
    throw IoError("weights csv: missing header");
  }
  std::vector<std::pair<std::string, double>> rows;
  std::vector<std::size_t> idx;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string layer, index, value;
    if (!std::getline(ss, layer, ',') || !std::getline(ss, index, ',') || !std::getline(ss, value)) {
      throw IoError("weights csv: malformed row '" + line + "'");
    }
    try {
      idx.push_back(std::stoul(index));
      rows.emplace_back(layer, std::stod(value));
    } catch (const std::exception&) {
      throw IoError("weights csv: malformed row '" + line + "'");
    }
  }
  std::size_t h = 0;
  for (const auto& [layer, v] : rows) h += layer == "w1";
  MlpWeights w(h);
  std::size_t seen = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& layer = rows[r].first;
    const std::size_t i = idx[r];
    std::vector<double>* dst = layer == "w1" ? &w.w1 : layer == "b1" ? &w.b1 : layer == "w2" ? &w.w2 : nullptr;
    if (dst) {
      if (i >= h) throw IoError("weights csv: index out of range");
      (*dst)[i] = rows[r].second;
    } else if (layer == "b2" && i == 0) {
      w.b2 = rows[r].second;
    } else {
      throw IoError("weights csv: unknown layer '" + layer + "'");
    }
    ++seen;
  }
  if (seen != w.param_count()) throw IoError("weights csv: wrong number of parameters");
  return w;
}

}  // namespace smolnn

#endif  // SMOLNN_MLP_HPP_
