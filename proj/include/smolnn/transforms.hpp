#ifndef SMOLNN_TRANSFORMS_HPP_
#define SMOLNN_TRANSFORMS_HPP_

// Log-density transform with cutoff, and the anchored log transforms applied
// to the fitted profile parameters. Natural logarithms throughout.

#include <cmath>
#include <string>

#include "smolnn/error.hpp"

namespace smolnn {

struct TransformConfig {
  double eps = 1e-7;

  double log_floor() const { return std::log(eps); }

  void validate() const {
    detail::require(std::isfinite(eps) && eps > 0.0, "transform: eps must be > 0");
  }
};

/// ln(c) above the cutoff, ln(eps) at or below it.
inline double log_density(double c, const TransformConfig& cfg) {
  return c > cfg.eps ? std::log(c) : std::log(cfg.eps);
}

inline double density_from_log(double y, const TransformConfig& cfg) {
  const double floor = std::log(cfg.eps);
  if (!(y >= floor - 1e-12)) {
    throw NumericalError("density_from_log: value " + std::to_string(y) +
                         " is below the cutoff ln(eps) = " + std::to_string(floor));
  }
  return y > floor ? std::exp(y) : cfg.eps;
}

namespace detail {

inline void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw NumericalError(std::string(what) + " must be positive and finite, got " + std::to_string(v));
  }
}

}  // namespace detail

/// -(ln w - ln w0); increasing as the slope decays.
inline double transform_slope(double w, double w0) {
  detail::require_positive(w, "slope");
  detail::require_positive(w0, "slope anchor");
  return -(std::log(w) - std::log(w0));
}

inline double restore_slope(double latent, double w0) {
  detail::require_positive(w0, "slope anchor");
  return w0 * std::exp(-latent);
}

/// ln b - ln b0.
inline double transform_breakpoint(double b, double b0) {
  detail::require_positive(b, "breakpoint");
  detail::require_positive(b0, "breakpoint anchor");
  return std::log(b) - std::log(b0);
}

inline double restore_breakpoint(double latent, double b0) {
  detail::require_positive(b0, "breakpoint anchor");
  return b0 * std::exp(latent);
}

}  // namespace smolnn

#endif  // SMOLNN_TRANSFORMS_HPP_
