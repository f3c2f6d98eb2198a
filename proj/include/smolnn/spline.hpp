#ifndef SMOLNN_SPLINE_HPP_
#define SMOLNN_SPLINE_HPP_

#include <gsl/gsl_errno.h>
#include <gsl/gsl_spline.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "smolnn/error.hpp"

namespace smolnn {

/// Natural cubic spline through (x_i, y_i); linear for two knots.
class NaturalSpline {
 public:
  NaturalSpline() = default;

  NaturalSpline(std::span<const double> x, std::span<const double> y) : x_(x.begin(), x.end()) {
    if (x.size() != y.size() || x.size() < 2) {
      throw ConfigError("spline: need at least two knots with matching x/y sizes");
    }
    for (std::size_t i = 1; i < x.size(); ++i) {
      if (!(x[i] > x[i - 1])) throw ConfigError("spline: knots must be strictly increasing");
    }
    gsl_set_error_handler_off();
    const gsl_interp_type* type = x.size() >= 3 ? gsl_interp_cspline : gsl_interp_linear;
    spline_.reset(gsl_spline_alloc(type, x.size()), Free{});
    if (!spline_) throw std::bad_alloc();
    if (gsl_spline_init(spline_.get(), x.data(), y.data(), x.size()) != GSL_SUCCESS) {
      throw NumericalError("spline: initialization failed");
    }
  }

  bool empty() const noexcept { return !spline_; }
  double front() const { return x_.front(); }
  double back() const { return x_.back(); }

  /// Evaluation outside [front, back] (beyond a relative slack of 1e-9) throws.
  double operator()(double x) const {
    if (!spline_) throw ConfigError("spline: not initialized");
    const double slack = 1e-9 * std::max(1.0, std::abs(x_.back()));
    if (x < x_.front() - slack || x > x_.back() + slack) {
      throw ConfigError("spline: x = " + std::to_string(x) + " outside knot range [" +
                        std::to_string(x_.front()) + ", " + std::to_string(x_.back()) + "]");
    }
    x = std::clamp(x, x_.front(), x_.back());
    return gsl_spline_eval(spline_.get(), x, nullptr);
  }

 private:
  struct Free {
    void operator()(gsl_spline* s) const noexcept { gsl_spline_free(s); }
  };
  std::vector<double> x_;
  std::shared_ptr<gsl_spline> spline_;
};

}  // namespace smolnn

#endif  // SMOLNN_SPLINE_HPP_
