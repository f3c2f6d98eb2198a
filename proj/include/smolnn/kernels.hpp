#ifndef SMOLNN_KERNELS_HPP_
#define SMOLNN_KERNELS_HPP_

// Homogeneous aggregation kernels K(i,j) and their exact separable factorizations.

#include <cmath>
#include <cstddef>
#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "smolnn/error.hpp"

namespace smolnn {

enum class KernelForm { GeneralHomogeneous, Constant, Product, Sum };

/// Kernel of the family i^nu j^mu + i^mu j^nu and its special cases.
/// Constant is normalized to K = 1 (the homogeneous form with nu = mu = 0 gives 2).
struct KernelSpec {
  KernelForm form = KernelForm::Constant;
  double nu = 0.0;
  double mu = 0.0;

  static KernelSpec constant() { return {KernelForm::Constant, 0.0, 0.0}; }
  static KernelSpec product(double mu) { return {KernelForm::Product, 0.0, mu}; }
  static KernelSpec sum(double nu) { return {KernelForm::Sum, nu, 0.0}; }
  static KernelSpec homogeneous(double nu, double mu) {
    return {KernelForm::GeneralHomogeneous, nu, mu};
  }

  /// Rate for cluster sizes i, j >= 1. No bounds check; see evaluate().
  double operator()(std::size_t i, std::size_t j) const noexcept {
    const double x = static_cast<double>(i);
    const double y = static_cast<double>(j);
    switch (form) {
      case KernelForm::Constant:
        return 1.0;
      case KernelForm::Product:
        return std::pow(x * y, mu);
      case KernelForm::Sum:
        return std::pow(x, nu) + std::pow(y, nu);
      case KernelForm::GeneralHomogeneous:
        break;
    }
    // Summed in a fixed order so that K(i,j) == K(j,i) bitwise.
    const double a = std::pow(x, nu) * std::pow(y, mu);
    const double b = std::pow(x, mu) * std::pow(y, nu);
    return a < b ? a + b : b + a;
  }
};

inline double evaluate(const KernelSpec& spec, std::size_t i, std::size_t j) {
  if (i == 0 || j == 0) throw ConfigError("kernel: cluster sizes are 1-based, got 0");
  return spec(i, j);
}

/// One rank-one term a(i) * b(j); vectors are indexed by size - 1.
struct KernelFactor {
  std::vector<double> a;
  std::vector<double> b;
};

/// K(i,j) = sum_r a_r(i) b_r(j) for i, j <= n.
struct SeparableKernel {
  std::size_t n = 0;
  std::vector<KernelFactor> factors;

  std::size_t rank() const noexcept { return factors.size(); }

  double reconstruct(std::size_t i, std::size_t j) const noexcept {
    double s = 0.0;
    for (const auto& f : factors) s += f.a[i - 1] * f.b[j - 1];
    return s;
  }
};

namespace detail {

inline std::vector<double> power_table(std::size_t n, double p, double scale = 1.0) {
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = scale * std::pow(static_cast<double>(k + 1), p);
  return v;
}

}  // namespace detail

inline SeparableKernel factorize(const KernelSpec& spec, std::size_t n_max) {
  if (n_max == 0) throw ConfigError("factorize: n_max must be >= 1");
  SeparableKernel out;
  out.n = n_max;
  const std::vector<double> ones(n_max, 1.0);
  switch (spec.form) {
    case KernelForm::Constant:
      out.factors.push_back({ones, ones});
      break;
    case KernelForm::Product: {
      auto p = detail::power_table(n_max, spec.mu);
      out.factors.push_back({p, p});
      break;
    }
    case KernelForm::Sum: {
      auto p = detail::power_table(n_max, spec.nu);
      out.factors.push_back({p, ones});
      out.factors.push_back({ones, p});
      break;
    }
    case KernelForm::GeneralHomogeneous:
      if (spec.nu == spec.mu) {
        auto p = detail::power_table(n_max, spec.nu, std::sqrt(2.0));
        out.factors.push_back({p, p});
      } else {
        auto pn = detail::power_table(n_max, spec.nu);
        auto pm = detail::power_table(n_max, spec.mu);
        out.factors.push_back({pn, pm});
        out.factors.push_back({pm, pn});
      }
      break;
  }
  return out;
}

namespace detail {

inline double parse_double(std::string_view s, std::string_view whole) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v)) {
    throw ConfigError("kernel: cannot parse exponent '" + std::string(s) + "' in '" +
                      std::string(whole) + "'");
  }
  return v;
}

}  // namespace detail

/// Parses "const" | "product:<mu>" | "sum:<nu>" | "hom:<nu>:<mu>".
inline KernelSpec parse_kernel(std::string_view text) {
  if (text == "const") return KernelSpec::constant();
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw ConfigError("kernel: unknown kernel '" + std::string(text) + "'");
  }
  const auto head = text.substr(0, colon);
  const auto rest = text.substr(colon + 1);
  if (head == "product") return KernelSpec::product(detail::parse_double(rest, text));
  if (head == "sum") return KernelSpec::sum(detail::parse_double(rest, text));
  if (head == "hom") {
    const auto c2 = rest.find(':');
    if (c2 == std::string_view::npos) {
      throw ConfigError("kernel: 'hom' needs two exponents, got '" + std::string(text) + "'");
    }
    return KernelSpec::homogeneous(detail::parse_double(rest.substr(0, c2), text),
                                   detail::parse_double(rest.substr(c2 + 1), text));
  }
  throw ConfigError("kernel: unknown kernel '" + std::string(text) + "'");
}

inline std::string to_string(const KernelSpec& spec) {
  auto num = [](double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
  };
  switch (spec.form) {
    case KernelForm::Constant:
      return "const";
    case KernelForm::Product:
      return "product:" + num(spec.mu);
    case KernelForm::Sum:
      return "sum:" + num(spec.nu);
    case KernelForm::GeneralHomogeneous:
      break;
  }
  return "hom:" + num(spec.nu) + ":" + num(spec.mu);
}

}  // namespace smolnn

#endif  // SMOLNN_KERNELS_HPP_
