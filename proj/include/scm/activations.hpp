#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

namespace scm {

enum class Activation { ErfSigmoid, ReLU };

inline std::string_view to_string(Activation a) {
  return a == Activation::ErfSigmoid ? "erf" : "relu";
}

inline std::optional<Activation> parse_activation(std::string_view name) {
  if (name == "erf" || name == "sigmoid" || name == "ErfSigmoid") return Activation::ErfSigmoid;
  if (name == "relu" || name == "ReLU") return Activation::ReLU;
  return std::nullopt;
}

/// g(x) = 1 + erf(x/sqrt(2)) or g(x) = max(0, x).
inline double eval(Activation a, double x) {
  if (a == Activation::ErfSigmoid) return 1.0 + std::erf(x / std::numbers::sqrt2);
  return x > 0.0 ? x : 0.0;
}

/// Covariance of two zero-mean jointly Gaussian local potentials.
struct PairCovariance {
  double c11 = 1.0;
  double c22 = 1.0;
  double c12 = 0.0;

  bool valid(double tol = 1e-12) const {
    return c11 > 0.0 && c22 > 0.0 && c12 * c12 <= c11 * c22 * (1.0 + tol);
  }
};

namespace detail {

inline double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

inline double safe_asin(double x) { return std::asin(clamp_unit(x)); }

// Unit-variance ReLU kernel E[max(0,x)max(0,y)] with correlation r, plus its
// first two derivatives in r. These are the building blocks of the
// site-symmetric free energy.
inline double relu_kernel(double r) {
  r = clamp_unit(r);
  return r / 4.0 + (std::sqrt(1.0 - r * r) + r * std::asin(r)) / (2.0 * std::numbers::pi);
}

inline double relu_kernel_d1(double r) {
  return 0.25 + safe_asin(r) / (2.0 * std::numbers::pi);
}

inline double relu_kernel_d2(double r) {
  return 1.0 / (2.0 * std::numbers::pi * std::sqrt(1.0 - r * r));
}

}  // namespace detail

/// E[g(x) g(y)] for (x, y) ~ N(0, c), in closed form.
inline double pair_average(Activation a, const PairCovariance& c) {
  using std::numbers::pi;
  if (a == Activation::ErfSigmoid) {
    const double arg = c.c12 / std::sqrt((1.0 + c.c11) * (1.0 + c.c22));
    return 1.0 + (2.0 / pi) * detail::safe_asin(arg);
  }
  const double det = std::max(0.0, c.c11 * c.c22 - c.c12 * c.c12);
  const double arg = c.c12 / std::sqrt(c.c11 * c.c22);
  return c.c12 / 4.0 + (std::sqrt(det) + c.c12 * detail::safe_asin(arg)) / (2.0 * pi);
}

}  // namespace scm
