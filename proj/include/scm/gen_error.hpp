#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "scm/activations.hpp"
#include "scm/order_params.hpp"

namespace scm {

namespace detail {

// Sum of pair averages over a block of the overlap matrix. Diagonal variances
// come from the norms of the two index sets.
template <class Kernel>
double block_sum(const Eigen::MatrixXd& cross, const Eigen::VectorXd& var_row,
                 const Eigen::VectorXd& var_col, Kernel&& kernel) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < cross.rows(); ++i)
    for (Eigen::Index j = 0; j < cross.cols(); ++j)
      sum += kernel(PairCovariance{var_row(i), var_col(j), cross(i, j)});
  return sum;
}

template <class Kernel>
double eps_g_general_with(const FullOverlapMatrix& m, Kernel&& kernel) {
  const double k = m.K(), mm = m.M();
  const Eigen::VectorXd qd = m.Q.diagonal(), td = m.T.diagonal();
  const double ss = block_sum(m.Q, qd, qd, kernel);
  const double st = block_sum(m.R, qd, td, kernel);
  const double tt = block_sum(m.T, td, td, kernel);
  return 0.5 * (ss / k - 2.0 * st / std::sqrt(k * mm) + tt / mm);
}

inline double eps_g_general_unchecked(Activation a, const FullOverlapMatrix& m) {
  return eps_g_general_with(m, [a](const PairCovariance& c) { return pair_average(a, c); });
}

}  // namespace detail

/// epsilon_g = 1/2 < (sigma - tau)^2 > for student and teacher outputs scaled
/// by 1/sqrt(K) and 1/sqrt(M), assembled from pair averages.
inline double eps_g_general(Activation a, const FullOverlapMatrix& m) {
  if (const auto v = validate(m); !v) throw std::invalid_argument("eps_g_general: " + v.diagnostic);
  return detail::eps_g_general_unchecked(a, m);
}

/// Single student unit learning a single teacher unit, overlap R.
inline double eps_g_single(Activation a, double R) {
  using std::numbers::pi;
  if (a == Activation::ErfSigmoid) return 1.0 / 3.0 - (2.0 / pi) * detail::safe_asin(R / 2.0);
  const double r = detail::clamp_unit(R);
  return (2.0 - r) / 4.0 - (std::sqrt(1.0 - r * r) + r * std::asin(r)) / (2.0 * pi);
}

/// Site-symmetric closed form for K = M. K = 1 dispatches to eps_g_single.
inline double eps_g_site(Activation a, const SiteSymmetricState& s) {
  using std::numbers::pi;
  if (s.is_single()) return eps_g_single(a, s.R);
  const double k = s.K;
  if (a == Activation::ErfSigmoid) {
    return 1.0 / 3.0 +
           (k - 1.0) / pi * (detail::safe_asin(s.C / 2.0) - 2.0 * detail::safe_asin(s.S / 2.0)) -
           (2.0 / pi) * detail::safe_asin(s.R / 2.0);
  }
  const double kk = k * k - k;
  return (k + kk / (2.0 * pi) - 2.0 * k * detail::relu_kernel(s.R) + kk * detail::relu_kernel(s.C) -
          2.0 * kk * detail::relu_kernel(s.S)) /
         (2.0 * k);
}

}  // namespace scm
