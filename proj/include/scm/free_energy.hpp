#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "scm/activations.hpp"
#include "scm/gen_error.hpp"
#include "scm/order_params.hpp"

namespace scm {

/// Raised when a state lies on or outside the boundary of the entropy domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Site-symmetric entropy with the additive constant set to zero.
inline std::optional<double> try_entropy_site(const SiteSymmetricState& s) {
  if (!s.interior()) return std::nullopt;
  if (s.is_single()) return 0.5 * std::log(1.0 - s.R * s.R);
  return 0.5 * std::log(s.collective_arg()) + 0.5 * (s.K - 1) * std::log(s.relative_arg());
}

inline double entropy_site(const SiteSymmetricState& s) {
  if (auto v = try_entropy_site(s)) return *v;
  throw DomainError("entropy_site: state outside the entropy domain");
}

/// 1/2 ln det of the assembled overlap matrix, via Cholesky.
inline std::optional<double> try_entropy_full(const FullOverlapMatrix& m) {
  if (!m.shapes_consistent()) return std::nullopt;
  Eigen::LLT<Eigen::MatrixXd> llt(m.assembled());
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Eigen::VectorXd d = llt.matrixL().toDenseMatrix().diagonal();
  if ((d.array() <= 0.0).any()) return std::nullopt;
  return d.array().log().sum();
}

inline double entropy_full(const FullOverlapMatrix& m) {
  if (auto v = try_entropy_full(m)) return *v;
  throw DomainError("entropy_full: overlap matrix is not positive definite");
}

struct FreeEnergyPoint {
  SiteSymmetricState state;
  double alpha = 0.0;
  double beta_f = 0.0;
  double eps_g = 0.0;
  double entropy = 0.0;
};

/// beta f = alpha K eps_g - s, or nullopt outside the entropy domain.
inline std::optional<double> try_beta_f(Activation a, const SiteSymmetricState& s, double alpha) {
  const auto ent = try_entropy_site(s);
  if (!ent) return std::nullopt;
  return alpha * s.K * eps_g_site(a, s) - *ent;
}

inline FreeEnergyPoint beta_f(Activation a, const SiteSymmetricState& s, double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("beta_f: alpha must be non-negative");
  FreeEnergyPoint p;
  p.state = s;
  p.alpha = alpha;
  p.entropy = entropy_site(s);
  p.eps_g = eps_g_site(a, s);
  p.beta_f = alpha * s.K * p.eps_g - p.entropy;
  return p;
}

namespace detail {

struct SiteDerivatives {
  Vec3 grad = Vec3::Zero();
  Mat3 hess = Mat3::Zero();
};

// d/dx asin(x/2) = (4 - x^2)^(-1/2)
inline double half_asin_d1(double x) { return 1.0 / std::sqrt(4.0 - x * x); }
inline double half_asin_d2(double x) { return x / std::pow(4.0 - x * x, 1.5); }

inline SiteDerivatives eps_g_site_derivatives(Activation a, const SiteSymmetricState& s) {
  using std::numbers::pi;
  SiteDerivatives d;
  const double km1 = s.K - 1;
  if (a == Activation::ErfSigmoid) {
    d.grad(0) = -(2.0 / pi) * half_asin_d1(s.R);
    d.hess(0, 0) = -(2.0 / pi) * half_asin_d2(s.R);
    if (!s.is_single()) {
      d.grad(1) = -2.0 * km1 / pi * half_asin_d1(s.S);
      d.hess(1, 1) = -2.0 * km1 / pi * half_asin_d2(s.S);
      d.grad(2) = km1 / pi * half_asin_d1(s.C);
      d.hess(2, 2) = km1 / pi * half_asin_d2(s.C);
    }
    return d;
  }
  d.grad(0) = -relu_kernel_d1(s.R);
  d.hess(0, 0) = -relu_kernel_d2(s.R);
  if (!s.is_single()) {
    d.grad(1) = -km1 * relu_kernel_d1(s.S);
    d.hess(1, 1) = -km1 * relu_kernel_d2(s.S);
    d.grad(2) = 0.5 * km1 * relu_kernel_d1(s.C);
    d.hess(2, 2) = 0.5 * km1 * relu_kernel_d2(s.C);
  }
  return d;
}

inline SiteDerivatives entropy_site_derivatives(const SiteSymmetricState& s) {
  SiteDerivatives d;
  const double km1 = s.K - 1;
  const double u = s.R + km1 * s.S;
  const double A = s.is_single() ? 1.0 - s.R * s.R : s.collective_arg();
  // Collective term 1/2 ln A.
  const Vec3 dA(-2.0 * u, s.is_single() ? 0.0 : -2.0 * u * km1, s.is_single() ? 0.0 : km1);
  Mat3 ddA = Mat3::Zero();
  ddA(0, 0) = -2.0;
  if (!s.is_single()) {
    ddA(0, 1) = ddA(1, 0) = -2.0 * km1;
    ddA(1, 1) = -2.0 * km1 * km1;
  }
  d.grad = dA / (2.0 * A);
  d.hess = (ddA / A - dA * dA.transpose() / (A * A)) / 2.0;
  if (s.is_single()) return d;
  // Degenerate term (K-1)/2 ln B.
  const double dr = s.R - s.S;
  const double B = s.relative_arg();
  const Vec3 dB(-2.0 * dr, 2.0 * dr, -1.0);
  Mat3 ddB = Mat3::Zero();
  ddB(0, 0) = -2.0;
  ddB(0, 1) = ddB(1, 0) = 2.0;
  ddB(1, 1) = -2.0;
  d.grad += km1 * dB / (2.0 * B);
  d.hess += km1 * (ddB / B - dB * dB.transpose() / (B * B)) / 2.0;
  return d;
}

inline void require_interior(const SiteSymmetricState& s, const char* who) {
  if (!s.interior()) throw DomainError(std::string(who) + ": state is not strictly interior");
}

}  // namespace detail

/// Analytic (d/dR, d/dS, d/dC) of beta f. The S and C components vanish for K = 1.
inline Vec3 grad_beta_f(Activation a, const SiteSymmetricState& s, double alpha) {
  detail::require_interior(s, "grad_beta_f");
  const auto e = detail::eps_g_site_derivatives(a, s);
  const auto h = detail::entropy_site_derivatives(s);
  return alpha * s.K * e.grad - h.grad;
}

/// Analytic 3x3 Hessian of beta f in (R, S, C).
inline Mat3 hessian_site(Activation a, const SiteSymmetricState& s, double alpha) {
  detail::require_interior(s, "hessian_site");
  const auto e = detail::eps_g_site_derivatives(a, s);
  const auto h = detail::entropy_site_derivatives(s);
  return alpha * s.K * e.hess - h.hess;
}

/// Eigenvalues in ascending order. For K = 1 only the R-R entry is meaningful.
inline Vec3 hessian_eigenvalues(const Mat3& h) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double min_hessian_eigenvalue(Activation a, const SiteSymmetricState& s, double alpha) {
  const Mat3 h = hessian_site(a, s, alpha);
  if (s.is_single()) return h(0, 0);
  return hessian_eigenvalues(h)(0);
}

/// Stationarity condition for K = 1, solved for alpha as a function of R.
inline double single_unit_stationary_alpha(Activation a, double R) {
  using std::numbers::pi;
  if (a == Activation::ErfSigmoid) return pi * R * std::sqrt(4.0 - R * R) / (2.0 * (1.0 - R * R));
  return 4.0 * pi * R / ((1.0 - R * R) * (pi + 2.0 * std::asin(R)));
}

// ---------------------------------------------------------------------------
// Full (non site-symmetric) free energy over {R_ij, Q_ij (i<j)}.

/// Parameter vector layout: K*K student-teacher overlaps R_ij (row-major),
/// followed by the K(K-1)/2 student-student overlaps Q_ij with i < j.
inline int full_parameter_count(int K) { return K * K + K * (K - 1) / 2; }

inline Eigen::VectorXd full_parameters(const FullOverlapMatrix& m) {
  const int k = m.K();
  Eigen::VectorXd x(full_parameter_count(k));
  int p = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) x(p++) = m.R(i, j);
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) x(p++) = m.Q(i, j);
  return x;
}

inline FullOverlapMatrix full_from_parameters(int K, const Eigen::VectorXd& x) {
  FullOverlapMatrix m;
  m.R.resize(K, K);
  m.Q = Eigen::MatrixXd::Identity(K, K);
  m.T = Eigen::MatrixXd::Identity(K, K);
  int p = 0;
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) m.R(i, j) = x(p++);
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j) m.Q(i, j) = m.Q(j, i) = x(p++);
  return m;
}

/// Columns map d(R, S, C) onto the full parameter vector.
inline Eigen::MatrixXd site_embedding_jacobian(int K) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(full_parameter_count(K), 3);
  int p = 0;
  for (int i = 0; i < K; ++i)
    for (int k = 0; k < K; ++k) j(p++, i == k ? 0 : 1) = 1.0;
  for (; p < j.rows(); ++p) j(p, 2) = 1.0;
  return j;
}

inline std::optional<double> try_beta_f_full(Activation a, const FullOverlapMatrix& m, double alpha) {
  const auto ent = try_entropy_full(m);
  if (!ent) return std::nullopt;
  return alpha * m.K() * detail::eps_g_general_unchecked(a, m) - *ent;
}

/// Central finite-difference Hessian of the full free energy at embed(s).
inline Eigen::MatrixXd full_hessian(Activation a, const SiteSymmetricState& s, double alpha,
                                    double step = 1e-5) {
  detail::require_interior(s, "full_hessian");
  const int k = s.K;
  const Eigen::VectorXd x0 = full_parameters(embed(s));
  const int n = static_cast<int>(x0.size());
  auto f = [&](const Eigen::VectorXd& x) {
    if (auto v = try_beta_f_full(a, full_from_parameters(k, x), alpha)) return *v;
    throw DomainError("full_hessian: finite-difference stencil leaves the entropy domain");
  };
  const double f0 = f(x0);
  Eigen::MatrixXd h(n, n);
  Eigen::VectorXd x = x0;
  for (int i = 0; i < n; ++i) {
    x(i) = x0(i) + step;
    const double fp = f(x);
    x(i) = x0(i) - step;
    const double fm = f(x);
    x(i) = x0(i);
    h(i, i) = (fp - 2.0 * f0 + fm) / (step * step);
    for (int j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (int si : {1, -1})
        for (int sj : {1, -1}) {
          x(i) = x0(i) + si * step;
          x(j) = x0(j) + sj * step;
          acc += si * sj * f(x);
        }
      x(i) = x0(i);
      x(j) = x0(j);
      h(i, j) = h(j, i) = acc / (4.0 * step * step);
    }
  }
  return h;
}

/// Smallest eigenvalue of the full second-derivative matrix at embed(s).
inline double full_stability_spectrum(Activation a, const SiteSymmetricState& s, double alpha,
                                      double step = 1e-5) {
  if (s.is_single()) return min_hessian_eigenvalue(a, s, alpha);
  const Eigen::MatrixXd h = full_hessian(a, s, alpha, step);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace scm
