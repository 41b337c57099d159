#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "scm/activations.hpp"
#include "scm/order_params.hpp"

namespace scm::oracle {

struct OracleEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long long samples = 0;
};

/// Running mean and variance (Welford).
class Accumulator {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }

  OracleEstimate estimate() const {
    OracleEstimate e{mean_, 0.0, n_};
    if (n_ > 1) e.std_error = std::sqrt(m2_ / static_cast<double>(n_ - 1) / static_cast<double>(n_));
    return e;
  }

 private:
  long long n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// ---------------------------------------------------------------------------
// Gauss rules (Golub-Welsch)

struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

// Eigen-decomposition of the symmetric Jacobi matrix with the given
// recurrence coefficients; mu0 is the total mass of the weight function.
inline GaussRule golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& off, double mu0) {
  const Eigen::Index n = diag.size();
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  j.diagonal() = diag;
  for (Eigen::Index i = 0; i + 1 < n; ++i) j(i, i + 1) = j(i + 1, i) = off(i);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  GaussRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    r.nodes[i] = es.eigenvalues()(i);
    const double v = es.eigenvectors()(0, i);
    r.weights[i] = mu0 * v * v;
  }
  return r;
}

}  // namespace detail

/// Probabilists' Gauss-Hermite: sum w_i f(x_i) ~ E[f(z)], z ~ N(0, 1).
inline GaussRule gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: n must be positive");
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n), o(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) o(k - 1) = std::sqrt(static_cast<double>(k));
  return detail::golub_welsch(d, o, 1.0);
}

/// Gauss-Legendre on [lo, hi] with unit weight.
inline GaussRule gauss_legendre(int n, double lo = -1.0, double hi = 1.0) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n), o(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) o(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
  GaussRule r = detail::golub_welsch(d, o, 2.0);
  const double h = 0.5 * (hi - lo), c = 0.5 * (hi + lo);
  for (int i = 0; i < n; ++i) {
    r.nodes[i] = c + h * r.nodes[i];
    r.weights[i] *= h;
  }
  return r;
}

/// Generalized Gauss-Laguerre, weight u^a e^{-u} on [0, inf).
inline GaussRule gauss_laguerre(int n, double a = 0.0) {
  if (n < 1 || a <= -1.0) throw std::invalid_argument("gauss_laguerre: bad parameters");
  Eigen::VectorXd d(n), o(std::max(n - 1, 0));
  for (int k = 0; k < n; ++k) d(k) = 2.0 * k + 1.0 + a;
  for (int k = 1; k < n; ++k) o(k - 1) = std::sqrt(k * (k + a));
  return detail::golub_welsch(d, o, std::tgamma(a + 1.0));
}

// ---------------------------------------------------------------------------
// Pair averages by quadrature

namespace detail {

// E[f(z)] over z ~ N(0,1) restricted to z > 0, via u = z^2/2 and a
// Laguerre rule with a = -1/2.
template <class F>
double half_line_gaussian(F&& f, int n) {
  const GaussRule r = gauss_laguerre(n, -0.5);
  double s = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * f(std::sqrt(2.0 * r.nodes[i]));
  return s / (2.0 * std::sqrt(std::numbers::pi));
}

inline double quad_degenerate(Activation a, const PairCovariance& c, int nodes) {
  const double sx = std::sqrt(c.c11), sy = std::copysign(std::sqrt(c.c22), c.c12);
  if (a == Activation::ErfSigmoid) {
    const GaussRule r = gauss_hermite(nodes);
    double s = 0.0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i)
      s += r.weights[i] * eval(a, sx * r.nodes[i]) * eval(a, sy * r.nodes[i]);
    return s;
  }
  if (sy < 0.0) return 0.0;
  return half_line_gaussian([&](double z) { return sx * z * sy * z; }, nodes);
}

// ReLU in polar coordinates of the whitened pair: both potentials are
// r times a function of the angle, the radial integral is exact and the
// angular integrand is smooth on the wedge where both are positive.
inline double quad_relu_wedge(const PairCovariance& c, int nodes) {
  using std::numbers::pi;
  const double l11 = std::sqrt(c.c11);
  const double l21 = c.c12 / l11;
  const double l22 = std::sqrt(std::max(0.0, c.c22 - l21 * l21));
  // x = l11 r cos t is positive on (-pi/2, pi/2) and
  // y = r (l21 cos t + l22 sin t) = r rho cos(t - psi) on (psi - pi/2, psi + pi/2),
  // with psi in (0, pi) since l22 > 0.
  const double psi = std::atan2(l22, l21);
  const GaussRule r = gauss_legendre(nodes, psi - pi / 2, pi / 2);
  double s = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    const double t = r.nodes[i];
    const double x = l11 * std::cos(t), y = l21 * std::cos(t) + l22 * std::sin(t);
    s += r.weights[i] * std::max(0.0, x) * std::max(0.0, y);
  }
  // Radial factor: int_0^inf r^3 e^{-r^2/2} dr = 2.
  return s * 2.0 / (2.0 * pi);
}

}  // namespace detail

/// E[g(x) g(y)] by quadrature. Sigmoidal pairs use a tensor Gauss-Hermite
/// rule after whitening; ReLU pairs integrate the positive wedge in polar
/// coordinates. Degenerate covariances reduce to one dimension.
inline double quad_pair_average(Activation a, const PairCovariance& c, int nodes = 96) {
  if (!c.valid()) throw std::invalid_argument("quad_pair_average: invalid covariance");
  const double det = c.c11 * c.c22 - c.c12 * c.c12;
  if (det <= 1e-14 * c.c11 * c.c22) return detail::quad_degenerate(a, c, nodes);
  if (a == Activation::ReLU) return detail::quad_relu_wedge(c, nodes);
  const GaussRule r = gauss_hermite(nodes);
  const double l11 = std::sqrt(c.c11), l21 = c.c12 / l11, l22 = std::sqrt(c.c22 - l21 * l21);
  double s = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    const double gx = eval(a, l11 * r.nodes[i]);
    double inner = 0.0;
    for (std::size_t j = 0; j < r.nodes.size(); ++j) inner += r.weights[j] * eval(a, l21 * r.nodes[i] + l22 * r.nodes[j]);
    s += r.weights[i] * gx * inner;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Sampling oracles

namespace detail {

// Square-root factor L with L L^T = C for a PSD matrix.
inline Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& c) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal();
}

}  // namespace detail

/// Monte Carlo estimate of 1/2 <(sigma - tau)^2> with outputs scaled by
/// 1/sqrt(K) and 1/sqrt(M), sampling the K + M local potentials directly.
inline OracleEstimate mc_eps_g(Activation a, const FullOverlapMatrix& m, long long samples, std::uint64_t seed) {
  if (const auto v = validate(m); !v) throw std::invalid_argument("mc_eps_g: " + v.diagnostic);
  const int k = m.K(), mm = m.M(), d = k + mm;
  const Eigen::MatrixXd L = detail::psd_factor(m.assembled());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(d), x(d);
  const double sk = 1.0 / std::sqrt(static_cast<double>(k)), sm = 1.0 / std::sqrt(static_cast<double>(mm));
  Accumulator acc;
  for (long long n = 0; n < samples; ++n) {
    for (int i = 0; i < d; ++i) z(i) = normal(rng);
    x.noalias() = L * z;
    double tau = 0.0, sigma = 0.0;
    for (int i = 0; i < mm; ++i) tau += eval(a, x(i));
    for (int i = mm; i < d; ++i) sigma += eval(a, x(i));
    const double diff = sigma * sk - tau * sm;
    acc.add(0.5 * diff * diff);
  }
  return acc.estimate();
}

/// Sampling estimate of E[g(x) g(y)].
inline OracleEstimate mc_pair_average(Activation a, const PairCovariance& c, long long samples, std::uint64_t seed) {
  if (!c.valid()) throw std::invalid_argument("mc_pair_average: invalid covariance");
  const double l11 = std::sqrt(c.c11), l21 = c.c12 / l11, l22 = std::sqrt(std::max(0.0, c.c22 - l21 * l21));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Accumulator acc;
  for (long long n = 0; n < samples; ++n) {
    const double z1 = normal(rng), z2 = normal(rng);
    acc.add(eval(a, l11 * z1) * eval(a, l21 * z1 + l22 * z2));
  }
  return acc.estimate();
}

// ---------------------------------------------------------------------------
// Weak and negative alignment

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double intercept_se = 0.0;
  double slope_se = 0.0;
  long long samples = 0;
};

/// Ordinary least squares of max(0, x) on x* for unit-variance (x, x*) with
/// covariance S.
inline LinearFit conditional_response(double S, long long samples, std::uint64_t seed) {
  if (std::abs(S) > 0.2) throw std::invalid_argument("conditional_response: |S| must be at most 0.2");
  if (samples < 3) throw std::invalid_argument("conditional_response: need at least 3 samples");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const double c = std::sqrt(1.0 - S * S);
  std::vector<double> xs(samples), ys(samples);
  double sx = 0.0, sy = 0.0;
  for (long long n = 0; n < samples; ++n) {
    const double xstar = normal(rng);
    const double x = S * xstar + c * normal(rng);
    xs[n] = xstar;
    ys[n] = eval(Activation::ReLU, x);
    sx += xstar;
    sy += ys[n];
  }
  const double nn = static_cast<double>(samples);
  const double mx = sx / nn, my = sy / nn;
  double sxx = 0.0, sxy = 0.0;
  for (long long n = 0; n < samples; ++n) {
    sxx += (xs[n] - mx) * (xs[n] - mx);
    sxy += (xs[n] - mx) * (ys[n] - my);
  }
  LinearFit f;
  f.samples = samples;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (long long n = 0; n < samples; ++n) {
    const double e = ys[n] - f.intercept - f.slope * xs[n];
    rss += e * e;
  }
  const double s2 = rss / (nn - 2.0);
  f.slope_se = std::sqrt(s2 / sxx);
  f.intercept_se = std::sqrt(s2 * (1.0 / nn + mx * mx / sxx));
  return f;
}

struct NegativeAlignmentCheck {
  int K = 0;
  double S = 0.0;
  double pointwise_max_deviation = 0.0;  // max |max(0,x) - max(0,-x) - x|
  double conditional_max_deviation = 0.0;
  double conditional_std_error = 0.0;  // of the bin attaining the maximum
  double band = 0.0;                   // S^2

  bool passed() const {
    return pointwise_max_deviation == 0.0 && conditional_max_deviation <= band + 3.0 * conditional_std_error;
  }
};

inline constexpr int kAlignmentBins = 8;
inline constexpr double kAlignmentRange = 2.0;

/// Compares the conditional mean response of K student units with R = -1
/// and S = 2/(K-1) against max(0, x*) + (K-1)/sqrt(2 pi). The deviation per
/// orthogonal unit is averaged in bins of x* over [-2, 2] and compared with
/// the S^2 band.
inline NegativeAlignmentCheck negative_alignment_identity_check(long long samples, int K, std::uint64_t seed) {
  if (K < 2) throw std::invalid_argument("negative_alignment_identity_check: K must be at least 2");
  using std::numbers::pi;
  NegativeAlignmentCheck r;
  r.K = K;
  r.S = 2.0 / (K - 1);
  r.band = r.S * r.S;
  const double c = std::sqrt(1.0 - r.S * r.S);
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * pi);
  const double base = (K - 1) * inv_sqrt_2pi;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Accumulator> bins(kAlignmentBins);
  for (long long n = 0; n < samples; ++n) {
    const double xstar = normal(rng);
    const double pw = std::max(0.0, xstar) - std::max(0.0, -xstar) - xstar;
    r.pointwise_max_deviation = std::max(r.pointwise_max_deviation, std::abs(pw));
    // One orthogonal unit per sample; the K-1 units are exchangeable.
    // max(0, z) has known mean 1/sqrt(2 pi) and serves as control variate.
    const double z = normal(rng);
    const double xj = r.S * xstar + c * z;
    if (std::abs(xstar) >= kAlignmentRange) continue;
    const double total = std::max(0.0, -xstar) + (K - 1) * (std::max(0.0, xj) - std::max(0.0, z));
    const double dev = (total - std::max(0.0, xstar) - base) / (K - 1) + inv_sqrt_2pi;
    const int b = static_cast<int>((xstar + kAlignmentRange) / (2 * kAlignmentRange) * kAlignmentBins);
    bins[std::clamp(b, 0, kAlignmentBins - 1)].add(dev);
  }
  for (const auto& b : bins) {
    const OracleEstimate e = b.estimate();
    if (std::abs(e.mean) >= r.conditional_max_deviation) {
      r.conditional_max_deviation = std::abs(e.mean);
      r.conditional_std_error = e.std_error;
    }
  }
  return r;
}

}  // namespace scm::oracle
