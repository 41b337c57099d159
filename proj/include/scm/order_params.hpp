#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace scm {

/// Site-symmetric order parameters for K = M: R_ii = R, R_ij = S, Q_ij = C.
///
/// K = 1 is the single-unit shape: only R is meaningful, S and C are pinned
/// to zero and every operation dispatches to the single-unit closed forms.
struct SiteSymmetricState {
  int K = 2;
  double R = 0.0;
  double S = 0.0;
  double C = 0.0;

  static SiteSymmetricState single(double R) { return {1, R, 0.0, 0.0}; }

  bool is_single() const { return K == 1; }

  bool in_bounds() const {
    auto ok = [](double v) { return v >= -1.0 && v <= 1.0; };
    return K >= 1 && ok(R) && (is_single() || (ok(S) && ok(C)));
  }

  /// Argument of the "collective" logarithm of the site-symmetric entropy.
  double collective_arg() const {
    const double u = R + (K - 1) * S;
    return 1.0 + (K - 1) * C - u * u;
  }

  /// Argument of the (K-1)-fold degenerate logarithm.
  double relative_arg() const {
    const double d = R - S;
    return 1.0 - C - d * d;
  }

  /// Strictly inside the entropy domain (both log arguments positive).
  bool interior() const {
    if (!in_bounds()) return false;
    if (is_single()) return 1.0 - R * R > 0.0;
    return collective_arg() > 0.0 && relative_arg() > 0.0;
  }

  bool operator==(const SiteSymmetricState&) const = default;
};

/// Distance in (R, S, C) used for deduplication and branch matching.
inline double state_distance(const SiteSymmetricState& a, const SiteSymmetricState& b) {
  return std::sqrt((a.R - b.R) * (a.R - b.R) + (a.S - b.S) * (a.S - b.S) +
                   (a.C - b.C) * (a.C - b.C));
}

/// General overlaps: Q (K x K student-student), R (K x M student-teacher),
/// T (M x M teacher-teacher).
struct FullOverlapMatrix {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::MatrixXd T;

  int K() const { return static_cast<int>(Q.rows()); }
  int M() const { return static_cast<int>(T.rows()); }

  bool shapes_consistent() const {
    return Q.rows() == Q.cols() && T.rows() == T.cols() && R.rows() == Q.rows() &&
           R.cols() == T.rows() && Q.rows() > 0 && T.rows() > 0;
  }

  /// The (M+K) x (M+K) covariance of (x*_1..x*_M, x_1..x_K).
  Eigen::MatrixXd assembled() const {
    if (!shapes_consistent()) throw std::invalid_argument("FullOverlapMatrix: inconsistent shapes");
    const int k = K(), m = M();
    Eigen::MatrixXd c(m + k, m + k);
    c.topLeftCorner(m, m) = T;
    c.topRightCorner(m, k) = R.transpose();
    c.bottomLeftCorner(k, m) = R;
    c.bottomRightCorner(k, k) = Q;
    return c;
  }
};

inline FullOverlapMatrix embed(const SiteSymmetricState& s) {
  const int k = s.K;
  FullOverlapMatrix m;
  m.Q = Eigen::MatrixXd::Constant(k, k, s.C);
  m.Q.diagonal().setOnes();
  m.R = Eigen::MatrixXd::Constant(k, k, s.S);
  m.R.diagonal().setConstant(s.R);
  m.T = Eigen::MatrixXd::Identity(k, k);
  return m;
}

enum class ValidationStatus { Valid, ShapeMismatch, BadNormalization, OutOfRange, NotPositiveSemidefinite };

struct Validation {
  ValidationStatus status = ValidationStatus::Valid;
  double min_eigenvalue = 0.0;
  std::string diagnostic;

  bool ok() const { return status == ValidationStatus::Valid; }
  explicit operator bool() const { return ok(); }
};

inline constexpr double kPsdTolerance = 1e-10;

inline Validation validate(const FullOverlapMatrix& m, double norm_tol = 1e-9) {
  Validation v;
  if (!m.shapes_consistent()) {
    v.status = ValidationStatus::ShapeMismatch;
    v.diagnostic = "shape mismatch: Q " + std::to_string(m.Q.rows()) + "x" + std::to_string(m.Q.cols()) +
                   ", R " + std::to_string(m.R.rows()) + "x" + std::to_string(m.R.cols()) + ", T " +
                   std::to_string(m.T.rows()) + "x" + std::to_string(m.T.cols());
    return v;
  }
  if ((m.Q.diagonal().array() - 1.0).abs().maxCoeff() > norm_tol) {
    v.status = ValidationStatus::BadNormalization;
    v.diagnostic = "student norms Q_ii differ from 1";
    return v;
  }
  if (m.Q.cwiseAbs().maxCoeff() > 1.0 + norm_tol || m.R.cwiseAbs().maxCoeff() > 1.0 + norm_tol) {
    v.status = ValidationStatus::OutOfRange;
    v.diagnostic = "overlap outside [-1, 1]";
    return v;
  }
  const Eigen::MatrixXd c = m.assembled();
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > norm_tol) {
    v.status = ValidationStatus::NotPositiveSemidefinite;
    v.diagnostic = "overlap matrix not symmetric";
    return v;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c, Eigen::EigenvaluesOnly);
  v.min_eigenvalue = es.eigenvalues().minCoeff();
  if (v.min_eigenvalue < -kPsdTolerance) {
    v.status = ValidationStatus::NotPositiveSemidefinite;
    v.diagnostic = "smallest eigenvalue " + std::to_string(v.min_eigenvalue) + " below tolerance";
  }
  return v;
}

}  // namespace scm
