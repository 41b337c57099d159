#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scm/activations.hpp"
#include "scm/free_energy.hpp"
#include "scm/gen_error.hpp"
#include "scm/oracle.hpp"
#include "scm/order_params.hpp"

namespace scm::verify {

// ---------------------------------------------------------------------------
// Random states

/// Interior site-symmetric state with both entropy log arguments above margin.
inline SiteSymmetricState random_interior_state(std::mt19937_64& rng, int K, double margin = 0.05) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    SiteSymmetricState s{K, u(rng), K == 1 ? 0.0 : u(rng), K == 1 ? 0.0 : u(rng)};
    if (!s.in_bounds()) continue;
    if (K == 1 && 1.0 - s.R * s.R > margin) return s;
    if (K > 1 && s.collective_arg() > margin && s.relative_arg() > margin) return s;
  }
}

/// General overlaps of K random unit students against M orthonormal
/// teachers, realized as Gram matrices of vectors in K + M dimensions.
inline FullOverlapMatrix random_overlaps(std::mt19937_64& rng, int K, int M) {
  std::normal_distribution<double> n;
  const int d = K + M;
  Eigen::MatrixXd w(K, d);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < d; ++j) w(i, j) = n(rng);
    w.row(i).normalize();
  }
  FullOverlapMatrix m;
  m.Q = w * w.transpose();
  m.Q.diagonal().setOnes();
  m.R = w.leftCols(M);
  m.T = Eigen::MatrixXd::Identity(M, M);
  return m;
}

// ---------------------------------------------------------------------------
// Finite differences

inline Vec3 fd_gradient(Activation a, const SiteSymmetricState& s, double alpha, double h = 1e-6) {
  Vec3 g = Vec3::Zero();
  const int n = s.is_single() ? 1 : 3;
  for (int i = 0; i < n; ++i) {
    SiteSymmetricState p = s, m = s;
    double* pp = i == 0 ? &p.R : i == 1 ? &p.S : &p.C;
    double* mp = i == 0 ? &m.R : i == 1 ? &m.S : &m.C;
    *pp += h;
    *mp -= h;
    g(i) = (beta_f(a, p, alpha).beta_f - beta_f(a, m, alpha).beta_f) / (2.0 * h);
  }
  return g;
}

inline Mat3 fd_hessian(Activation a, const SiteSymmetricState& s, double alpha, double h = 1e-5) {
  Mat3 H = Mat3::Zero();
  const int n = s.is_single() ? 1 : 3;
  auto shifted = [&](int i, double di, int j, double dj) {
    SiteSymmetricState t = s;
    double* v[3] = {&t.R, &t.S, &t.C};
    *v[i] += di;
    *v[j] += dj;
    return beta_f(a, t, alpha).beta_f;
  };
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      H(i, j) = H(j, i) =
          (shifted(i, h, j, h) - shifted(i, h, j, -h) - shifted(i, -h, j, h) + shifted(i, -h, j, -h)) / (4 * h * h);
  return H;
}

// ---------------------------------------------------------------------------
// Report

struct Check {
  std::string scope;
  std::string name;
  bool passed = false;
  double value = 0.0;      // measured deviation
  double tolerance = 0.0;  // allowed deviation
  std::string detail;
};

struct Report {
  std::vector<Check> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
  int failures() const {
    return static_cast<int>(std::count_if(checks.begin(), checks.end(), [](const Check& c) { return !c.passed; }));
  }
};

using PairKernel = std::function<double(Activation, const PairCovariance&)>;

/// Negative control: the closed form evaluated with the covariance sign flipped.
inline PairKernel wrong_sign_kernel() {
  return [](Activation a, const PairCovariance& c) { return pair_average(a, {c.c11, c.c22, -c.c12}); };
}

inline const std::vector<std::string>& all_scopes() {
  static const std::vector<std::string> s = {"activations", "gen-error", "free-energy", "alignment"};
  return s;
}

struct Options {
  std::vector<std::string> scopes;  // empty: all
  long long samples = 1'000'000;    // per sampling-oracle state
  int states = 20;                  // random states per activation
  int fd_states = 100;              // random states per (activation, K) for derivative checks
  std::uint64_t seed = 1;
  PairKernel kernel = [](Activation a, const PairCovariance& c) { return pair_average(a, c); };
};

inline bool valid_scope(const std::string& s) {
  return std::find(all_scopes().begin(), all_scopes().end(), s) != all_scopes().end();
}

namespace detail {

inline const Activation kBoth[] = {Activation::ErfSigmoid, Activation::ReLU};

inline void activations_scope(const Options& o, Report& r) {
  double worst[2] = {0.0, 0.0}, asym[2] = {0.0, 0.0};
  for (int ai = 0; ai < 2; ++ai) {
    const Activation a = kBoth[ai];
    for (double c12 : {-0.99, -0.5, 0.0, 0.5, 0.99})
      for (double c11 : {0.25, 1.0, 4.0})
        for (double c22 : {0.25, 1.0, 4.0}) {
          const PairCovariance c{c11, c22, c12};
          if (!c.valid()) continue;
          const double q = oracle::quad_pair_average(a, c);
          // Anti-correlated ReLU pairs give exactly zero.
          const double diff = std::abs(o.kernel(a, c) - q);
          worst[ai] = std::max(worst[ai], diff == 0.0 ? 0.0 : diff / std::abs(q));
          asym[ai] = std::max(asym[ai], std::abs(o.kernel(a, c) - o.kernel(a, {c22, c11, c12})));
        }
  }
  for (int ai = 0; ai < 2; ++ai) {
    const std::string an(to_string(kBoth[ai]));
    r.checks.push_back({"activations", "pair_average vs quadrature (" + an + ")", worst[ai] < 1e-8, worst[ai], 1e-8,
                        "max relative error on the covariance grid"});
    r.checks.push_back({"activations", "pair_average symmetry (" + an + ")", asym[ai] <= 1e-15, asym[ai], 1e-15, ""});
  }
}

inline void gen_error_scope(const Options& o, Report& r) {
  using std::numbers::pi;
  auto eg = [&](Activation a, const FullOverlapMatrix& m) { return scm::detail::eps_g_general_with(m, [&](const PairCovariance& c) { return o.kernel(a, c); }); };
  const auto zero = embed({4, 0.0, 0.0, 0.0}), perfect = embed({4, 1.0, 0.0, 0.0});
  const double anchors[][2] = {{eg(Activation::ErfSigmoid, zero), 1.0 / 3.0},
                               {eg(Activation::ReLU, zero), 0.5 - 0.5 / pi},
                               {eg(Activation::ErfSigmoid, perfect), 0.0},
                               {eg(Activation::ReLU, perfect), 0.0}};
  const char* names[] = {"erf random state", "relu random state", "erf perfect student", "relu perfect student"};
  for (int i = 0; i < 4; ++i) {
    const double dev = std::abs(anchors[i][0] - anchors[i][1]);
    r.checks.push_back({"gen-error", std::string("anchor ") + names[i], dev < 1e-12, dev, 1e-12, ""});
  }
  std::mt19937_64 rng(o.seed);
  for (int ai = 0; ai < 2; ++ai) {
    const Activation a = kBoth[ai];
    int fails = 0;
    double worst = 0.0;
    for (int i = 0; i < o.states; ++i) {
      const int K = 1 + i % 4, M = 1 + (i / 4) % 3;
      const auto m = random_overlaps(rng, K, M);
      const auto est = oracle::mc_eps_g(a, m, o.samples, o.seed + 1000 * ai + i);
      const double z = std::abs(eg(a, m) - est.mean) / est.std_error;
      worst = std::max(worst, z);
      fails += z > 3.0;
    }
    r.checks.push_back({"gen-error", "eps_g_general vs sampling oracle (" + std::string(to_string(a)) + ")",
                        fails == 0, worst, 3.0, "largest deviation in standard errors over random states"});
    double cons = 0.0;
    for (int i = 0; i < 50; ++i) {
      const auto s = random_interior_state(rng, 2 + i % 9, 1e-3);
      cons = std::max(cons, std::abs(eps_g_site(a, s) - eg(a, embed(s))));
    }
    r.checks.push_back({"gen-error", "site form vs general form (" + std::string(to_string(a)) + ")", cons < 1e-12,
                        cons, 1e-12, ""});
  }
}

inline void free_energy_scope(const Options& o, Report& r) {
  std::mt19937_64 rng(o.seed + 7);
  std::uniform_real_distribution<double> ua(0.1, 50.0);
  for (const Activation a : kBoth) {
    double gworst = 0.0, hworst = 0.0;
    for (int K : {2, 3, 5, 10}) {
      for (int i = 0; i < o.fd_states; ++i) {
        const auto s = random_interior_state(rng, K);
        const double alpha = ua(rng);
        const Vec3 fd = fd_gradient(a, s, alpha);
        gworst = std::max(gworst, (grad_beta_f(a, s, alpha) - fd).norm() / fd.norm());
        if (i % 10 == 0) {
          const Mat3 fh = fd_hessian(a, s, alpha);
          hworst = std::max(hworst, (hessian_site(a, s, alpha) - fh).norm() / fh.norm());
        }
      }
    }
    const std::string an(to_string(a));
    r.checks.push_back({"free-energy", "gradient vs central differences (" + an + ")", gworst < 1e-6, gworst, 1e-6, ""});
    r.checks.push_back({"free-energy", "Hessian vs finite differences (" + an + ")", hworst < 1e-4, hworst, 1e-4, ""});
  }
  double spread = 0.0;
  for (int K : {2, 3, 5}) {
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < 20; ++i) {
      const auto s = random_interior_state(rng, K);
      const double d = entropy_full(embed(s)) - entropy_site(s);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    spread = std::max(spread, hi - lo);
  }
  r.checks.push_back({"free-energy", "entropy full minus site form is constant", spread < 1e-10, spread, 1e-10, ""});
}

inline void alignment_scope(const Options& o, Report& r) {
  using std::numbers::pi;
  const long long n = std::max<long long>(o.samples, 100'000);
  for (double S : {0.0, 0.1, -0.1}) {
    const auto f = oracle::conditional_response(S, n, o.seed + 11);
    const double band = S * S;
    const double di = std::abs(f.intercept - 1.0 / std::sqrt(2.0 * pi));
    const double ds = std::abs(f.slope - S / 2.0);
    const std::string tag = "S=" + std::to_string(S).substr(0, S < 0 ? 5 : 4);
    r.checks.push_back({"alignment", "conditional response intercept " + tag, di <= 3 * f.intercept_se + band, di,
                        3 * f.intercept_se + band, ""});
    r.checks.push_back({"alignment", "conditional response slope " + tag, ds <= 3 * f.slope_se + band, ds,
                        3 * f.slope_se + band, ""});
  }
  for (int K : {11, 101}) {
    const auto c = oracle::negative_alignment_identity_check(n, K, o.seed + 13);
    r.checks.push_back({"alignment", "pointwise ReLU identity K=" + std::to_string(K), c.pointwise_max_deviation == 0.0,
                        c.pointwise_max_deviation, 0.0, ""});
    const double tol = c.band + 3 * c.conditional_std_error;
    r.checks.push_back({"alignment", "negative alignment mean response K=" + std::to_string(K),
                        c.conditional_max_deviation <= tol, c.conditional_max_deviation, tol, ""});
  }
}

}  // namespace detail

/// Runs the requested scopes; unknown scope names throw.
inline Report run(const Options& o = {}) {
  std::vector<std::string> scopes = o.scopes.empty() ? all_scopes() : o.scopes;
  for (const auto& s : scopes)
    if (!valid_scope(s)) throw std::invalid_argument("verify: unknown scope '" + s + "'");
  Report r;
  for (const auto& s : all_scopes()) {
    if (std::find(scopes.begin(), scopes.end(), s) == scopes.end()) continue;
    if (s == "activations") detail::activations_scope(o, r);
    if (s == "gen-error") detail::gen_error_scope(o, r);
    if (s == "free-energy") detail::free_energy_scope(o, r);
    if (s == "alignment") detail::alignment_scope(o, r);
  }
  return r;
}

}  // namespace scm::verify
