#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "scm/equilibrium.hpp"
#include "scm/free_energy.hpp"
#include "scm/verify.hpp"

using scm::Activation;
using scm::SiteSymmetricState;
using std::numbers::pi;

namespace {

const Activation kBoth[] = {Activation::ErfSigmoid, Activation::ReLU};

// Half log-determinant of the assembled overlap matrix via LU, independent of
// the library's factorization.
double half_logdet(const scm::FullOverlapMatrix& m) { return 0.5 * std::log(m.assembled().determinant()); }

}  // namespace

TEST(Entropy, OriginIsZero) {
  for (int K : {1, 2, 7}) EXPECT_EQ(scm::entropy_site({K, 0.0, 0.0, 0.0}), 0.0);
  EXPECT_NEAR(scm::entropy_full(scm::embed({3, 0.0, 0.0, 0.0})), 0.0, 1e-15);
}

TEST(Entropy, TwoUnitExample) {
  const SiteSymmetricState s{2, 0.5, 0.0, 0.0};
  EXPECT_NEAR(scm::entropy_site(s), std::log(0.75), 1e-14);
  const SiteSymmetricState t{2, 0.1, 0.05, -0.1};
  EXPECT_NEAR(scm::entropy_full(scm::embed(s)) - scm::entropy_full(scm::embed(t)),
              scm::entropy_site(s) - scm::entropy_site(t), 1e-10);
  EXPECT_NEAR(scm::entropy_full(scm::embed(s)), half_logdet(scm::embed(s)), 1e-12);
}

TEST(Entropy, BoundaryIsDomainError) {
  EXPECT_THROW(scm::entropy_site({3, 1.0, 0.0, 0.0}), scm::DomainError);
  EXPECT_FALSE(scm::try_entropy_site({3, 1.0, 0.0, 0.0}));
  EXPECT_THROW(scm::entropy_full(scm::embed({2, 1.0, 0.0, 0.0})), scm::DomainError);
}

TEST(Entropy, FullMinusSiteIsConstant) {
  std::mt19937_64 rng(2);
  for (int K : {2, 3, 5}) {
    const double ref = scm::entropy_full(scm::embed({K, 0.0, 0.0, 0.0})) - scm::entropy_site({K, 0.0, 0.0, 0.0});
    for (int i = 0; i < 20; ++i) {
      const auto s = scm::verify::random_interior_state(rng, K);
      EXPECT_NEAR(scm::entropy_full(scm::embed(s)) - scm::entropy_site(s), ref, 1e-10);
      EXPECT_NEAR(scm::entropy_full(scm::embed(s)), half_logdet(scm::embed(s)), 1e-9);
    }
  }
}

TEST(BetaF, Composition) {
  for (Activation a : kBoth) EXPECT_EQ(scm::beta_f(a, {3, 0.0, 0.0, 0.0}, 0.0).beta_f, 0.0);
  EXPECT_NEAR(scm::beta_f(Activation::ErfSigmoid, {5, 0.0, 0.0, 0.0}, 1.0).beta_f, 5.0 / 3.0, 1e-12);
  EXPECT_NEAR(scm::beta_f(Activation::ReLU, {2, 0.0, 0.0, 0.0}, 1.0).beta_f, 2.0 * (0.5 - 0.5 / pi), 1e-12);
  EXPECT_NEAR(2.0 * (0.5 - 0.5 / pi), 0.68169, 5e-6);
  const auto p = scm::beta_f(Activation::ReLU, {4, 0.3, 0.1, 0.05}, 2.5);
  EXPECT_NEAR(p.beta_f, p.alpha * 4 * p.eps_g - p.entropy, 1e-14);
}

TEST(BetaF, DivergesTowardBoundary) {
  for (Activation a : kBoth) {
    double prev = scm::beta_f(a, {3, 0.9, 0.0, 0.0}, 1.0).beta_f;
    for (double R : {0.99, 0.999, 0.9999, 0.99999}) {
      const double cur = scm::beta_f(a, {3, R, 0.0, 0.0}, 1.0).beta_f;
      EXPECT_GT(cur, prev);
      prev = cur;
    }
    EXPECT_GT(prev, 4.0);
  }
}

TEST(Gradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ua(0.1, 50.0);
  for (Activation a : kBoth)
    for (int K : {2, 3, 5, 10})
      for (int i = 0; i < 100; ++i) {
        const auto s = scm::verify::random_interior_state(rng, K);
        const double alpha = ua(rng);
        const scm::Vec3 fd = scm::verify::fd_gradient(a, s, alpha);
        EXPECT_LT((scm::grad_beta_f(a, s, alpha) - fd).norm(), 1e-6 * fd.norm());
      }
}

TEST(Gradient, SingleUnitStationarityClosedForms) {
  for (double R : {0.1, 0.4, 0.8, 0.95}) {
    const double ae = pi * R * std::sqrt(4 - R * R) / (2 * (1 - R * R));
    const double ar = 4 * pi * R / ((1 - R * R) * (pi + 2 * std::asin(R)));
    EXPECT_NEAR(scm::single_unit_stationary_alpha(Activation::ErfSigmoid, R), ae, 1e-12 * ae);
    EXPECT_NEAR(scm::single_unit_stationary_alpha(Activation::ReLU, R), ar, 1e-12 * ar);
    EXPECT_NEAR(scm::grad_beta_f(Activation::ErfSigmoid, SiteSymmetricState::single(R), ae)(0), 0.0, 1e-9 * ae);
    EXPECT_NEAR(scm::grad_beta_f(Activation::ReLU, SiteSymmetricState::single(R), ar)(0), 0.0, 1e-9 * ar);
  }
}

TEST(Gradient, VanishesAtMinimizerOutput) {
  const auto m = scm::minimize_from(Activation::ReLU, 10, 10.0, {10, 0.3, 0.05, 0.05});
  ASSERT_TRUE(m.converged);
  EXPECT_LT(scm::grad_beta_f(Activation::ReLU, m.state, 10.0).norm(), 1e-10);
}

TEST(Hessian, MatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ua(0.1, 50.0);
  for (Activation a : kBoth)
    for (int K : {2, 3, 5, 10})
      for (int i = 0; i < 25; ++i) {
        const auto s = scm::verify::random_interior_state(rng, K);
        const double alpha = ua(rng);
        const scm::Mat3 fd = scm::verify::fd_hessian(a, s, alpha);
        EXPECT_LT((scm::hessian_site(a, s, alpha) - fd).norm(), 1e-4 * fd.norm());
      }
}

TEST(Hessian, PositiveDefiniteAtMinimum) {
  const auto m = scm::minimize_from(Activation::ErfSigmoid, 3, 20.0, {3, 0.01, 0.01, 0.0});
  ASSERT_TRUE(m.converged);
  EXPECT_GT(scm::hessian_eigenvalues(scm::hessian_site(Activation::ErfSigmoid, m.state, 20.0)).minCoeff(), 0.0);
}

TEST(Hessian, ReluSymmetricStateLosesStabilityAtTransition) {
  const auto t = scm::locate_transition(Activation::ReLU, 2, 1.0, 20.0);
  auto sym = [](double al) { return scm::symmetric_stationary(Activation::ReLU, 2, al); };
  EXPECT_GT(sym(t.alpha_c - 0.01).min_eig, 0.0);
  EXPECT_LT(sym(t.alpha_c + 0.01).min_eig, 0.0);
}

TEST(Hessian, SiteBlockOfFullHessian) {
  std::mt19937_64 rng(6);
  for (Activation a : kBoth)
    for (int K : {2, 3}) {
      const auto s = scm::verify::random_interior_state(rng, K, 0.2);
      const Eigen::MatrixXd J = scm::site_embedding_jacobian(K);
      const Eigen::MatrixXd restricted = J.transpose() * scm::full_hessian(a, s, 7.0) * J;
      const scm::Mat3 h = scm::hessian_site(a, s, 7.0);
      EXPECT_LT((restricted - h).norm(), 1e-4 * h.norm());
    }
}

TEST(FullStability, StableEquilibrium) {
  const auto m = scm::minimize_from(Activation::ReLU, 3, 10.0, {3, 0.3, 0.05, 0.05});
  ASSERT_TRUE(m.is_minimum());
  EXPECT_GE(scm::full_stability_spectrum(Activation::ReLU, m.state, 10.0), -1e-8);
}

TEST(FullStability, ReluSymmetricStateUnstableAboveTransition) {
  const auto sym = scm::symmetric_stationary(Activation::ReLU, 10, 10.0);
  ASSERT_TRUE(sym.converged);
  EXPECT_LT(scm::full_stability_spectrum(Activation::ReLU, sym.state, 10.0), 0.0);
}

TEST(FullStability, SigmoidalSymmetricPointBeyondDisappearance) {
  // Below the disappearance the R = S point is a stable minimum; just beyond
  // it is still stationary but has lost stability.
  const auto below = scm::symmetric_stationary(Activation::ErfSigmoid, 5, 60.0);
  const auto above = scm::symmetric_stationary(Activation::ErfSigmoid, 5, 64.0);
  ASSERT_TRUE(below.converged);
  ASSERT_TRUE(above.converged);
  EXPECT_GT(scm::full_stability_spectrum(Activation::ErfSigmoid, below.state, 60.0), 0.0);
  EXPECT_LT(scm::full_stability_spectrum(Activation::ErfSigmoid, above.state, 64.0), 0.0);
  EXPECT_LT(scm::grad_beta_f(Activation::ErfSigmoid, above.state, 64.0).norm(), 1e-10);
}
