#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "scm/activations.hpp"

using scm::Activation;
using scm::PairCovariance;
using std::numbers::pi;

namespace {

double reference(Activation a, const PairCovariance& c) {
  return testing_oracle::expect2([a](double x, double y) { return scm::eval(a, x) * scm::eval(a, y); }, c.c11, c.c22,
                                 c.c12);
}

}  // namespace

TEST(Eval, ReluBranches) {
  EXPECT_EQ(scm::eval(Activation::ReLU, -1.0), 0.0);
  EXPECT_EQ(scm::eval(Activation::ReLU, 2.0), 2.0);
}

TEST(Eval, ErfAtZero) { EXPECT_EQ(scm::eval(Activation::ErfSigmoid, 0.0), 1.0); }

TEST(Eval, ErfRange) {
  for (double x = -8.0; x <= 8.0; x += 0.25) {
    const double g = scm::eval(Activation::ErfSigmoid, x);
    EXPECT_GE(g, 0.0);
    EXPECT_LE(g, 2.0);
  }
}

TEST(Names, RoundTrip) {
  for (Activation a : {Activation::ErfSigmoid, Activation::ReLU}) EXPECT_EQ(scm::parse_activation(scm::to_string(a)), a);
  EXPECT_FALSE(scm::parse_activation("tanh"));
}

TEST(PairAverage, ReluIndependentUnits) {
  const PairCovariance c{1.0, 1.0, 0.0};
  const double oracle = reference(Activation::ReLU, c);
  EXPECT_NEAR(oracle, 1.0 / (2.0 * pi), 1e-12);
  EXPECT_NEAR(scm::pair_average(Activation::ReLU, c), oracle, 1e-12);
}

TEST(PairAverage, ReluPerfectCorrelation) {
  const double oracle = testing_oracle::expect1([](double z) { return z > 0 ? z * z : 0.0; });
  EXPECT_NEAR(oracle, 0.5, 1e-12);
  EXPECT_NEAR(scm::pair_average(Activation::ReLU, {1.0, 1.0, 1.0}), oracle, 1e-12);
}

TEST(PairAverage, ErfIndependentUnits) {
  EXPECT_DOUBLE_EQ(scm::pair_average(Activation::ErfSigmoid, {1.0, 1.0, 0.0}), 1.0);
}

TEST(PairAverage, DegenerateCovarianceDoesNotProduceNaN) {
  for (Activation a : {Activation::ErfSigmoid, Activation::ReLU}) {
    // Round-off pushes the correlation just past one.
    const PairCovariance c{0.1 * 3, 0.3, 0.30000000000000004};
    EXPECT_TRUE(std::isfinite(scm::pair_average(a, c)));
    EXPECT_TRUE(std::isfinite(scm::pair_average(a, {2.0, 2.0, -2.0})));
  }
}

TEST(PairAverage, MatchesReferenceOnGrid) {
  for (Activation a : {Activation::ErfSigmoid, Activation::ReLU})
    for (double c12 : {-0.99, -0.5, 0.0, 0.5, 0.99})
      for (double c11 : {0.25, 1.0, 4.0})
        for (double c22 : {0.25, 1.0, 4.0}) {
          const PairCovariance c{c11, c22, c12};
          if (!c.valid()) continue;
          const double ref = reference(a, c);
          EXPECT_NEAR(scm::pair_average(a, c), ref, 1e-8 * std::abs(ref))
              << scm::to_string(a) << " c=(" << c11 << "," << c22 << "," << c12 << ")";
        }
}

TEST(PairAverage, Symmetric) {
  for (Activation a : {Activation::ErfSigmoid, Activation::ReLU})
    for (double c12 : {-0.4, 0.1, 0.45})
      EXPECT_EQ(scm::pair_average(a, {0.5, 2.0, c12}), scm::pair_average(a, {2.0, 0.5, c12}));
}

TEST(PairAverage, IncreasingInCovariance) {
  for (Activation a : {Activation::ErfSigmoid, Activation::ReLU})
    for (double v1 : {0.25, 1.0, 4.0})
      for (double v2 : {0.25, 1.0, 4.0}) {
        const double lim = std::sqrt(v1 * v2);
        double prev = scm::pair_average(a, {v1, v2, -lim});
        for (int i = 1; i <= 200; ++i) {
          const double cur = scm::pair_average(a, {v1, v2, -lim + 2.0 * lim * i / 200});
          EXPECT_GT(cur, prev);
          prev = cur;
        }
      }
}

TEST(PairAverage, ReluPositiveHomogeneity) {
  for (double g2 : {0.25, 2.0, 9.0})
    for (double c12 : {-0.3, 0.0, 0.6}) {
      const PairCovariance c{1.5, 0.8, c12};
      EXPECT_NEAR(scm::pair_average(Activation::ReLU, {g2 * c.c11, g2 * c.c22, g2 * c.c12}),
                  g2 * scm::pair_average(Activation::ReLU, c), 1e-14 * g2);
    }
}
