#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "scm/gen_error.hpp"
#include "scm/mc_sim.hpp"
#include "scm/order_params.hpp"

using scm::Activation;
namespace mc = scm::mc;

namespace {

mc::McConfig small_config() {
  mc::McConfig c;
  c.N = 10;
  c.K = c.M = 2;
  c.alpha_tilde = 2.0;
  c.mcs_total = 1000;
  c.measure_window = 200;
  c.runs = 5;
  c.seed = 7;
  return c;
}

}  // namespace

TEST(Teacher, Orthonormal) {
  const auto t = mc::make_teacher(50, 4, 1);
  const Eigen::MatrixXd g = t * t.transpose() / 50.0;
  EXPECT_LT((g - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Teacher, FullBasis) {
  const auto t = mc::make_teacher(4, 4, 2);
  EXPECT_LT((t * t.transpose() / 4.0 - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((t.transpose() * t / 4.0 - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Teacher, InfeasibleRejected) { EXPECT_THROW(mc::make_teacher(3, 4, 1), std::invalid_argument); }

TEST(Dataset, SingleReluTeacherLabels) {
  const auto t = mc::make_teacher(20, 1, 3);
  const auto d = mc::make_dataset(20, 50, t, Activation::ReLU, 4);
  for (int mu = 0; mu < d.P(); ++mu) {
    const double x = d.xi.row(mu).dot(t.row(0)) / std::sqrt(20.0);
    EXPECT_NEAR(d.tau(mu), std::max(0.0, x), 1e-12);
  }
}

TEST(Dataset, ComponentStatistics) {
  const int P = 10000, N = 50;
  const auto d = mc::make_dataset(N, P, mc::make_teacher(N, 2, 5), Activation::ErfSigmoid, 6);
  EXPECT_LT(std::abs(d.xi.mean()), 4.0 / std::sqrt(static_cast<double>(P) * N));
  const double var = d.xi.array().square().mean();
  EXPECT_NEAR(var, 1.0, 0.01);
}

TEST(Dataset, LabelsRecomputeExactly) {
  const auto t = mc::make_teacher(30, 3, 8);
  for (Activation a : {Activation::ErfSigmoid, Activation::ReLU}) {
    const auto d = mc::make_dataset(30, 200, t, a, 9);
    const Eigen::VectorXd again = mc::committee_outputs(a, t, d.xi);
    EXPECT_TRUE((again.array() == d.tau.array()).all());
    const auto d2 = mc::make_dataset(30, 200, t, a, 9);
    EXPECT_TRUE((d2.xi.array() == d.xi.array()).all());
  }
}

TEST(Energy, TeacherAsStudentIsZero) {
  const auto t = mc::make_teacher(40, 3, 10);
  const auto d = mc::make_dataset(40, 100, t, Activation::ReLU, 11);
  EXPECT_EQ(mc::energy(t, d, Activation::ReLU), 0.0);
}

TEST(Energy, EmptyDatasetIsZero) {
  const auto t = mc::make_teacher(10, 2, 12);
  const auto d = mc::make_dataset(10, 0, t, Activation::ReLU, 13);
  mc::Rng rng(1);
  EXPECT_EQ(mc::energy(mc::init_student(t, 2, mc::InitBias::None, 0.0, rng), d, Activation::ReLU), 0.0);
}

TEST(Energy, MatchesGeneralizationErrorForOneUnit) {
  // Per-example errors are i.i.d. given the weights; their mean is eps_g.
  for (Activation a : {Activation::ErfSigmoid, Activation::ReLU}) {
    const int N = 50, P = 100;
    const auto t = mc::make_teacher(N, 1, 14);
    const auto d = mc::make_dataset(N, P, t, a, 15);
    mc::Rng rng(16);
    const auto w = mc::init_student(t, 1, mc::InitBias::None, 0.0, rng);
    const Eigen::ArrayXd e = 0.5 * (mc::committee_outputs(a, w, d.xi) - d.tau).array().square();
    const double se = std::sqrt((e - e.mean()).square().sum() / (P - 1) / P);
    const double R = w.row(0).dot(t.row(0)) / N;
    EXPECT_NEAR(mc::energy(w, d, a) / P, e.mean(), 1e-12);
    EXPECT_LT(std::abs(e.mean() - scm::eps_g_single(a, R)), 5 * se) << scm::to_string(a);
  }
}

TEST(Metropolis, RuleOnSyntheticPairs) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd(0.0, 2.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int i = 0; i < 100000; ++i) {
    const double de = nd(rng), u = ud(rng);
    const bool expected = u < std::min(1.0, std::exp(-de));
    EXPECT_EQ(mc::metropolis_accept(de, 1.0, u), expected || de <= 0.0);
  }
}

TEST(Metropolis, DownhillAndInfiniteTemperatureAlwaysAccept) {
  for (double u : {0.0, 0.5, 0.999999}) {
    EXPECT_TRUE(mc::metropolis_accept(-1.0, 1.0, u));
    EXPECT_TRUE(mc::metropolis_accept(0.0, 5.0, u));
    EXPECT_TRUE(mc::metropolis_accept(1e6, 0.0, u));
  }
  EXPECT_FALSE(mc::metropolis_accept(1e3, 1.0, 0.5));
}

TEST(McStep, InfiniteTemperatureAcceptsEverything) {
  const auto t = mc::make_teacher(20, 2, 18);
  const auto d = mc::make_dataset(20, 80, t, Activation::ReLU, 19);
  mc::Rng rng(20);
  auto w = mc::init_student(t, 2, mc::InitBias::None, 0.0, rng);
  for (int s = 0; s < 200; ++s) EXPECT_TRUE(mc::mc_step(w, d, Activation::ReLU, 0.0, 0.5, rng).accepted);
}

TEST(McStep, NormsConservedAndRejectionsKeepState) {
  const auto t = mc::make_teacher(20, 3, 21);
  const auto d = mc::make_dataset(20, 120, t, Activation::ErfSigmoid, 22);
  mc::Rng rng(23);
  auto w = mc::init_student(t, 3, mc::InitBias::None, 0.0, rng);
  int rejected = 0;
  for (int s = 0; s < 500; ++s) {
    const auto before = w;
    const auto r = mc::mc_step(w, d, Activation::ErfSigmoid, 20.0, 0.3, rng);
    if (!r.accepted) {
      ++rejected;
      EXPECT_TRUE((w.array() == before.array()).all());
    }
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(w.row(j).squaredNorm() / 20.0, 1.0, 1e-12);
  }
  EXPECT_GT(rejected, 0);
}

TEST(McStep, CachedChainMatchesReference) {
  const auto t = mc::make_teacher(30, 3, 24);
  for (Activation a : {Activation::ErfSigmoid, Activation::ReLU}) {
    const auto d = mc::make_dataset(30, 150, t, a, 25);
    mc::Rng r1(26), r2(26);
    auto w = mc::init_student(t, 3, mc::InitBias::None, 0.0, r1);
    mc::Chain chain(mc::init_student(t, 3, mc::InitBias::None, 0.0, r2), d, a);
    for (int s = 0; s < 300; ++s) {
      const auto ref = mc::mc_step(w, d, a, 1.0, 0.1, r1);
      const auto fast = chain.step(1.0, 0.1, r2);
      ASSERT_EQ(ref.accepted, fast.accepted);
      EXPECT_NEAR(ref.delta_e, fast.delta_e, 1e-10);
      EXPECT_NEAR(chain.energy_value(), mc::energy(w, d, a), 1e-10);
    }
    EXPECT_LT((chain.weights() - w).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(AdaptSigma, Rule) {
  EXPECT_DOUBLE_EQ(mc::adapt_sigma(std::vector<bool>(10, true), 1.0), 1.1);
  std::vector<bool> nine(10, true);
  nine[0] = false;
  EXPECT_DOUBLE_EQ(mc::adapt_sigma(nine, 1.0), 1.1);
  std::vector<bool> half(10, false);
  for (int i = 0; i < 5; ++i) half[i] = true;
  EXPECT_DOUBLE_EQ(mc::adapt_sigma(half, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(mc::adapt_sigma(std::vector<bool>(10, false), 1.0), 0.9);
  EXPECT_DOUBLE_EQ(mc::adapt_sigma(std::vector<bool>(10, true), 1.0, true), 1.0);
  EXPECT_THROW(mc::adapt_sigma({}, 1.0), std::invalid_argument);
}

TEST(AdaptSigma, FrozenDuringMeasurement) {
  auto c = small_config();
  c.record_every = 1;
  const auto r = mc::run_single(c, 0);
  for (std::size_t i = 0; i < r.step.size(); ++i)
    if (r.step[i] > c.burn_in_steps() + c.adapt_interval) {
      EXPECT_EQ(r.sigma[i], r.sigma.back());
    }
}

TEST(InitStudent, Biases) {
  const int N = 200, K = 4;
  const auto t = mc::make_teacher(N, K, 27);
  double diag_pos = 0, off_pos = 0, diag_anti = 0, none_max = 0;
  for (int s = 0; s < 20; ++s) {
    const auto p = mc::overlaps(mc::init_student(t, K, mc::InitBias::PositiveSpecialized, 0.3, 100 + s), t).R;
    const auto a = mc::overlaps(mc::init_student(t, K, mc::InitBias::AntiSpecialized, 0.3, 200 + s), t).R;
    const auto n = mc::overlaps(mc::init_student(t, K, mc::InitBias::None, 0.3, 300 + s), t).R;
    diag_pos += p.diagonal().mean();
    off_pos += (p.sum() - p.trace()) / (K * K - K);
    diag_anti += a.diagonal().mean();
    none_max = std::max(none_max, n.cwiseAbs().maxCoeff());
  }
  EXPECT_GT(diag_pos, off_pos);
  EXPECT_LT(diag_anti, 0.0);
  EXPECT_LT(none_max, 5.0 / std::sqrt(static_cast<double>(N)));
}

TEST(InitStudent, BiasNeedsMatchingSizes) {
  const auto t = mc::make_teacher(10, 3, 28);
  mc::Rng rng(1);
  EXPECT_THROW(mc::init_student(t, 2, mc::InitBias::PositiveSpecialized, 0.3, rng), std::invalid_argument);
}

TEST(Config, Validation) {
  EXPECT_FALSE(mc::McConfig{}.problem());
  auto c = mc::McConfig{};
  c.measure_window = c.mcs_total + 1;
  EXPECT_TRUE(c.problem());
  c = {};
  c.alpha_tilde = 1e-9;
  EXPECT_TRUE(c.problem());
  c = {};
  c.M = 3;
  c.init_bias = mc::InitBias::AntiSpecialized;
  EXPECT_TRUE(c.problem());
  EXPECT_THROW(mc::run(c), std::invalid_argument);
  c = {};
  EXPECT_EQ(c.P(), 24 * 4 * 50);
}

TEST(Run, DeterministicAndThreadIndependent) {
  const auto c = small_config();
  const auto a = mc::run(c, 1);
  const auto b = mc::run(c, 1);
  const auto t = mc::run(c, 3);
  for (int i = 0; i < c.runs; ++i) {
    EXPECT_EQ(a.runs[i].e_over_p, b.runs[i].e_over_p);
    EXPECT_EQ(a.runs[i].eps_g, t.runs[i].eps_g);
    EXPECT_EQ(a.runs[i].final_overlaps.R, t.runs[i].final_overlaps.R);
  }
  EXPECT_EQ(a.histogram.mass, t.histogram.mass);
  auto other = c;
  other.seed = 8;
  EXPECT_NE(mc::run(other).runs[0].e_over_p, a.runs[0].e_over_p);
}

TEST(Run, ObservableInvariants) {
  auto c = small_config();
  c.record_every = 10;
  const auto o = mc::run(c);
  double total = 0.0;
  for (double m : o.histogram.mass) total += m;
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_EQ(o.histogram.edges.size(), static_cast<std::size_t>(mc::kHistogramBins + 1));
  for (const auto& r : o.runs) {
    for (double e : r.eps_g) EXPECT_GE(e, 0.0);
    EXPECT_TRUE(scm::validate(r.final_overlaps));
    EXPECT_EQ(r.step.back(), c.mcs_total);
    EXPECT_EQ(r.step.size(), static_cast<std::size_t>(c.mcs_total / c.record_every));
  }
}

TEST(Run, SmokeEnergyDecreases) {
  const auto o = mc::run(small_config());
  double first = 0, last = 0;
  for (const auto& r : o.runs) first += r.e_over_p.front(), last += r.e_over_p.back();
  EXPECT_LT(last, first);
}

TEST(Histogram, BinsAndNegativeMass) {
  EXPECT_EQ(mc::histogram_bin(-1.0), 0);
  EXPECT_EQ(mc::histogram_bin(1.0), mc::kHistogramBins - 1);
  EXPECT_EQ(mc::histogram_bin(-1e-9), mc::kHistogramBins / 2 - 1);
  EXPECT_EQ(mc::histogram_bin(0.0), mc::kHistogramBins / 2);
  std::vector<long long> counts(mc::kHistogramBins, 0);
  counts[0] = 1;
  counts[mc::kHistogramBins / 2] = 3;
  const auto h = mc::Histogram::from_counts(counts);
  EXPECT_DOUBLE_EQ(h.negative_mass(), 0.25);
}
