#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "scm/activations.hpp"
#include "scm/gen_error.hpp"
#include "scm/order_params.hpp"

namespace scm::mc {

/// Rows are weight vectors (K x N for students, M x N for teachers).
using Weights = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

enum class InitBias { None, PositiveSpecialized, AntiSpecialized };

inline std::string_view to_string(InitBias b) {
  switch (b) {
    case InitBias::None: return "none";
    case InitBias::PositiveSpecialized: return "positive";
    case InitBias::AntiSpecialized: return "anti";
  }
  return "?";
}

inline std::optional<InitBias> parse_init_bias(std::string_view s) {
  if (s == "none") return InitBias::None;
  if (s == "positive" || s == "specialized") return InitBias::PositiveSpecialized;
  if (s == "anti" || s == "anti-specialized") return InitBias::AntiSpecialized;
  return std::nullopt;
}

struct McConfig {
  int N = 50;
  int K = 4;
  int M = 4;
  Activation activation = Activation::ReLU;
  double beta = 1.0;
  double alpha_tilde = 24.0;
  int mcs_total = 20000;
  int measure_window = 1000;
  int runs = 20;
  std::uint64_t seed = 1;
  InitBias init_bias = InitBias::None;
  double init_magnitude = 1.0;
  double step_sigma = 0.05;
  double target_acceptance = 0.5;
  int record_every = 1;
  double burn_in_fraction = 0.2;
  int adapt_interval = 100;

  int P() const { return static_cast<int>(std::lround(alpha_tilde * K * N)); }
  int burn_in_steps() const { return static_cast<int>(burn_in_fraction * mcs_total); }

  /// First violated constraint, if any.
  std::optional<std::string> problem() const {
    if (N < 1 || K < 1 || M < 1) return "N, K and M must be positive";
    if (M > N) return "teacher needs M <= N";
    if (!(beta >= 0.0)) return "beta must be non-negative";
    if (!(alpha_tilde > 0.0) || P() < 1) return "alpha_tilde must give P >= 1";
    if (mcs_total < 1) return "mcs_total must be positive";
    if (measure_window < 1 || measure_window > mcs_total) return "measure_window must lie in [1, mcs_total]";
    if (runs < 1) return "runs must be positive";
    if (!(step_sigma > 0.0)) return "step_sigma must be positive";
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0)) return "target_acceptance must lie in (0, 1)";
    if (init_bias != InitBias::None && K != M) return "biased initialization needs K == M";
    if (init_bias == InitBias::AntiSpecialized && K < 2) return "anti-specialized initialization needs K >= 2";
    if (init_magnitude < 0.0) return "init_magnitude must be non-negative";
    if (record_every < 1) return "record_every must be positive";
    if (!(burn_in_fraction >= 0.0 && burn_in_fraction <= 1.0)) return "burn_in_fraction must lie in [0, 1]";
    if (adapt_interval < 1) return "adapt_interval must be positive";
    return std::nullopt;
  }
};

/// Independent stream for (seed, stream index).
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

inline Weights gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> nd;
  Weights w(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = nd(rng);
  return w;
}

/// Rescale every row to squared norm N.
inline void normalize_rows(Weights& w) {
  const double n = static_cast<double>(w.cols());
  for (Eigen::Index i = 0; i < w.rows(); ++i) w.row(i) *= std::sqrt(n) / w.row(i).norm();
}

/// M orthogonal teacher vectors with squared norm N.
inline Weights make_teacher(int N, int M, std::uint64_t seed) {
  if (M > N) throw std::invalid_argument("make_teacher: M > N");
  if (M < 1) throw std::invalid_argument("make_teacher: M < 1");
  Rng rng = make_rng(seed, 0);
  const Eigen::MatrixXd g = gaussian(N, M, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(N, M);
  Weights t = std::sqrt(static_cast<double>(N)) * q.transpose();
  return t;
}

struct Dataset {
  Weights xi;           // P x N
  Eigen::VectorXd tau;  // P

  int P() const { return static_cast<int>(xi.rows()); }
  int N() const { return static_cast<int>(xi.cols()); }
};

/// sigma(xi) = sum_k g(w_k . xi / sqrt(N)) / sqrt(K) for every row of xi.
inline Eigen::VectorXd committee_outputs(Activation a, const Weights& w, const Weights& xi) {
  const double n = static_cast<double>(xi.cols());
  Eigen::MatrixXd h = (xi * w.transpose()) / std::sqrt(n);
  if (a == Activation::ReLU)
    h = h.cwiseMax(0.0);
  else
    h = h.unaryExpr([](double x) { return 1.0 + std::erf(x / std::numbers::sqrt2); });
  return h.rowwise().sum() / std::sqrt(static_cast<double>(w.rows()));
}

inline Dataset make_dataset(int N, int P, const Weights& teacher, Activation a, std::uint64_t seed) {
  if (teacher.cols() != N) throw std::invalid_argument("make_dataset: teacher dimension differs from N");
  Rng rng = make_rng(seed, 1);
  Dataset d;
  d.xi = gaussian(P, N, rng);
  d.tau = P > 0 ? committee_outputs(a, teacher, d.xi) : Eigen::VectorXd();
  return d;
}

/// E = sum_mu (sigma - tau)^2 / 2.
inline double energy(const Weights& student, const Dataset& d, Activation a) {
  if (d.P() == 0) return 0.0;
  if (student.cols() != d.N()) throw std::invalid_argument("energy: student dimension differs from data");
  return 0.5 * (committee_outputs(a, student, d.xi) - d.tau).squaredNorm();
}

inline FullOverlapMatrix overlaps(const Weights& student, const Weights& teacher) {
  const double n = static_cast<double>(student.cols());
  FullOverlapMatrix m;
  m.Q = student * student.transpose() / n;
  m.R = student * teacher.transpose() / n;
  m.T = teacher * teacher.transpose() / n;
  return m;
}

inline bool metropolis_accept(double delta_e, double beta, double u) {
  return delta_e <= 0.0 || u < std::exp(-beta * delta_e);
}

struct StepResult {
  bool accepted = false;
  double delta_e = 0.0;
};

inline Weights propose(const Weights& w, double sigma, Rng& rng) {
  Weights p = w + sigma * gaussian(w.rows(), w.cols(), rng);
  normalize_rows(p);
  return p;
}

/// One Metropolis step moving all student units at once. Both energies are
/// evaluated from scratch.
inline StepResult mc_step(Weights& student, const Dataset& d, Activation a, double beta, double sigma, Rng& rng) {
  Weights p = propose(student, sigma, rng);
  const double de = energy(p, d, a) - energy(student, d, a);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  const bool acc = metropolis_accept(de, beta, ud(rng));
  if (acc) student = std::move(p);
  return {acc, de};
}

/// Markov chain that caches the energy of the current state. Draws the same
/// random numbers as mc_step, so both paths produce the same trajectory.
class Chain {
 public:
  Chain(Weights student, const Dataset& d, Activation a)
      : w_(std::move(student)), d_(&d), a_(a), e_(energy(w_, d, a)) {}

  StepResult step(double beta, double sigma, Rng& rng) {
    Weights p = propose(w_, sigma, rng);
    const double en = energy(p, *d_, a_);
    const double de = en - e_;
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    const bool acc = metropolis_accept(de, beta, ud(rng));
    if (acc) {
      w_ = std::move(p);
      e_ = en;
    }
    return {acc, de};
  }

  const Weights& weights() const { return w_; }
  double energy_value() const { return e_; }

 private:
  Weights w_;
  const Dataset* d_;
  Activation a_;
  double e_;
};

/// Multiplicative proposal-scale update from a window of accept flags.
inline double adapt_sigma(const std::vector<bool>& history, double sigma, bool frozen = false,
                          double target = 0.5) {
  if (history.empty()) throw std::invalid_argument("adapt_sigma: empty acceptance history");
  if (frozen) return sigma;
  const double rate = static_cast<double>(std::count(history.begin(), history.end(), true)) / history.size();
  if (rate > target + 0.05) return sigma * 1.1;
  if (rate < target - 0.05) return sigma * 0.9;
  return sigma;
}

/// Random normalized student, optionally nudged toward (or against) the
/// one-to-one assignment of student to teacher units.
inline Weights init_student(const Weights& teacher, int K, InitBias bias, double magnitude, Rng& rng) {
  const Eigen::Index n = teacher.cols();
  Weights w = gaussian(K, n, rng);
  normalize_rows(w);
  if (bias != InitBias::None) {
    if (teacher.rows() != K) throw std::invalid_argument("init_student: biased modes need K == M");
    for (int i = 0; i < K; ++i) {
      if (bias == InitBias::PositiveSpecialized) {
        w.row(i) += magnitude * teacher.row(i);
      } else {
        if (K < 2) throw std::invalid_argument("init_student: anti-specialized needs K >= 2");
        Eigen::RowVectorXd others = teacher.colwise().sum() - teacher.row(i);
        w.row(i) += -magnitude * teacher.row(i) + (magnitude / (K - 1)) * others;
      }
    }
    normalize_rows(w);
  }
  return w;
}

inline Weights init_student(const Weights& teacher, int K, InitBias bias, double magnitude, std::uint64_t seed) {
  Rng rng = make_rng(seed, 2);
  return init_student(teacher, K, bias, magnitude, rng);
}

inline constexpr int kHistogramBins = 40;

struct Histogram {
  std::vector<double> edges;  // bins + 1 values over [-1, 1]
  std::vector<double> mass;   // relative frequency, sums to 1

  static Histogram from_counts(const std::vector<long long>& counts) {
    Histogram h;
    const int b = static_cast<int>(counts.size());
    for (int i = 0; i <= b; ++i) h.edges.push_back(-1.0 + 2.0 * i / b);
    long long total = 0;
    for (auto c : counts) total += c;
    for (auto c : counts) h.mass.push_back(total ? static_cast<double>(c) / total : 0.0);
    return h;
  }

  /// Mass in bins lying entirely below zero.
  double negative_mass() const {
    double m = 0.0;
    for (std::size_t i = 0; i < mass.size(); ++i)
      if (edges[i + 1] <= 0.0) m += mass[i];
    return m;
  }
};

inline int histogram_bin(double v, int bins = kHistogramBins) {
  const int i = static_cast<int>(std::floor((v + 1.0) * 0.5 * bins));
  return std::clamp(i, 0, bins - 1);
}

struct RunTrace {
  std::vector<int> step;
  std::vector<double> e_over_p;
  std::vector<double> eps_g;
  std::vector<double> acceptance;  // over the last adapt_interval steps
  std::vector<double> sigma;
  FullOverlapMatrix final_overlaps;
  double window_eps_g = 0.0;
  double window_e_over_p = 0.0;
  double window_acceptance = 0.0;
  std::vector<long long> r_counts;  // R_im histogram counts over the window
};

struct WindowStats {
  double mean = 0.0;
  double std_dev = 0.0;    // across runs
  double std_error = 0.0;  // std_dev / sqrt(runs)
};

inline WindowStats window_stats(const std::vector<double>& v) {
  WindowStats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= v.size();
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std_dev = std::sqrt(ss / (v.size() - 1));
    s.std_error = s.std_dev / std::sqrt(static_cast<double>(v.size()));
  }
  return s;
}

struct McObservables {
  McConfig config;
  std::vector<RunTrace> runs;
  WindowStats eps_g;
  WindowStats e_over_p;
  WindowStats acceptance;
  Histogram histogram;
};

/// One trajectory: teacher, data, initial student and Metropolis noise all
/// come from streams of (seed, run index).
inline RunTrace run_single(const McConfig& c, int run_index) {
  const std::uint64_t run_seed = c.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(run_index);
  const Weights teacher = make_teacher(c.N, c.M, run_seed);
  const Dataset data = make_dataset(c.N, c.P(), teacher, c.activation, run_seed);
  Rng rng = make_rng(run_seed, 3);
  Chain chain(init_student(teacher, c.K, c.init_bias, c.init_magnitude, rng), data, c.activation);

  RunTrace t;
  t.r_counts.assign(kHistogramBins, 0);
  double sigma = c.step_sigma;
  std::vector<bool> recent;
  std::deque<bool> rolling;
  int rolling_acc = 0;
  const int window_start = c.mcs_total - c.measure_window;  // steps > window_start are measured
  double sum_eps = 0.0, sum_ep = 0.0;
  int n_window = 0, acc_window = 0;
  const double p = static_cast<double>(data.P());

  for (int s = 1; s <= c.mcs_total; ++s) {
    const StepResult r = chain.step(c.beta, sigma, rng);
    recent.push_back(r.accepted);
    rolling.push_back(r.accepted);
    rolling_acc += r.accepted;
    if (static_cast<int>(rolling.size()) > c.adapt_interval) {
      rolling_acc -= rolling.front();
      rolling.pop_front();
    }
    if (s % c.adapt_interval == 0) {
      sigma = adapt_sigma(recent, sigma, s > c.burn_in_steps(), c.target_acceptance);
      recent.clear();
    }
    const bool in_window = s > window_start;
    if (in_window) acc_window += r.accepted;
    if (s % c.record_every != 0 && !in_window && s != c.mcs_total) continue;

    const FullOverlapMatrix m = overlaps(chain.weights(), teacher);
    const double eg = eps_g_general(c.activation, m);
    const double ep = chain.energy_value() / p;
    if (s % c.record_every == 0 || s == c.mcs_total) {
      t.step.push_back(s);
      t.e_over_p.push_back(ep);
      t.eps_g.push_back(eg);
      t.acceptance.push_back(static_cast<double>(rolling_acc) / rolling.size());
      t.sigma.push_back(sigma);
    }
    if (in_window) {
      sum_eps += eg;
      sum_ep += ep;
      ++n_window;
      for (Eigen::Index i = 0; i < m.R.size(); ++i) ++t.r_counts[histogram_bin(m.R.data()[i])];
    }
    if (s == c.mcs_total) t.final_overlaps = m;
  }
  t.window_eps_g = sum_eps / n_window;
  t.window_e_over_p = sum_ep / n_window;
  t.window_acceptance = static_cast<double>(acc_window) / c.measure_window;
  return t;
}

/// All runs, spread over up to `threads` workers. Results do not depend on
/// the thread count.
inline McObservables run(const McConfig& c, int threads = 1) {
  if (auto p = c.problem()) throw std::invalid_argument("McConfig: " + *p);
  McObservables obs;
  obs.config = c;
  obs.runs.resize(c.runs);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < c.runs; i = next++) obs.runs[i] = run_single(c, i);
  };
  const int nt = std::clamp(threads, 1, c.runs);
  if (nt == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nt; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  std::vector<double> eg, ep, acc;
  std::vector<long long> counts(kHistogramBins, 0);
  for (const auto& r : obs.runs) {
    eg.push_back(r.window_eps_g);
    ep.push_back(r.window_e_over_p);
    acc.push_back(r.window_acceptance);
    for (int b = 0; b < kHistogramBins; ++b) counts[b] += r.r_counts[b];
  }
  obs.eps_g = window_stats(eg);
  obs.e_over_p = window_stats(ep);
  obs.acceptance = window_stats(acc);
  obs.histogram = Histogram::from_counts(counts);
  return obs;
}

}  // namespace scm::mc
