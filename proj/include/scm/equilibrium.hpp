#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "scm/activations.hpp"
#include "scm/free_energy.hpp"
#include "scm/gen_error.hpp"
#include "scm/order_params.hpp"

namespace scm {

enum class BranchLabel { Unspecialized, PositiveSpecialized, NegativeSpecialized };
enum class TransitionOrder { First, Second };

inline std::string_view to_string(BranchLabel l) {
  switch (l) {
    case BranchLabel::Unspecialized: return "unspecialized";
    case BranchLabel::PositiveSpecialized: return "positive";
    case BranchLabel::NegativeSpecialized: return "negative";
  }
  return "?";
}

inline std::string_view to_string(TransitionOrder o) { return o == TransitionOrder::First ? "first" : "second"; }

inline constexpr double kLabelTolerance = 1e-6;

inline BranchLabel classify(const SiteSymmetricState& s, double tol = kLabelTolerance) {
  const double d = s.R - s.S;
  if (d >= tol) return BranchLabel::PositiveSpecialized;
  if (-d >= tol) return BranchLabel::NegativeSpecialized;
  return BranchLabel::Unspecialized;
}

struct MinimizerOptions {
  double grad_tol = 1e-10;
  int max_iter = 2000;
  double max_step = 0.1;
  bool escape_saddles = true;
};

/// A stationary point of beta f with its diagnostics.
struct Stationary {
  SiteSymmetricState state;
  double alpha = 0.0;
  double beta_f = 0.0;
  double eps_g = 0.0;
  double min_eig = 0.0;
  double grad_norm = 0.0;
  BranchLabel label = BranchLabel::Unspecialized;
  bool converged = false;
  int iterations = 0;

  bool is_minimum() const { return converged && min_eig > 0.0; }
};

namespace detail {

// Modified Newton on a low-dimensional affine slice y -> state(y). The Hessian
// is made positive definite by flipping and flooring its eigenvalues, steps
// are capped in length and back-tracked until the iterate stays interior and
// the objective decreases. Stationary saddles are left along the softest
// direction when escape is enabled.
struct SliceProblem {
  std::function<SiteSymmetricState(const Eigen::VectorXd&)> to_state;
  Eigen::MatrixXd jac;  // 3 x dim, d(R,S,C)/dy
};

inline Stationary finish(Activation a, double alpha, const SiteSymmetricState& s, double gnorm, bool conv,
                         int it) {
  Stationary r;
  r.state = s;
  r.alpha = alpha;
  r.beta_f = *try_beta_f(a, s, alpha);
  r.eps_g = eps_g_site(a, s);
  r.min_eig = min_hessian_eigenvalue(a, s, alpha);
  r.grad_norm = gnorm;
  r.label = classify(s);
  r.converged = conv;
  r.iterations = it;
  return r;
}

inline Stationary newton_on_slice(Activation a, double alpha, const SliceProblem& p, Eigen::VectorXd y,
                                  const MinimizerOptions& opt) {
  auto value = [&](const Eigen::VectorXd& v) -> std::optional<double> {
    return try_beta_f(a, p.to_state(v), alpha);
  };
  auto gradient = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return p.jac.transpose() * grad_beta_f(a, p.to_state(v), alpha);
  };
  auto hessian = [&](const Eigen::VectorXd& v) -> Eigen::MatrixXd {
    return p.jac.transpose() * hessian_site(a, p.to_state(v), alpha) * p.jac;
  };

  if (!value(y)) throw DomainError("minimize: start state is not interior");
  double f = *value(y);
  int it = 0;
  int escapes = 0;
  const double gtol = opt.grad_tol;
  // Gradient entries grow like alpha K, and so does their round-off: a
  // stalled iterate below this floor counts as converged.
  const double noise_floor = 1e-10 * std::max(1.0, alpha * p.to_state(y).K);
  double best_gnorm = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (; it < opt.max_iter; ++it) {
    const Eigen::VectorXd g = gradient(y);
    const Eigen::MatrixXd h = hessian(y);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    const Eigen::VectorXd lam = es.eigenvalues();
    const double gnorm = g.norm();

    if (gnorm < gtol) {
      if (lam(0) > 0.0 || !opt.escape_saddles || escapes > 20)
        return finish(a, alpha, p.to_state(y), gnorm, true, it);
      // Saddle: probe both signs of the softest direction, positive
      // specialization first so ties resolve deterministically.
      Eigen::VectorXd v = es.eigenvectors().col(0);
      const Eigen::Vector3d dv = p.jac * v;
      if (dv(0) - dv(1) < 0.0) v = -v;
      ++escapes;
      bool moved = false;
      for (double t = 0.05; t > 1e-9 && !moved; t *= 0.5) {
        double best = f;
        Eigen::VectorXd best_y = y;
        for (double sgn : {1.0, -1.0}) {
          const Eigen::VectorXd yn = y + sgn * t * v;
          if (auto fn = value(yn); fn && *fn < best - 1e-15) {
            best = *fn;
            best_y = yn;
          }
        }
        if (best < f) {
          y = best_y;
          f = best;
          moved = true;
        }
      }
      if (!moved) return finish(a, alpha, p.to_state(y), gnorm, true, it);
      continue;
    }

    if (gnorm < 0.5 * best_gnorm) {
      best_gnorm = gnorm;
      stalled = 0;
    } else if (++stalled > 50) {
      if (gnorm < noise_floor && lam(0) > 0.0) return finish(a, alpha, p.to_state(y), gnorm, true, it);
      break;
    }
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    Eigen::VectorXd lam_mod = lam.cwiseAbs().cwiseMax(std::max(1e-10, 1e-14 * scale));
    Eigen::VectorXd step =
        -es.eigenvectors() * (es.eigenvectors().transpose() * g).cwiseQuotient(lam_mod);
    const bool pd = lam(0) > 0.0;
    // The predicted decrease is below the resolution of f: keep taking plain
    // Newton steps while they halve the gradient, and stop once round-off in
    // an ill-conditioned Hessian prevents that.
    if (pd && step.norm() < 1e-11 && -g.dot(step) < 1e-14 * (1.0 + std::abs(f))) {
      const Eigen::VectorXd yn = y + step;
      if (const auto fn = value(yn); fn && gradient(yn).norm() < 0.5 * gnorm) {
        y = yn;
        f = *fn;
        continue;
      }
      return finish(a, alpha, p.to_state(y), gnorm, true, it);
    }
    if (step.norm() > opt.max_step) step *= opt.max_step / step.norm();
    const double slope = g.dot(step);

    bool accepted = false;
    for (double t = 1.0; t > 1e-14; t *= 0.5) {
      const Eigen::VectorXd yn = y + t * step;
      const auto fn = value(yn);
      if (!fn) continue;
      if (*fn <= f + 1e-4 * t * slope) {
        y = yn;
        f = *fn;
        accepted = true;
        break;
      }
      // Near convergence the predicted decrease drops below round-off; a
      // full Newton step that shrinks the gradient is accepted then.
      if (pd && t == 1.0 && gradient(yn).norm() < gnorm && std::abs(*fn - f) < 1e-12 * (1.0 + std::abs(f))) {
        y = yn;
        f = *fn;
        accepted = true;
        break;
      }
    }
    if (!accepted) return finish(a, alpha, p.to_state(y), gnorm, gnorm < noise_floor && pd, it);
  }
  return finish(a, alpha, p.to_state(y), gradient(y).norm(), false, it);
}

inline SliceProblem full_slice(int K) {
  SliceProblem p;
  if (K == 1) {
    p.jac = Eigen::MatrixXd::Zero(3, 1);
    p.jac(0, 0) = 1.0;
    p.to_state = [](const Eigen::VectorXd& y) { return SiteSymmetricState::single(y(0)); };
  } else {
    p.jac = Eigen::MatrixXd::Identity(3, 3);
    p.to_state = [K](const Eigen::VectorXd& y) { return SiteSymmetricState{K, y(0), y(1), y(2)}; };
  }
  return p;
}

inline SliceProblem symmetric_slice(int K) {
  if (K == 1) return full_slice(1);
  SliceProblem p;
  p.jac = Eigen::MatrixXd::Zero(3, 2);
  p.jac(0, 0) = p.jac(1, 0) = 1.0;
  p.jac(2, 1) = 1.0;
  p.to_state = [K](const Eigen::VectorXd& y) { return SiteSymmetricState{K, y(0), y(0), y(1)}; };
  return p;
}

// Shrink a start toward the origin until it lies inside the entropy domain.
inline SiteSymmetricState make_interior(SiteSymmetricState s) {
  for (int i = 0; i < 200 && !s.interior(); ++i) {
    s.R *= 0.9;
    s.S *= 0.9;
    s.C *= 0.9;
  }
  if (!s.interior()) throw DomainError("start state cannot be moved into the entropy domain");
  return s;
}

}  // namespace detail

/// Local minimum of beta f reached from start. Iterates stay interior; a
/// result with converged == false carries the best iterate.
inline Stationary minimize_from(Activation a, int K, double alpha, SiteSymmetricState start,
                                const MinimizerOptions& opt = {}) {
  start.K = K;
  if (K == 1) start.S = start.C = 0.0;
  if (!start.interior()) throw DomainError("minimize_from: start state is not interior");
  const auto p = detail::full_slice(K);
  Eigen::VectorXd y(K == 1 ? 1 : 3);
  if (K == 1)
    y << start.R;
  else
    y << start.R, start.S, start.C;
  return detail::newton_on_slice(a, alpha, p, y, opt);
}

/// Stationary point of beta f restricted to R = S. It is stationary in the
/// full site-symmetric space and exists whether or not it is stable there.
inline Stationary symmetric_stationary(Activation a, int K, double alpha, SiteSymmetricState start = {},
                                       const MinimizerOptions& opt = {}) {
  if (K == 1) return minimize_from(a, 1, alpha, start, opt);
  start.K = K;
  start.S = start.R;
  start = detail::make_interior(start);
  MinimizerOptions o = opt;
  o.escape_saddles = false;
  Eigen::VectorXd y(2);
  y << start.R, start.C;
  return detail::newton_on_slice(a, alpha, detail::symmetric_slice(K), y, o);
}

struct StartBattery {
  double eps = 1e-3;
  double delta = 1e-4;
};

inline std::vector<SiteSymmetricState> start_battery(int K, const StartBattery& b = {}) {
  if (K == 1) return {SiteSymmetricState::single(b.eps), SiteSymmetricState::single(0.9)};
  std::vector<SiteSymmetricState> v = {
      {K, b.eps, b.eps, 0.0},
      {K, b.eps + b.delta, b.eps, 0.0},
      {K, b.eps - b.delta, b.eps, 0.0},
      {K, 0.9, std::min(0.01, 0.1 / K), 0.01},
  };
  for (auto& s : v) s = detail::make_interior(s);
  return v;
}

/// Distinct local minima found from the start battery plus extra seeds,
/// sorted by beta f.
inline std::vector<Stationary> multistart(Activation a, int K, double alpha,
                                          const std::vector<SiteSymmetricState>& seeds = {},
                                          const MinimizerOptions& opt = {}, double dedup = 1e-6) {
  std::vector<SiteSymmetricState> starts = start_battery(K);
  for (auto s : seeds) {
    s.K = K;
    if (s.interior()) starts.push_back(s);
  }
  std::vector<Stationary> out;
  for (const auto& s : starts) {
    const Stationary r = minimize_from(a, K, alpha, s, opt);
    if (!r.is_minimum()) continue;
    const bool dup = std::any_of(out.begin(), out.end(),
                                 [&](const Stationary& o) { return state_distance(o.state, r.state) < dedup; });
    if (!dup) out.push_back(r);
  }
  std::sort(out.begin(), out.end(), [](const Stationary& x, const Stationary& y) { return x.beta_f < y.beta_f; });
  return out;
}

// ---------------------------------------------------------------------------
// Branch continuation

struct BranchPoint {
  double alpha = 0.0;
  SiteSymmetricState state;
  double beta_f = 0.0;
  double eps_g = 0.0;
  double min_eig = 0.0;
  BranchLabel label = BranchLabel::Unspecialized;
};

struct EquilibriumBranch {
  Activation activation = Activation::ReLU;
  int K = 2;
  int id = 0;
  std::vector<BranchPoint> points;
};

inline BranchPoint to_branch_point(const Stationary& s) {
  return {s.alpha, s.state, s.beta_f, s.eps_g, s.min_eig, s.label};
}

inline constexpr double kBranchMatchDistance = 0.05;

/// Follow a minimum from (alpha0, state0) to alpha1, halving the alpha step
/// whenever consecutive minima are further apart than the match distance.
inline std::optional<Stationary> continue_minimum(Activation a, int K, double alpha0,
                                                  const SiteSymmetricState& state0, double alpha1,
                                                  const MinimizerOptions& opt = {}, int max_depth = 8) {
  const Stationary r = minimize_from(a, K, alpha1, state0, opt);
  if (r.is_minimum() && state_distance(r.state, state0) < kBranchMatchDistance) return r;
  if (max_depth == 0) return std::nullopt;
  const double mid = 0.5 * (alpha0 + alpha1);
  const auto m = continue_minimum(a, K, alpha0, state0, mid, opt, max_depth - 1);
  if (!m) return std::nullopt;
  return continue_minimum(a, K, mid, m->state, alpha1, opt, max_depth - 1);
}

inline std::vector<EquilibriumBranch> trace_branches(Activation a, int K, const std::vector<double>& grid,
                                                     const MinimizerOptions& opt = {}) {
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("trace_branches: grid must be strictly increasing");
  std::vector<EquilibriumBranch> branches;
  std::vector<std::size_t> active;
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    const double alpha = grid[gi];
    std::vector<std::size_t> still;
    std::vector<Stationary> continued;
    for (const std::size_t b : active) {
      const BranchPoint& last = branches[b].points.back();
      const auto r = continue_minimum(a, K, last.alpha, last.state, alpha, opt);
      if (!r) continue;
      // Two branches landing on one minimum: keep the one that was closer.
      bool merged = false;
      for (std::size_t c = 0; c < continued.size(); ++c) {
        if (state_distance(continued[c].state, r->state) < 1e-6) {
          merged = true;
          const auto& other = branches[still[c]].points.back();
          if (state_distance(last.state, r->state) < state_distance(other.state, r->state)) {
            still[c] = b;
            continued[c] = *r;
          }
        }
      }
      if (merged) continue;
      still.push_back(b);
      continued.push_back(*r);
    }
    for (std::size_t c = 0; c < still.size(); ++c) branches[still[c]].points.push_back(to_branch_point(continued[c]));
    active = still;
    for (const Stationary& m : multistart(a, K, alpha, {}, opt)) {
      const bool known = std::any_of(continued.begin(), continued.end(), [&](const Stationary& c) {
        return state_distance(c.state, m.state) < 1e-6;
      });
      if (known) continue;
      EquilibriumBranch nb{a, K, static_cast<int>(branches.size()), {to_branch_point(m)}};
      branches.push_back(std::move(nb));
      active.push_back(branches.size() - 1);
      continued.push_back(m);
    }
  }
  return branches;
}

// ---------------------------------------------------------------------------
// Critical points

struct PhaseSummary {
  Activation activation = Activation::ReLU;
  std::optional<int> K;  // nullopt: K -> infinity
  std::optional<double> alpha_s;
  double alpha_c = 0.0;
  std::optional<double> alpha_d;
  TransitionOrder transition_order = TransitionOrder::Second;
};

struct Transition {
  double alpha_c = 0.0;
  TransitionOrder order = TransitionOrder::Second;
};

inline constexpr double kAlphaTolerance = 1e-3;

namespace detail {

inline double bisect(const std::function<bool(double)>& is_high, double lo, double hi, double tol) {
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (is_high(mid) ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

// Symmetric stationary points, continued along alpha and cached so repeated
// queries start from the nearest solved alpha.
class SymmetricTrack {
 public:
  SymmetricTrack(Activation a, int K) : a_(a), K_(K) {}

  Stationary at(double alpha) {
    SiteSymmetricState start{K_, 1e-3, 1e-3, 0.0};
    if (!cache_.empty()) {
      auto it = cache_.lower_bound(alpha);
      if (it == cache_.end()) --it;
      else if (it != cache_.begin() && std::abs(std::prev(it)->first - alpha) < std::abs(it->first - alpha)) --it;
      start = it->second.state;
    }
    Stationary r = symmetric_stationary(a_, K_, alpha, start);
    if (!r.converged) r = symmetric_stationary(a_, K_, alpha, SiteSymmetricState{K_, 1e-3, 1e-3, 0.0});
    if (r.converged) cache_[alpha] = r;
    return r;
  }

 private:
  Activation a_;
  int K_;
  std::map<double, Stationary> cache_;
};

// First alpha in [lo, hi] where the symmetric stationary point loses
// stability, i.e. the smallest site-Hessian eigenvalue crosses zero.
inline std::optional<double> symmetric_instability(Activation a, int K, double lo, double hi, double tol,
                                                   int scan = 100) {
  SymmetricTrack track(a, K);
  double prev = lo;
  if (track.at(lo).min_eig <= 0.0) return std::nullopt;
  for (int i = 1; i <= scan; ++i) {
    const double x = lo + (hi - lo) * i / scan;
    if (track.at(x).min_eig <= 0.0) {
      return bisect([&](double al) { return track.at(al).min_eig <= 0.0; }, prev, x, tol);
    }
    prev = x;
  }
  return std::nullopt;
}

struct SpecializedTrace {
  std::map<double, Stationary> points;  // alpha -> positively specialized minimum
  std::optional<double> appearance;     // lowest alpha with the minimum present (to tol)
};

inline std::optional<Stationary> positive_minimum(Activation a, int K, double alpha) {
  for (const Stationary& m : multistart(a, K, alpha))
    if (m.label == BranchLabel::PositiveSpecialized) return m;
  return std::nullopt;
}

// Follow the positively specialized minimum downward from hi until it
// disappears, then bisect the appearance point.
inline SpecializedTrace trace_specialized_down(Activation a, int K, double lo, double hi, double tol,
                                               int scan = 100) {
  SpecializedTrace t;
  auto top = positive_minimum(a, K, hi);
  if (!top) return t;
  t.points[hi] = *top;
  auto exists_from = [&](double alpha, const Stationary& from) -> std::optional<Stationary> {
    const Stationary r = minimize_from(a, K, alpha, from.state);
    if (r.is_minimum() && r.label == BranchLabel::PositiveSpecialized &&
        state_distance(r.state, from.state) < 4 * kBranchMatchDistance)
      return r;
    return std::nullopt;
  };
  Stationary last = *top;
  double last_alpha = hi;
  for (int i = 1; i <= scan; ++i) {
    const double x = hi - (hi - lo) * i / scan;
    auto r = continue_minimum(a, K, last_alpha, last.state, x);
    if (r && r->label != BranchLabel::PositiveSpecialized) r.reset();
    if (!r) {
      double yes = last_alpha, no = x;
      Stationary ref = last;
      while (yes - no > tol) {
        const double mid = 0.5 * (yes + no);
        if (auto m = exists_from(mid, ref)) {
          yes = mid;
          ref = *m;
          t.points[mid] = *m;
        } else {
          no = mid;
        }
      }
      t.appearance = yes;
      return t;
    }
    last = *r;
    last_alpha = x;
    t.points[x] = *r;
  }
  return t;  // present over the whole bracket
}

inline Stationary specialized_at(Activation a, int K, const SpecializedTrace& t, double alpha) {
  auto it = t.points.lower_bound(alpha);
  if (it == t.points.end()) --it;
  const auto r = continue_minimum(a, K, it->first, it->second.state, alpha);
  if (!r) throw std::runtime_error("specialized minimum lost during transition search");
  return *r;
}

}  // namespace detail

/// Appearance of the specialized minimum for a first-order transition;
/// nullopt when specialization sets in continuously.
inline std::optional<double> locate_spinodal(Activation a, int K, double lo, double hi,
                                             double tol = kAlphaTolerance) {
  const auto t = detail::trace_specialized_down(a, K, lo, hi, tol);
  if (t.points.empty() || !t.appearance)
    throw std::invalid_argument("locate_spinodal: specialized-minimum existence identical at both bracket ends");
  const auto inst = detail::symmetric_instability(a, K, lo, hi, tol);
  if (inst && *inst - *t.appearance <= 10 * tol) return std::nullopt;
  return t.appearance;
}

/// Critical alpha and order. First order: beta f crossing of the competing
/// minima. Second order: stability loss of the unspecialized state.
inline Transition locate_transition(Activation a, int K, double lo, double hi, double tol = kAlphaTolerance) {
  if (!(hi > lo)) throw std::invalid_argument("locate_transition: invalid bracket");
  const auto inst = detail::symmetric_instability(a, K, lo, hi, tol);
  const auto spec = detail::trace_specialized_down(a, K, lo, hi, tol);
  const double upper = inst ? *inst : hi;
  if (spec.appearance && upper - *spec.appearance > 10 * tol) {
    detail::SymmetricTrack sym(a, K);
    auto delta = [&](double al) {
      return detail::specialized_at(a, K, spec, al).beta_f - sym.at(al).beta_f;
    };
    const double a0 = *spec.appearance;
    if (delta(a0) > 0.0 && delta(upper) < 0.0) {
      return {detail::bisect([&](double al) { return delta(al) < 0.0; }, a0, upper, tol), TransitionOrder::First};
    }
  }
  if (!inst) throw std::invalid_argument("locate_transition: no transition inside the bracket");
  return {*inst, TransitionOrder::Second};
}

/// Disappearance of the unspecialized minimum in first-order systems, where
/// the suboptimal state turns negatively specialized.
inline std::optional<double> locate_disappearance(Activation a, int K, double lo, double hi,
                                                  double tol = kAlphaTolerance) {
  const auto inst = detail::symmetric_instability(a, K, lo, hi, tol);
  if (!inst) return std::nullopt;
  // Only first-order systems carry a coexisting specialized minimum below
  // the instability; a continuous bifurcation has none.
  const double below = *inst - std::max(0.01 * *inst, 20 * tol);
  const auto spec = detail::positive_minimum(a, K, below);
  if (!spec) return std::nullopt;
  const auto sym = symmetric_stationary(a, K, below);
  if (state_distance(spec->state, sym.state) < kBranchMatchDistance) return std::nullopt;
  return inst;
}

/// Alpha where C of the R = S stationary point changes sign. In first-order
/// systems this sits close to, but not exactly at, locate_disappearance.
inline std::optional<double> locate_c_sign_change(Activation a, int K, double lo, double hi,
                                                  double tol = kAlphaTolerance, int scan = 100) {
  detail::SymmetricTrack track(a, K);
  auto sign = [&](double al) { return track.at(al).state.C > 0.0; };
  const bool s0 = sign(lo);
  double prev = lo;
  for (int i = 1; i <= scan; ++i) {
    const double x = lo + (hi - lo) * i / scan;
    if (sign(x) != s0) return detail::bisect([&](double al) { return sign(al) != s0; }, prev, x, tol);
    prev = x;
  }
  return std::nullopt;
}

inline PhaseSummary phase_summary(Activation a, int K, double lo, double hi, double tol = kAlphaTolerance) {
  PhaseSummary p;
  p.activation = a;
  p.K = K;
  const Transition t = locate_transition(a, K, lo, hi, tol);
  p.alpha_c = t.alpha_c;
  p.transition_order = t.order;
  if (t.order == TransitionOrder::First) {
    p.alpha_s = detail::trace_specialized_down(a, K, lo, hi, tol).appearance;
    p.alpha_d = locate_disappearance(a, K, t.alpha_c, hi, tol);
  }
  return p;
}

// ---------------------------------------------------------------------------
// K -> infinity

/// Leading-order theory for K -> infinity. With R = O(1) on the diagonal,
/// S = (1 - R)/K and C = o(1/K) the free energy per hidden unit reduces to
/// alpha e(R) - ln(1 - R^2)/2. R = 0 is the unspecialized state R = S = 1/K.
namespace large_k {

inline double eps_g(Activation a, double R) {
  using std::numbers::pi;
  if (a == Activation::ErfSigmoid) return 1.0 / 3.0 - 1.0 / pi + R / pi - (2.0 / pi) * std::asin(R / 2.0);
  return 0.25 - (std::sqrt(1.0 - R * R) + R * std::asin(R)) / (2.0 * pi);
}

inline double eps_g_d1(Activation a, double R) {
  using std::numbers::pi;
  if (a == Activation::ErfSigmoid) return (1.0 - 1.0 / std::sqrt(1.0 - R * R / 4.0)) / pi;
  return -std::asin(R) / (2.0 * pi);
}

inline double eps_g_d2(Activation a, double R) {
  using std::numbers::pi;
  if (a == Activation::ErfSigmoid) return -R / (4.0 * pi * std::pow(1.0 - R * R / 4.0, 1.5));
  return -1.0 / (2.0 * pi * std::sqrt(1.0 - R * R));
}

/// beta f / K.
inline double beta_f(Activation a, double R, double alpha) {
  return alpha * eps_g(a, R) - 0.5 * std::log(1.0 - R * R);
}

inline double grad(Activation a, double R, double alpha) {
  return alpha * eps_g_d1(a, R) + R / (1.0 - R * R);
}

inline double curvature(Activation a, double R, double alpha) {
  return alpha * eps_g_d2(a, R) + (1.0 + R * R) / ((1.0 - R * R) * (1.0 - R * R));
}

struct LimitPoint {
  double alpha = 0.0;
  double R = 0.0;  // order-one diagonal overlap
  double eps_g = 0.0;
  double beta_f = 0.0;  // per hidden unit
  double curvature = 0.0;
  BranchLabel label = BranchLabel::Unspecialized;

  /// S scaled by K (S = scaled_S / K).
  double scaled_S() const { return 1.0 - R; }
};

inline LimitPoint point(Activation a, double R, double alpha) {
  LimitPoint p{alpha, R, eps_g(a, R), beta_f(a, R, alpha), curvature(a, R, alpha), BranchLabel::Unspecialized};
  if (R >= kLabelTolerance) p.label = BranchLabel::PositiveSpecialized;
  if (R <= -kLabelTolerance) p.label = BranchLabel::NegativeSpecialized;
  return p;
}

/// Local minimum of the per-unit free energy by damped Newton from R0.
inline std::optional<LimitPoint> minimize(Activation a, double alpha, double R0) {
  double R = R0;
  for (int it = 0; it < 500; ++it) {
    const double g = grad(a, R, alpha);
    if (std::abs(g) < 1e-13) break;
    const double c = curvature(a, R, alpha);
    double step = -g / std::max(std::abs(c), 1e-8);
    step = std::clamp(step, -0.05, 0.05);
    const double f0 = beta_f(a, R, alpha);
    double t = 1.0;
    while (t > 1e-14) {
      const double rn = R + t * step;
      if (std::abs(rn) < 1.0 && (beta_f(a, rn, alpha) <= f0 || std::abs(grad(a, rn, alpha)) < std::abs(g))) break;
      t *= 0.5;
    }
    if (t <= 1e-14) break;
    R += t * step;
  }
  if (std::abs(grad(a, R, alpha)) > 1e-9 || curvature(a, R, alpha) <= 0.0) return std::nullopt;
  return point(a, R, alpha);
}

/// All stable limit minima at alpha: unspecialized plus specialized ones.
inline std::vector<LimitPoint> minima(Activation a, double alpha) {
  std::vector<LimitPoint> out;
  for (double r0 : {0.0, 0.99, -0.99}) {
    auto m = minimize(a, alpha, r0);
    if (!m) continue;
    if (std::none_of(out.begin(), out.end(), [&](const LimitPoint& o) { return std::abs(o.R - m->R) < 1e-6; }))
      out.push_back(*m);
  }
  std::sort(out.begin(), out.end(), [](const LimitPoint& x, const LimitPoint& y) { return x.R > y.R; });
  return out;
}

/// Alpha at which R > 0 is stationary: alpha(R) = -R / ((1 - R^2) e'(R)).
inline double stationary_alpha(Activation a, double R) { return -R / ((1.0 - R * R) * eps_g_d1(a, R)); }

inline PhaseSummary summary(Activation a) {
  PhaseSummary p;
  p.activation = a;
  p.K = std::nullopt;
  if (a == Activation::ReLU) {
    // Curvature at R = 0 is 1 + alpha e''(0).
    p.alpha_c = detail::bisect([&](double al) { return curvature(a, 0.0, al) <= 0.0; }, 1.0, 20.0, 1e-12);
    p.transition_order = TransitionOrder::Second;
    return p;
  }
  // Spinodal: minimum of alpha(R) on (0, 1), by golden-section search.
  double lo = 1e-3, hi = 0.999;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  while (hi - lo > 1e-12) {
    if (stationary_alpha(a, x1) < stationary_alpha(a, x2)) {
      hi = x2;
      x2 = x1;
      x1 = hi - phi * (hi - lo);
    } else {
      lo = x1;
      x1 = x2;
      x2 = lo + phi * (hi - lo);
    }
  }
  const double r_s = 0.5 * (lo + hi);
  p.alpha_s = stationary_alpha(a, r_s);
  // Stable specialized root of alpha(R) = alpha lies above r_s.
  auto spec_R = [&](double alpha) {
    return detail::bisect([&](double r) { return stationary_alpha(a, r) >= alpha; }, r_s, 1.0 - 1e-15, 1e-14);
  };
  auto delta = [&](double alpha) {
    return beta_f(a, spec_R(alpha), alpha) - beta_f(a, 0.0, alpha);
  };
  double top = *p.alpha_s * 1.01;
  while (delta(top) > 0.0) top *= 1.5;
  p.alpha_c = detail::bisect([&](double al) { return delta(al) < 0.0; }, *p.alpha_s, top, 1e-10);
  p.transition_order = TransitionOrder::First;
  return p;
}

}  // namespace large_k

}  // namespace scm
