#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "brhc/core.hpp"
#include "brhc/objective.hpp"

namespace brhc {

// ---------------------------------------------------------------------------
// Limited-memory BFGS with backtracking (Armijo) line search.
// ---------------------------------------------------------------------------

struct LbfgsOptions {
  int memory = 10;
  int max_iterations = 1000;
  double gradient_tolerance = 1e-6;  // infinity norm
  // Stop once `patience` consecutive steps each lower f by less than this; 0 disables.
  double function_tolerance = 0.0;
  int patience = 3;
  double armijo = 1e-4;
};

struct LbfgsResult {
  Vector x;
  double value = 0.0;
  Vector gradient;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes f; `fg(x, grad)` returns f(x) and writes the gradient.
/// `on_step(iteration, x, value)` is called after every accepted step.
inline LbfgsResult minimize_lbfgs(
    const std::function<double(const Vector&, Vector&)>& fg, Vector x, const LbfgsOptions& opt,
    const std::function<void(int, const Vector&, double)>& on_step = {}) {
  LbfgsResult res;
  Vector g(x.size());
  double f = fg(x, g);
  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;
  int stalls = 0;
  int flat = 0;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= opt.gradient_tolerance) {
      res.converged = true;
      break;
    }
    // Two-loop recursion.
    Vector q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    } else {
      q /= std::max(1.0, g.norm());
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += s_hist[i] * (alpha[i] - beta);
    }
    Vector dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      // Curvature information went bad; restart from steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -g / std::max(1.0, g.norm());
      slope = g.dot(dir);
    }

    double step = 1.0;
    Vector x_new(x.size()), g_new(x.size());
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + step * dir;
      f_new = fg(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + opt.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    const Vector s = x_new - x;
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double decrease = f - f_new;
    x = std::move(x_new);
    g = g_new;
    f = f_new;
    if (on_step) on_step(it + 1, x, f);
    stalls = decrease <= 1e-15 * (1.0 + std::abs(f)) ? stalls + 1 : 0;
    flat = decrease < opt.function_tolerance ? flat + 1 : 0;
    if (flat >= opt.patience && opt.function_tolerance > 0.0) {
      ++it;
      res.converged = true;
      break;
    }
    if (stalls >= 3) {
      ++it;
      break;
    }
  }
  res.x = std::move(x);
  res.value = f;
  res.gradient = std::move(g);
  res.iterations = it;
  if (!res.converged) res.converged = res.gradient.lpNorm<Eigen::Infinity>() <= opt.gradient_tolerance;
  return res;
}

// ---------------------------------------------------------------------------
// Plan problem
// ---------------------------------------------------------------------------

/// Affine terminal equality gain U + offset = goal.
struct TerminalConstraint {
  Matrix gain;
  Vector offset;
  Vector goal;

  Vector residual(const Vector& u) const { return gain * u + offset - goal; }
};

struct IterationRecord {
  int outer = 0;
  int iteration = 0;  // cumulative inner iteration
  double cost = 0.0;
  double residual = 0.0;
  double penalty = 0.0;
};

struct SolverOptions {
  double function_tolerance = 2e-3;
  double constraint_tolerance = 1e-8;
  int max_iterations = 5000;  // total inner iterations
  int max_outer = 40;
  int memory = 10;
  std::function<void(const IterationRecord&)> on_iteration;
};

struct PlanProblem {
  CostContext cost;
  TerminalConstraint terminal;
  std::optional<double> u_max;
  SolverOptions options;
  Vector initial;

  int horizon() const { return cost.horizon(); }
  int control_dim() const { return cost.control_dim(); }
  int state_dim() const { return static_cast<int>(terminal.goal.size()); }

  void validate() const {
    if (horizon() < 1) throw ConfigError("plan problem: horizon must be >= 1");
    if (!(options.function_tolerance > 0.0) || !(options.constraint_tolerance > 0.0)) {
      throw ConfigError("plan problem: tolerances must be > 0");
    }
    if (u_max && !(*u_max > 0.0)) throw ConfigError("plan problem: u_max must be > 0");
    require_dim(initial, cost.num_variables(), "initial guess");
    if (terminal.gain.rows() != state_dim() || terminal.gain.cols() != cost.num_variables()) {
      throw ConfigError("plan problem: terminal constraint shape mismatch");
    }
  }

  /// Number of doubles held by the problem. Independent of the particle count.
  std::size_t allocated_scalars() const {
    std::size_t n = 0;
    for (const auto& s : cost.summary.scatter) n += s.size();
    for (const auto& g : cost.trajectory.gain) n += g.size();
    for (const auto& o : cost.trajectory.offset) n += o.size();
    n += cost.weights.control.size();
    for (const auto& e : cost.obstacles.ellipsoids) n += e.center.size() + e.alpha.size();
    n += terminal.gain.size() + terminal.offset.size() + terminal.goal.size() + initial.size();
    return n;
  }
};

enum class SolveStatus { converged, max_iterations };

inline const char* to_string(SolveStatus s) {
  return s == SolveStatus::converged ? "converged" : "max-iterations";
}

struct PlanSolution {
  Vector controls;
  std::vector<Vector> map_trajectory;
  CostBreakdown cost;
  double terminal_residual = 0.0;
  double bound_violation = 0.0;
  double stationarity = 0.0;  // inf-norm of the Lagrangian gradient before projection
  int iterations = 0;
  int outer_iterations = 0;
  double wall_time = 0.0;
  SolveStatus status = SolveStatus::max_iterations;
  int start_index = 0;  // which start won under multi-start

  int horizon() const { return static_cast<int>(map_trajectory.size()) - 1; }
  Vector control(int t, int nu) const { return controls.segment(t * nu, nu); }
};

struct ProblemSize {
  int num_variables = 0;
  int num_constraint_rows = 0;
};

/// Sizes from the horizon and dimensions only: K n_u variables, n_x terminal
/// rows plus one bound row per step when u_max is set.
inline ProblemSize problem_size(int horizon, int nx, int nu, bool bounded) {
  return {horizon * nu, nx + (bounded ? horizon : 0)};
}

inline ProblemSize problem_size(const PlanProblem& p) {
  return problem_size(p.horizon(), p.state_dim(), p.control_dim(), p.u_max.has_value());
}

/// Drop the first control and repeat the last one.
inline Vector warm_start(const Vector& previous, int nu) {
  if (nu <= 0 || previous.size() % nu != 0 || previous.size() == 0) {
    throw ConfigError("warm_start: control vector length is not a multiple of n_u");
  }
  const auto n = previous.size();
  Vector next(n);
  next.head(n - nu) = previous.tail(n - nu);
  next.tail(nu) = previous.tail(nu);
  return next;
}

inline Vector warm_start(const PlanSolution& previous, int nu) {
  return warm_start(previous.controls, nu);
}

namespace detail {

inline double bound_violation(const Vector& u, int nu, double u_max) {
  double worst = 0.0;
  for (Eigen::Index t = 0; t < u.size() / nu; ++t) {
    worst = std::max(worst, u.segment(t * nu, nu).norm() - u_max);
  }
  return worst;
}

inline void project_to_ball(Vector& u, int nu, double u_max) {
  for (Eigen::Index t = 0; t < u.size() / nu; ++t) {
    auto seg = u.segment(t * nu, nu);
    const double n = seg.norm();
    if (n > u_max) seg *= u_max / n;
  }
}

}  // namespace detail

/// Augmented Lagrangian on the terminal equality, PHR multipliers on the
/// per-step bounds ||u_t||^2 <= u_max^2 (a squared hinge, quartic in u), and
/// L-BFGS on each smooth subproblem. The result is finished with a least-norm
/// correction onto the terminal affine set alternated with projection onto the
/// u_max balls.
inline PlanSolution solve(const PlanProblem& p) {
  p.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto& opt = p.options;
  const int nu = p.control_dim();
  const int k = p.horizon();
  const Matrix& gain = p.terminal.gain;

  Vector u = p.initial;
  double f0 = 0.0;
  try {
    f0 = total_cost(u, p.cost);
    if (!cost_gradient(u, p.cost).allFinite()) throw EvaluationError("non-finite gradient", 0);
  } catch (const EvaluationError& e) {
    throw InitializationError(std::string("solve: cost not finite at the initial guess: ") + e.what());
  }
  if (!std::isfinite(f0)) throw InitializationError("solve: cost not finite at the initial guess");

  Vector lambda = Vector::Zero(p.state_dim());
  Vector nu_bound = Vector::Zero(k);
  double mu = 10.0;
  double mu_bound = 10.0;
  const double u_max2 = p.u_max ? (*p.u_max) * (*p.u_max) : 0.0;

  auto bound_terms = [&](const Vector& x, Vector* grad) {
    double val = 0.0;
    if (!p.u_max) return val;
    for (int t = 0; t < k; ++t) {
      const auto seg = x.segment(t * nu, nu);
      const double gt = seg.squaredNorm() - u_max2;
      const double act = std::max(0.0, nu_bound(t) + mu_bound * gt);
      val += (act * act - nu_bound(t) * nu_bound(t)) / (2.0 * mu_bound);
      if (grad) grad->segment(t * nu, nu) += 2.0 * act * seg;
    }
    return val;
  };

  int total_iterations = 0;
  int outer = 0;
  double prev_cost = f0;
  double prev_residual = p.terminal.residual(u).norm();
  double stationarity = std::numeric_limits<double>::infinity();
  bool converged = false;
  const double inner_tol = 0.1 * opt.function_tolerance;

  for (outer = 1; outer <= opt.max_outer && total_iterations < opt.max_iterations; ++outer) {
    auto fg = [&](const Vector& x, Vector& grad) {
      const Vector c = p.terminal.residual(x);
      double val = 0.0;
      try {
        val = total_cost(x, p.cost);
        grad = cost_gradient(x, p.cost);
      } catch (const EvaluationError&) {
        grad = Vector::Zero(x.size());
        return std::numeric_limits<double>::infinity();
      }
      val += lambda.dot(c) + 0.5 * mu * c.squaredNorm();
      grad.noalias() += gain.transpose() * (lambda + mu * c);
      val += bound_terms(x, &grad);
      return val;
    };
    LbfgsOptions lo;
    lo.memory = opt.memory;
    lo.gradient_tolerance = inner_tol;
    lo.function_tolerance = inner_tol;
    lo.max_iterations = opt.max_iterations - total_iterations;
    const int base = total_iterations;
    std::function<void(int, const Vector&, double)> hook;
    if (opt.on_iteration) {
      hook = [&](int it, const Vector& x, double) {
        opt.on_iteration({outer, base + it, total_cost(x, p.cost), p.terminal.residual(x).norm(), mu});
      };
    }
    const LbfgsResult r = minimize_lbfgs(fg, u, lo, hook);
    total_iterations += std::max(r.iterations, 1);
    u = r.x;
    stationarity = r.gradient.lpNorm<Eigen::Infinity>();

    const Vector c = p.terminal.residual(u);
    const double residual = c.norm();
    const double cost = total_cost(u, p.cost);
    double bviol = 0.0;
    lambda += mu * c;
    if (p.u_max) {
      for (int t = 0; t < k; ++t) {
        const double gt = u.segment(t * nu, nu).squaredNorm() - u_max2;
        nu_bound(t) = std::max(0.0, nu_bound(t) + mu_bound * gt);
        bviol = std::max(bviol, gt);
      }
      if (bviol > 1e-10 * u_max2) mu_bound = std::min(mu_bound * 4.0, 1e8);
    }
    if (opt.on_iteration) opt.on_iteration({outer, total_iterations, cost, residual, mu});

    const bool cost_settled = std::abs(prev_cost - cost) < opt.function_tolerance;
    // The least-norm polish below removes residuals of this size exactly.
    const bool nearly_feasible = residual <= std::max(1e-6, opt.constraint_tolerance);
    if (cost_settled && nearly_feasible && r.converged && bviol <= 1e-6 * std::max(1.0, u_max2)) {
      converged = true;
      break;
    }
    if (residual > 0.25 * prev_residual) mu = std::min(mu * 10.0, 1e9);
    prev_cost = cost;
    prev_residual = residual;
  }

  // Polish: alternate projection onto {gain U + offset = goal} and the u_max balls.
  Eigen::LDLT<Matrix> gram(gain * gain.transpose());
  const bool full_rank = gram.info() == Eigen::Success && gram.vectorD().minCoeff() >
                         1e-12 * std::max(1.0, gram.vectorD().cwiseAbs().maxCoeff());
  for (int round = 0; round < 50; ++round) {
    if (full_rank) u -= gain.transpose() * gram.solve(p.terminal.residual(u));
    if (p.u_max) detail::project_to_ball(u, nu, *p.u_max);
    if (p.terminal.residual(u).norm() <= 0.1 * opt.constraint_tolerance) break;
  }

  PlanSolution sol;
  sol.controls = u;
  sol.map_trajectory = p.cost.trajectory.states(u);
  sol.cost = cost_breakdown(u, p.cost);
  sol.terminal_residual = p.terminal.residual(u).norm();
  sol.bound_violation = p.u_max ? std::max(0.0, detail::bound_violation(u, nu, *p.u_max)) : 0.0;
  sol.stationarity = stationarity;
  sol.iterations = total_iterations;
  sol.outer_iterations = std::min(outer, opt.max_outer);
  sol.status = converged && sol.terminal_residual <= opt.constraint_tolerance
                   ? SolveStatus::converged
                   : SolveStatus::max_iterations;
  sol.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

/// Solves from each initial guess (in parallel when `parallel` is set) and keeps
/// the best: converged before non-converged, then lowest cost, then lowest start index.
inline PlanSolution solve_multistart(PlanProblem p, const std::vector<Vector>& starts,
                                     bool parallel = false) {
  if (starts.empty()) return solve(p);
  std::vector<PlanSolution> sols(starts.size());
  if (parallel) {
    std::vector<std::future<PlanSolution>> futs;
    for (const auto& s : starts) {
      PlanProblem q = p;
      q.initial = s;
      q.options.on_iteration = nullptr;
      futs.push_back(std::async(std::launch::async, [q = std::move(q)] { return solve(q); }));
    }
    for (std::size_t i = 0; i < futs.size(); ++i) sols[i] = futs[i].get();
  } else {
    for (std::size_t i = 0; i < starts.size(); ++i) {
      p.initial = starts[i];
      sols[i] = solve(p);
    }
  }
  std::size_t best = 0;
  auto better = [](const PlanSolution& a, const PlanSolution& b) {
    const bool ac = a.status == SolveStatus::converged;
    const bool bc = b.status == SolveStatus::converged;
    if (ac != bc) return ac;
    return a.cost.total() < b.cost.total();
  };
  for (std::size_t i = 1; i < sols.size(); ++i) {
    if (better(sols[i], sols[best])) best = i;
  }
  sols[best].start_index = static_cast<int>(best);
  return sols[best];
}

}  // namespace brhc
