#pragma once

#include <chrono>
#include <cstdint>
#include <future>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "brhc/belief.hpp"
#include "brhc/objective.hpp"
#include "brhc/scenario.hpp"
#include "brhc/solver.hpp"

namespace brhc {

struct PlannerConfig {
  int horizon = 20;
  CostWeights weights;
  std::optional<double> u_max;
  SolverOptions solver;
  bool multistart = false;
  bool parallel = false;
  std::vector<Vector> waypoints;
  GoalSpec goal;
};

inline PlannerConfig planner_config(const Scenario& s) {
  PlannerConfig c;
  const auto& d = s.defaults;
  c.horizon = d.horizon;
  c.weights = {d.control_weight, d.beta};
  c.u_max = d.u_max;
  c.solver.function_tolerance = d.function_tolerance;
  c.solver.constraint_tolerance = d.constraint_tolerance;
  c.solver.max_iterations = d.max_iterations;
  c.multistart = d.multistart;
  c.waypoints = d.waypoints;
  c.goal = s.goal;
  return c;
}

inline Vector stack_controls(const std::vector<Vector>& us) {
  if (us.empty()) return Vector();
  const auto nu = us.front().size();
  Vector out(static_cast<Eigen::Index>(us.size()) * nu);
  for (std::size_t t = 0; t < us.size(); ++t) out.segment(static_cast<Eigen::Index>(t) * nu, nu) = us[t];
  return out;
}

inline std::vector<Vector> unstack_controls(const Vector& u, int nu) {
  if (nu <= 0 || u.size() % nu != 0) throw ConfigError("unstack_controls: length is not a multiple of n_u");
  std::vector<Vector> out;
  for (Eigen::Index t = 0; t < u.size() / nu; ++t) out.push_back(u.segment(t * nu, nu));
  return out;
}

/// K+1 states evenly spaced by arc length along start -> waypoints -> goal.
inline std::vector<Vector> polyline_states(const Vector& start, const std::vector<Vector>& waypoints,
                                           const Vector& goal, int horizon) {
  std::vector<Vector> pts{start};
  for (const auto& w : waypoints) pts.push_back(w);
  pts.push_back(goal);
  std::vector<double> cum{0.0};
  for (std::size_t i = 1; i < pts.size(); ++i) cum.push_back(cum.back() + (pts[i] - pts[i - 1]).norm());
  const double total = cum.back();
  std::vector<Vector> out;
  for (int t = 0; t <= horizon; ++t) {
    if (total <= 0.0) {
      out.push_back(start);
      continue;
    }
    const double s = total * t / horizon;
    std::size_t seg = 1;
    while (seg + 1 < pts.size() && cum[seg] < s) ++seg;
    const double len = cum[seg] - cum[seg - 1];
    const double a = len > 0.0 ? std::clamp((s - cum[seg - 1]) / len, 0.0, 1.0) : 1.0;
    out.push_back((1.0 - a) * pts[seg - 1] + a * pts[seg]);
  }
  out.back() = goal;
  return out;
}

/// Controls that track a state sequence: u_t = B^+ (x_{t+1} - f(x_t, 0)), with B
/// the control Jacobian at u = 0.
inline std::vector<Vector> tracking_controls(const ProcessModel& model, const std::vector<Vector>& states) {
  std::vector<Vector> us;
  const Vector zero = Vector::Zero(model.control_dim());
  for (std::size_t t = 0; t + 1 < states.size(); ++t) {
    const Matrix b = model.control_jacobian(states[t], zero);
    const Vector gap = states[t + 1] - step(model, states[t], zero);
    us.push_back(b.completeOrthogonalDecomposition().solve(gap));
  }
  return us;
}

/// Straight-line (or waypoint) initial controls from x_map to the goal.
inline Vector straight_line_controls(const ProcessModel& model, const Vector& x_map,
                                     const PlannerConfig& cfg) {
  return stack_controls(
      tracking_controls(model, polyline_states(x_map, cfg.waypoints, cfg.goal.state, cfg.horizon)));
}

/// Assembles the inner problem for belief b around the nominal obtained by
/// rolling `initial` out from the MAP estimate.
inline PlanProblem build_plan_problem(const World& w, const ParticleBelief& b, const Vector& x_map,
                                      const PlannerConfig& cfg, const Vector& initial) {
  const int nu = w.process->control_dim();
  if (cfg.horizon < 1) throw ConfigError("planner: horizon must be >= 1");
  require_dim(initial, cfg.horizon * nu, "initial controls");
  const auto controls = unstack_controls(initial, nu);
  const auto states = rollout(*w.process, x_map, controls);
  const LinearizedSystem lin = linearize_process(*w.process, states, controls);
  const ChainProducts chains(lin);

  PlanProblem p;
  p.cost.summary = offset_summaries(b, x_map, chains);
  p.cost.trajectory = build_map_trajectory(lin, x_map);
  p.cost.weights = cfg.weights;
  p.cost.obstacles = w.obstacles;
  p.cost.observation = w.observation;
  p.terminal = {p.cost.trajectory.gain.back(), p.cost.trajectory.offset.back(), cfg.goal.state};
  p.u_max = cfg.u_max;
  p.options = cfg.solver;
  p.initial = initial;
  return p;
}

/// Re-solves the inner problem from each belief, warm-started from the previous plan.
class RecedingHorizonPlanner {
 public:
  RecedingHorizonPlanner(World world, PlannerConfig cfg) : world_(std::move(world)), cfg_(std::move(cfg)) {}

  const PlannerConfig& config() const { return cfg_; }
  const World& world() const { return world_; }
  const std::optional<PlanSolution>& last() const { return last_; }
  void reset() { last_.reset(); }

  /// Plans `horizon` steps ahead (the configured K when <= 0). The previous
  /// plan, shifted by the `elapsed` steps executed since, seeds the solve when
  /// it still covers the horizon; otherwise the straight line to the goal does.
  PlanSolution plan(const ParticleBelief& b, int horizon = 0, int elapsed = 1) {
    b.validate();
    const int nu = world_.process->control_dim();
    PlannerConfig cfg = cfg_;
    if (horizon > 0) cfg.horizon = horizon;
    const Vector x_map = map_estimate(b);
    const Vector straight = straight_line_controls(*world_.process, x_map, cfg);
    const bool warm = last_ && last_->horizon() - elapsed >= cfg.horizon;
    Vector initial = straight;
    if (warm) {
      initial = last_->controls;
      for (int i = 0; i < elapsed; ++i) initial = warm_start(initial, nu);
      initial = initial.head(cfg.horizon * nu).eval();
    }
    PlanProblem p = build_plan_problem(world_, b, x_map, cfg, initial);
    PlanSolution sol;
    if (cfg.multistart) {
      std::vector<Vector> starts{initial, straight, Vector::Zero(initial.size())};
      if (!warm) starts.erase(starts.begin());
      sol = solve_multistart(p, starts, cfg.parallel);
    } else {
      sol = solve(p);
    }
    last_ = sol;
    return sol;
  }

  /// First control of a fresh plan.
  Vector policy(const ParticleBelief& b, int horizon = 0) {
    return plan(b, horizon).control(0, world_.process->control_dim());
  }

 private:
  World world_;
  PlannerConfig cfg_;
  std::optional<PlanSolution> last_;
};

// ---------------------------------------------------------------------------
// Closed loop
// ---------------------------------------------------------------------------

struct EpisodeSeeds {
  std::uint64_t process = 1;
  std::uint64_t measurement = 2;
  std::uint64_t belief = 3;

  static EpisodeSeeds from(std::uint64_t seed) {
    std::seed_seq seq{seed, seed >> 32};
    std::uint32_t v[6];
    seq.generate(v, v + 6);
    auto join = [&](int i) { return (static_cast<std::uint64_t>(v[i]) << 32) | v[i + 1]; };
    return {join(0), join(2), join(4)};
  }
};

struct EpisodeConfig {
  PlannerConfig planner;
  int particles = 1000;
  int replan_period = 1;
  int max_steps = 60;
  EpisodeSeeds seeds;
  bool record_particles = false;
  // Keep the terminal step fixed between re-plans and open a new K-step window
  // only once it has passed. When false every plan looks a full K steps ahead.
  bool shrinking_horizon = true;

  void validate() const {
    if (replan_period < 1) throw ConfigError("episode: replan period must be >= 1");
    if (max_steps < 0) throw ConfigError("episode: max steps must be >= 0");
    if (particles < 1) throw ConfigError("episode: N must be >= 1");
    planner.goal.validate();
  }
};

inline EpisodeConfig episode_config(const Scenario& s, EpisodeSeeds seeds) {
  EpisodeConfig c;
  c.planner = planner_config(s);
  c.particles = s.defaults.particles;
  c.replan_period = s.defaults.replan_period;
  c.max_steps = s.defaults.max_steps;
  c.seeds = seeds;
  return c;
}

inline bool stop_check(const ParticleBelief& b, const GoalSpec& g) {
  return goal_probability(b, g) >= g.threshold;
}

struct StepRecord {
  int step = 0;
  Vector true_state;  // after the control
  Vector control;
  Vector observation;
  Vector map_estimate;  // of the updated belief
  double goal_probability = 0.0;
  bool replanned = false;
  std::vector<Vector> planned_map;  // on re-plan steps
  CostBreakdown cost;
  SolveStatus status = SolveStatus::converged;
  double ess = 0.0;
  bool resampled = false;
  double plan_time = 0.0;
  double step_time = 0.0;
  Matrix particles;  // when recorded
};

struct ExecutionTrace {
  Vector initial_state;
  Vector initial_map;
  double initial_goal_probability = 0.0;
  std::vector<StepRecord> steps;
  std::string reason;
  std::string message;
  int nonconverged_plans = 0;
  double wall_time = 0.0;

  bool reached_goal() const { return reason == "goal"; }
  int size() const { return static_cast<int>(steps.size()); }
};

/// Plan, act on the true state, observe, filter; stops when the goal mass
/// reaches the threshold or the step budget runs out. The planner only sees
/// the belief.
inline ExecutionTrace run_episode(const World& w, const EpisodeConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Rng process_rng(cfg.seeds.process);
  Rng measurement_rng(cfg.seeds.measurement);
  Rng belief_rng(cfg.seeds.belief);

  ExecutionTrace trace;
  const GaussianMixture& mix = w.initial_belief;
  trace.initial_state = sample_initial_belief(mix, 1, process_rng).particles.col(0);
  ParticleBelief b = sample_initial_belief(mix, cfg.particles, belief_rng);
  trace.initial_map = map_estimate(b);
  trace.initial_goal_probability = goal_probability(b, cfg.planner.goal);

  RecedingHorizonPlanner planner(w, cfg.planner);
  const int nu = w.process->control_dim();
  Vector x = trace.initial_state;
  int plan_step = -1;
  int plan_length = 0;
  int deadline = -1;

  for (int k = 0;; ++k) {
    if (stop_check(b, cfg.planner.goal)) {
      trace.reason = "goal";
      break;
    }
    if (k >= cfg.max_steps) {
      trace.reason = "max-steps";
      break;
    }
    StepRecord rec;
    rec.step = k;
    const auto s0 = std::chrono::steady_clock::now();
    const int offset = k - plan_step;
    if (plan_step < 0 || offset >= cfg.replan_period || offset >= plan_length) {
      if (deadline <= k) deadline = k + cfg.planner.horizon;
      const int horizon = cfg.shrinking_horizon ? deadline - k : cfg.planner.horizon;
      PlanSolution sol;
      try {
        sol = planner.plan(b, horizon, plan_step < 0 ? 1 : offset);
      } catch (const Error& e) {
        throw Error("episode step " + std::to_string(k) + ": " + e.what());
      }
      plan_step = k;
      plan_length = horizon;
      rec.replanned = true;
      rec.planned_map = sol.map_trajectory;
      rec.cost = sol.cost;
      rec.status = sol.status;
      rec.plan_time = sol.wall_time;
      if (sol.status != SolveStatus::converged) ++trace.nonconverged_plans;
    } else {
      rec.status = planner.last()->status;
    }
    rec.control = planner.last()->control(k - plan_step, nu);

    x = step(*w.process, x, rec.control, process_rng);
    rec.true_state = x;
    rec.observation = observe(*w.observation, x, measurement_rng);
    UpdateStats st;
    try {
      b = pf_update(std::move(b), rec.control, rec.observation, *w.process, *w.observation, belief_rng, &st);
    } catch (const DegenerateUpdateError& e) {
      trace.reason = "filter-degenerate";
      trace.message = "step " + std::to_string(k) + ": " + e.what();
      rec.step_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
      trace.steps.push_back(std::move(rec));
      break;
    }
    rec.ess = st.ess;
    rec.resampled = st.resampled;
    rec.map_estimate = map_estimate(b);
    rec.goal_probability = goal_probability(b, cfg.planner.goal);
    if (cfg.record_particles) rec.particles = b.particles;
    rec.step_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
    trace.steps.push_back(std::move(rec));
  }
  trace.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return trace;
}

/// Independent episodes, one per seed set, on up to `threads` workers.
/// Results come back in seed order. Failed episodes carry reason "error".
inline std::vector<ExecutionTrace> run_episodes(const World& w, const EpisodeConfig& base,
                                                const std::vector<EpisodeSeeds>& seeds, int threads = 1) {
  std::vector<ExecutionTrace> out(seeds.size());
  auto one = [&](std::size_t i) {
    EpisodeConfig cfg = base;
    cfg.seeds = seeds[i];
    try {
      out[i] = run_episode(w, cfg);
    } catch (const std::exception& e) {
      out[i].reason = "error";
      out[i].message = e.what();
    }
  };
  if (threads <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) one(i);
    return out;
  }
  std::size_t next = 0;
  std::mutex m;
  std::vector<std::future<void>> workers;
  for (int t = 0; t < threads; ++t) {
    workers.push_back(std::async(std::launch::async, [&] {
      while (true) {
        std::size_t i;
        {
          std::lock_guard<std::mutex> lock(m);
          if (next >= seeds.size()) return;
          i = next++;
        }
        one(i);
      }
    }));
  }
  for (auto& f : workers) f.get();
  return out;
}

}  // namespace brhc
