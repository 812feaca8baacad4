#pragma once

#include <algorithm>
#include <filesystem>
#include <future>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "brhc/brhc.hpp"

namespace brhc::cli {

enum ExitCode { kOk = 0, kConfig = 1, kNotConverged = 2, kRuntime = 3 };

struct Common {
  std::string scenario;
  std::uint64_t seed = 1;
  std::string out;
  bool verbose = false;
};

inline std::string resolve_scenario(const Common& c, const std::string& positional) {
  if (!positional.empty()) return positional;
  if (!c.scenario.empty()) return c.scenario;
  throw ConfigError("no scenario given (pass a built-in name or a JSON path)");
}

inline std::filesystem::path out_dir(const Common& c) {
  std::filesystem::path dir(c.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + c.out + "': " + ec.message());
  return dir;
}

inline nlohmann::json header(const char* command, const Common& c, const std::string& scenario_ref,
                             const Scenario& s) {
  return {{"schema", kOutputSchema},
          {"command", command},
          {"config", {{"scenario_ref", scenario_ref}, {"seed", c.seed}, {"scenario", to_json(s)}}}};
}

inline double max_opf(const ObstacleSet& obstacles, const std::vector<Vector>& path) {
  double m = 0.0;
  for (const auto& x : path) m = std::max(m, opf_value(obstacles, x));
  return m;
}

// ---------------------------------------------------------------------------

struct PlanArgs {
  std::string scenario;
  std::optional<int> horizon;
  std::optional<int> particles;
  std::optional<double> beta;
  std::string init;
  bool multistart = false;
};

inline int cmd_plan(const Common& c, const PlanArgs& a, std::ostream& out, std::ostream& err) {
  const std::string ref = resolve_scenario(c, a.scenario);
  Scenario s = load_scenario(ref);
  if (a.horizon) s.defaults.horizon = *a.horizon;
  if (a.particles) s.defaults.particles = *a.particles;
  if (a.beta) s.defaults.beta = *a.beta;
  if (a.multistart) s.defaults.multistart = true;
  if (s.defaults.horizon < 1) throw ConfigError("--K must be >= 1");
  if (s.defaults.particles < 1) throw ConfigError("--N must be >= 1");
  if (s.defaults.beta != 0.0 && s.defaults.beta != 1.0) throw ConfigError("--beta must be 0 or 1");
  const World w = instantiate(s);
  const int nu = w.process->control_dim();

  Rng rng(c.seed);
  const ParticleBelief b = sample_initial_belief(w.initial_belief, s.defaults.particles, rng);
  PlannerConfig cfg = planner_config(s);
  if (c.verbose) {
    cfg.solver.on_iteration = [&err](const IterationRecord& r) {
      err << "outer " << r.outer << " iter " << r.iteration << " cost " << format_double(r.cost)
          << " residual " << format_double(r.residual) << " penalty " << r.penalty << '\n';
    };
  }
  const Vector x_map = map_estimate(b);
  const Vector straight = straight_line_controls(*w.process, x_map, cfg);
  Vector initial = straight;
  if (!a.init.empty()) {
    initial = read_solution_controls(a.init);
    if (initial.size() != straight.size()) {
      throw ConfigError("--init controls have length " + std::to_string(initial.size()) + ", expected " +
                        std::to_string(straight.size()));
    }
  }
  const PlanProblem p = build_plan_problem(w, b, x_map, cfg, initial);
  PlanSolution sol;
  if (cfg.multistart) {
    std::vector<Vector> starts{initial, Vector::Zero(initial.size())};
    if (!a.init.empty()) starts.insert(starts.begin() + 1, straight);
    sol = solve_multistart(p, starts);
  } else {
    sol = solve(p);
  }

  const ProblemSize size = problem_size(p);
  nlohmann::json doc = header("plan", c, ref, s);
  doc["config"]["K"] = s.defaults.horizon;
  doc["config"]["N"] = s.defaults.particles;
  doc["config"]["beta"] = s.defaults.beta;
  doc["config"]["init"] = a.init;
  doc["problem_size"] = {{"num_variables", size.num_variables},
                         {"num_constraint_rows", size.num_constraint_rows}};
  doc["map_initial"] = to_json(x_map);
  doc["solution"] = solution_json(sol, nu);
  doc["solution"]["max_opf"] = max_opf(w.obstacles, sol.map_trajectory);

  if (c.out.empty()) {
    out << doc.dump(2) << '\n';
  } else {
    const auto path = out_dir(c) / "plan.json";
    write_text(path.string(), doc.dump(2) + "\n");
    out << "plan " << s.name << ": " << to_string(sol.status) << ", " << size.num_variables
        << " variables, cost " << format_double(sol.cost.total()) << ", residual "
        << format_double(sol.terminal_residual) << ", " << sol.iterations << " iterations -> "
        << path.string() << '\n';
  }
  return sol.status == SolveStatus::converged ? kOk : kNotConverged;
}

// ---------------------------------------------------------------------------

struct RunArgs {
  std::string scenario;
  int episodes = 1;
  std::optional<int> max_steps;
  std::optional<int> horizon;
  std::optional<int> particles;
  std::optional<int> replan_period;
  int threads = 1;
  bool record_particles = false;
  bool receding = false;
};

inline int cmd_run(const Common& c, const RunArgs& a, std::ostream& out, std::ostream& err) {
  const std::string ref = resolve_scenario(c, a.scenario);
  Scenario s = load_scenario(ref);
  if (a.horizon) s.defaults.horizon = *a.horizon;
  if (a.particles) s.defaults.particles = *a.particles;
  if (a.max_steps) s.defaults.max_steps = *a.max_steps;
  if (a.replan_period) s.defaults.replan_period = *a.replan_period;
  if (a.episodes < 1) throw ConfigError("--episodes must be >= 1");
  const World w = instantiate(s);
  EpisodeConfig cfg = episode_config(s, {});
  cfg.record_particles = a.record_particles;
  cfg.shrinking_horizon = !a.receding;
  cfg.validate();

  std::vector<EpisodeSeeds> seeds;
  for (int i = 0; i < a.episodes; ++i) seeds.push_back(EpisodeSeeds::from(c.seed + static_cast<std::uint64_t>(i)));
  const auto traces = run_episodes(w, cfg, seeds, a.threads);

  const int nx = w.process->state_dim();
  const int nu = w.process->control_dim();
  const int nz = w.observation->observation_dim();
  int successes = 0;
  int failures = 0;
  double steps = 0.0;
  nlohmann::json episodes = nlohmann::json::array();
  std::optional<std::filesystem::path> dir;
  if (!c.out.empty()) dir = out_dir(c);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& t = traces[i];
    successes += t.reached_goal() ? 1 : 0;
    failures += (t.reason == "error" || t.reason == "filter-degenerate") ? 1 : 0;
    steps += t.size();
    nlohmann::json e = {{"episode", i},
                        {"seed", c.seed + i},
                        {"reason", t.reason},
                        {"steps", t.size()},
                        {"nonconverged_plans", t.nonconverged_plans},
                        {"final_goal_probability", t.steps.empty() ? t.initial_goal_probability
                                                                   : t.steps.back().goal_probability},
                        {"wall_time", t.wall_time}};
    if (!t.message.empty()) e["message"] = t.message;
    if (dir && t.reason != "error") {
      const auto name = "trace_" + std::to_string(i) + ".csv";
      write_text((*dir / name).string(), trace_csv(t, nx, nu, nz));
      e["trace"] = name;
      if (a.record_particles) {
        const auto pname = "particles_" + std::to_string(i) + ".csv";
        write_text((*dir / pname).string(), particles_csv(t, nx));
        e["particles"] = pname;
      }
    }
    if (c.verbose) err << "episode " << i << ": " << t.reason << " after " << t.size() << " steps\n";
    episodes.push_back(std::move(e));
  }
  const double n = static_cast<double>(traces.size());
  nlohmann::json doc = header("run", c, ref, s);
  doc["config"]["episodes"] = a.episodes;
  doc["config"]["K"] = s.defaults.horizon;
  doc["config"]["N"] = s.defaults.particles;
  doc["config"]["max_steps"] = s.defaults.max_steps;
  doc["config"]["replan_period"] = s.defaults.replan_period;
  doc["config"]["shrinking_horizon"] = cfg.shrinking_horizon;
  doc["summary"] = {{"success_rate", successes / n}, {"mean_steps", steps / n}, {"failures", failures}};
  doc["episodes"] = episodes;
  if (dir) write_text((*dir / "summary.json").string(), doc.dump(2) + "\n");
  out << "run " << s.name << ": " << successes << "/" << traces.size() << " reached the goal, mean steps "
      << std::fixed << std::setprecision(2) << steps / n << std::defaultfloat << '\n';
  for (const auto& t : traces) {
    if (t.reason == "error") err << "episode failed: " << t.message << '\n';
  }
  return failures == static_cast<int>(traces.size()) ? kRuntime : kOk;
}

// ---------------------------------------------------------------------------

struct BenchmarkArgs {
  std::string scenario;
  std::vector<int> horizons{20};
  std::vector<int> particles{100, 1000, 10000, 100000};
  int repeat = 3;
  int jobs = 1;
};

struct BenchmarkRow {
  int horizon = 0;
  int particles = 0;
  ProblemSize size;
  std::size_t allocated_scalars = 0;
  double wall_time = 0.0;  // median over repeats
  int iterations = 0;
  double terminal_residual = 0.0;
  double stationarity = 0.0;
  std::string status;
};

inline BenchmarkRow benchmark_cell(const Scenario& s, const World& w, int horizon, int n, int repeat,
                                   std::uint64_t seed) {
  Scenario local = s;
  local.defaults.horizon = horizon;
  Rng rng(seed);
  const ParticleBelief b = sample_initial_belief(w.initial_belief, n, rng);
  const PlannerConfig cfg = planner_config(local);
  const Vector x_map = map_estimate(b);
  const PlanProblem p = build_plan_problem(w, b, x_map, cfg, straight_line_controls(*w.process, x_map, cfg));
  BenchmarkRow row;
  row.horizon = horizon;
  row.particles = n;
  row.size = problem_size(p);
  row.allocated_scalars = p.allocated_scalars();
  std::vector<double> times;
  PlanSolution sol;
  for (int r = 0; r < std::max(1, repeat); ++r) {
    sol = solve(p);
    times.push_back(sol.wall_time);
  }
  std::sort(times.begin(), times.end());
  row.wall_time = times[times.size() / 2];
  row.iterations = sol.iterations;
  row.terminal_residual = sol.terminal_residual;
  row.stationarity = sol.stationarity;
  row.status = to_string(sol.status);
  return row;
}

inline int cmd_benchmark(const Common& c, const BenchmarkArgs& a, std::ostream& out, std::ostream& err) {
  const std::string ref = resolve_scenario(c, a.scenario);
  const Scenario s = load_scenario(ref);
  if (a.horizons.empty() || a.particles.empty()) throw ConfigError("benchmark needs non-empty K and N lists");
  for (int k : a.horizons) {
    if (k < 1) throw ConfigError("--K entries must be >= 1");
  }
  for (int n : a.particles) {
    if (n < 1) throw ConfigError("--N entries must be >= 1");
  }
  const World w = instantiate(s);
  const int nu = w.process->control_dim();

  std::vector<std::pair<int, int>> cells;
  for (int k : a.horizons) {
    for (int n : a.particles) cells.emplace_back(k, n);
  }
  std::vector<BenchmarkRow> rows(cells.size());
  std::size_t next = 0;
  std::mutex m;
  auto worker = [&] {
    while (true) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(m);
        if (next >= cells.size()) return;
        i = next++;
      }
      rows[i] = benchmark_cell(s, w, cells[i].first, cells[i].second, a.repeat, c.seed);
    }
  };
  std::vector<std::future<void>> pool;
  for (int j = 0; j < std::max(1, a.jobs); ++j) pool.push_back(std::async(std::launch::async, worker));
  for (auto& f : pool) f.get();

  bool sizes_ok = true;
  nlohmann::json table = nlohmann::json::array();
  out << std::setw(6) << "K" << std::setw(9) << "N" << std::setw(8) << "vars" << std::setw(8) << "rows"
      << std::setw(12) << "time[s]" << std::setw(8) << "iters" << std::setw(13) << "residual"
      << std::setw(13) << "stationarity" << "  status\n";
  for (const auto& r : rows) {
    sizes_ok = sizes_ok && r.size.num_variables == r.horizon * nu;
    for (const auto& q : rows) {
      if (q.horizon == r.horizon && (q.size.num_variables != r.size.num_variables ||
                                     q.size.num_constraint_rows != r.size.num_constraint_rows ||
                                     q.allocated_scalars != r.allocated_scalars)) {
        sizes_ok = false;
      }
    }
    out << std::setw(6) << r.horizon << std::setw(9) << r.particles << std::setw(8) << r.size.num_variables
        << std::setw(8) << r.size.num_constraint_rows << std::setw(12) << std::setprecision(4) << r.wall_time
        << std::setw(8) << r.iterations << std::setw(13) << std::setprecision(3) << r.terminal_residual
        << std::setw(13) << r.stationarity << "  " << r.status << '\n';
    table.push_back({{"K", r.horizon},
                     {"N", r.particles},
                     {"num_variables", r.size.num_variables},
                     {"num_constraint_rows", r.size.num_constraint_rows},
                     {"allocated_scalars", r.allocated_scalars},
                     {"wall_time", r.wall_time},
                     {"iterations", r.iterations},
                     {"terminal_residual", r.terminal_residual},
                     {"stationarity", r.stationarity},
                     {"function_tolerance", s.defaults.function_tolerance},
                     {"constraint_tolerance", s.defaults.constraint_tolerance},
                     {"status", r.status}});
  }
  out << std::defaultfloat;

  nlohmann::json ratios = nlohmann::json::array();
  for (int k : a.horizons) {
    const BenchmarkRow* lo = nullptr;
    const BenchmarkRow* hi = nullptr;
    for (const auto& r : rows) {
      if (r.horizon != k) continue;
      if (!lo || r.particles < lo->particles) lo = &r;
      if (!hi || r.particles > hi->particles) hi = &r;
    }
    if (lo && hi && lo != hi) {
      const double ratio = hi->wall_time / std::max(lo->wall_time, 1e-12);
      out << "K=" << k << ": time(N=" << hi->particles << ") / time(N=" << lo->particles << ") = " << ratio
          << (ratio <= 50.0 ? "  (<= 50, scalable)" : "  (> 50)") << '\n';
      ratios.push_back({{"K", k}, {"N_low", lo->particles}, {"N_high", hi->particles}, {"ratio", ratio}});
    }
  }

  nlohmann::json doc = header("benchmark", c, ref, s);
  doc["config"]["K"] = a.horizons;
  doc["config"]["N"] = a.particles;
  doc["config"]["repeat"] = a.repeat;
  doc["rows"] = table;
  doc["time_ratios"] = ratios;
  doc["sizes_independent_of_N"] = sizes_ok;
  if (!c.out.empty()) write_text((out_dir(c) / "benchmark.json").string(), doc.dump(2) + "\n");
  if (!sizes_ok) {
    err << "benchmark: problem size changed with N\n";
    return kRuntime;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct AuditArgs {
  std::string scenario;
  std::string model;  // range | bearing | light_dark, instead of a scenario
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<std::vector<double>> directions;
  int samples = 1000;
};

inline std::shared_ptr<const ObservationModel> standalone_model(const std::string& kind) {
  const std::vector<Vector> origin{Vector::Zero(2)};
  if (kind == "range") return std::make_shared<RangeObservation>(2, origin);
  if (kind == "bearing") return std::make_shared<BearingObservation>(3, origin);
  if (kind == "light_dark") return std::make_shared<LightDarkObservation>(2);
  throw ConfigError("--model must be range, bearing or light_dark");
}

inline Box default_region(const ObservationModel& obs, const Scenario* s) {
  const int nx = obs.state_dim();
  Box box{Vector::Constant(nx, -5.0), Vector::Constant(nx, 5.0)};
  if (s) {
    std::vector<Vector> pts{s->goal.state};
    for (const auto& c : s->initial_belief.components) pts.push_back(c.mean);
    for (const auto& l : obs.landmarks()) {
      Vector p = Vector::Zero(nx);
      p.head(l.size()) = l;
      pts.push_back(p);
    }
    box.lo = pts.front();
    box.hi = pts.front();
    for (const auto& p : pts) {
      box.lo = box.lo.cwiseMin(p);
      box.hi = box.hi.cwiseMax(p);
    }
    box.lo.array() -= 1.0;
    box.hi.array() += 1.0;
  }
  if (nx >= 3 && obs.kind() == "bearing") {
    box.lo(2) = -3.0;
    box.hi(2) = 3.0;
  }
  // Keep the light-dark region where 2 x_1 + 1 > 0.
  if (obs.kind() == "light_dark") box.lo(0) = std::max(box.lo(0), 0.05);
  return box;
}

inline int cmd_audit(const Common& c, const AuditArgs& a, std::ostream& out, std::ostream&) {
  std::shared_ptr<const ObservationModel> obs;
  std::optional<Scenario> s;
  std::string ref;
  if (!a.model.empty()) {
    obs = standalone_model(a.model);
    ref = "model:" + a.model;
  } else {
    ref = resolve_scenario(c, a.scenario);
    s = load_scenario(ref);
    obs = instantiate(*s).observation;
  }
  const int nx = obs->state_dim();
  Box region = default_region(*obs, s ? &*s : nullptr);
  if (!a.lo.empty() || !a.hi.empty()) {
    if (static_cast<int>(a.lo.size()) != nx || static_cast<int>(a.hi.size()) != nx) {
      throw ConfigError("--lo and --hi need " + std::to_string(nx) + " values each");
    }
    region.lo = Eigen::Map<const Vector>(a.lo.data(), nx);
    region.hi = Eigen::Map<const Vector>(a.hi.data(), nx);
  }
  if (((region.hi - region.lo).array() < 0.0).any()) throw ConfigError("audit region has hi < lo");
  if (a.samples < 1) throw ConfigError("--samples must be >= 1");

  Rng rng(c.seed);
  std::vector<Vector> dirs;
  for (const auto& d : a.directions) {
    if (static_cast<int>(d.size()) != nx) throw ConfigError("--direction needs " + std::to_string(nx) + " values");
    dirs.push_back(Eigen::Map<const Vector>(d.data(), nx));
  }
  if (dirs.empty()) {
    for (int j = 0; j < nx; ++j) dirs.push_back(Vector::Unit(nx, j));
    std::normal_distribution<double> normal;
    for (int r = 0; r < 3; ++r) {
      Vector d(nx);
      for (int j = 0; j < nx; ++j) d(j) = normal(rng);
      dirs.push_back(d.normalized());
    }
  }

  nlohmann::json doc;
  if (s) {
    doc = header("audit", c, ref, *s);
  } else {
    doc = {{"schema", kOutputSchema}, {"command", "audit"}, {"config", {{"model", a.model}, {"seed", c.seed}}}};
  }
  doc["config"]["region"] = {{"lo", to_json(region.lo)}, {"hi", to_json(region.hi)}};
  doc["config"]["samples"] = a.samples;
  out << "observation model: " << obs->kind() << ", region lo " << region.lo.transpose() << " hi "
      << region.hi.transpose() << '\n';
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& d : dirs) {
    const Lemma1Report r = lemma1_audit(*obs, d, region, a.samples, rng);
    out << "  d = [" << d.transpose() << "]: " << r.verdict() << "; convexity violation "
        << r.convex_violation << ", concavity violation " << r.concave_violation << ", max |g - l^2| "
        << r.g_error << ", skipped " << r.skipped << '\n';
    reports.push_back({{"direction", to_json(d)},
                       {"verdict", r.verdict()},
                       {"convex_violation", r.convex_violation},
                       {"concave_violation", r.concave_violation},
                       {"g_error", r.g_error},
                       {"samples", r.samples},
                       {"skipped", r.skipped}});
  }
  doc["lemma1"] = reports;

  if (s) {
    // Midpoint convexity of the planning cost in U with the obstacle term off.
    Scenario plain = *s;
    plain.defaults.beta = 0.0;
    const World w = instantiate(plain);
    Rng brng(c.seed);
    const ParticleBelief b = sample_initial_belief(w.initial_belief, plain.defaults.particles, brng);
    const PlannerConfig cfg = planner_config(plain);
    const Vector x_map = map_estimate(b);
    const Vector u0 = straight_line_controls(*w.process, x_map, cfg);
    const PlanProblem p = build_plan_problem(w, b, x_map, cfg, u0);
    const double spread = 0.1 * std::max(1.0, u0.cwiseAbs().maxCoeff());
    // The sampled MAP paths must stay inside the audit region.
    Box path_region = region;
    path_region.lo = region.lo.head(w.process->state_dim());
    path_region.hi = region.hi.head(w.process->state_dim());
    const MidpointReport m = cost_midpoint_violation(p.cost, u0, spread, a.samples, rng, &path_region);
    out << "cost midpoint convexity (beta = 0): worst violation " << m.worst << " over " << m.accepted
        << " pairs" << (m.worst <= 1e-9 ? " (passes)" : " (fails)") << '\n';
    doc["cost_midpoint"] = {{"worst_violation", m.worst}, {"pairs", m.accepted}, {"rejected", m.rejected}};
  }
  if (!c.out.empty()) write_text((out_dir(c) / "audit.json").string(), doc.dump(2) + "\n");
  return kOk;
}

// ---------------------------------------------------------------------------

inline int cmd_validate(const Common& c, const std::string& positional, std::ostream& out, std::ostream&) {
  const std::string ref = resolve_scenario(c, positional);
  const Scenario s = load_scenario(ref);
  const auto findings = validate_scenario(s);
  for (const auto& f : findings) out << f.field << ": " << f.message << '\n';
  if (findings.empty()) out << s.name << ": ok\n";
  return findings.empty() ? kOk : kConfig;
}

// ---------------------------------------------------------------------------

/// Runs the command line in `args` (without the program name).
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Belief-space receding-horizon planning over particle beliefs"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--scenario", common.scenario, "Scenario JSON path or built-in name");
    sub->add_option("--seed", common.seed, "Random seed");
    sub->add_option("--out", common.out, "Output directory");
    sub->add_flag("--verbose,-v", common.verbose, "Print solver iterations and progress");
  };

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "Solve one plan from the initial belief");
  add_common(plan_cmd);
  plan_cmd->add_option("name_or_path", plan.scenario, "Scenario JSON path or built-in name");
  plan_cmd->add_option("--K", plan.horizon, "Horizon");
  plan_cmd->add_option("--N", plan.particles, "Particle count");
  plan_cmd->add_option("--beta", plan.beta, "Obstacle term switch (0 or 1)");
  plan_cmd->add_option("--init", plan.init, "Initial controls from a previous plan.json");
  plan_cmd->add_flag("--multistart", plan.multistart, "Also try zero controls and keep the best");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run closed-loop episodes");
  add_common(run_cmd);
  run_cmd->add_option("name_or_path", run.scenario, "Scenario JSON path or built-in name");
  run_cmd->add_option("--episodes", run.episodes, "Number of episodes");
  run_cmd->add_option("--max-steps", run.max_steps, "Step budget per episode");
  run_cmd->add_option("--K", run.horizon, "Horizon");
  run_cmd->add_option("--N", run.particles, "Particle count");
  run_cmd->add_option("--replan-period", run.replan_period, "Steps between re-plans");
  run_cmd->add_option("--threads", run.threads, "Worker threads for episodes");
  run_cmd->add_flag("--particles", run.record_particles, "Also write thinned particle clouds");
  run_cmd->add_flag("--receding", run.receding, "Plan a full K steps ahead at every re-plan");

  BenchmarkArgs bench;
  auto* bench_cmd = app.add_subcommand("benchmark", "Time single solves over K and N grids");
  add_common(bench_cmd);
  bench_cmd->add_option("name_or_path", bench.scenario, "Scenario JSON path or built-in name");
  bench_cmd->add_option("--K", bench.horizons, "Horizons")->delimiter(',');
  bench_cmd->add_option("--N", bench.particles, "Particle counts")->delimiter(',');
  bench_cmd->add_option("--repeat", bench.repeat, "Solves per cell (median time is reported)");
  bench_cmd->add_option("--jobs", bench.jobs, "Cells solved in parallel");

  AuditArgs audit;
  std::vector<std::string> raw_dirs;
  auto* audit_cmd = app.add_subcommand("audit", "Check the convexity premise numerically");
  add_common(audit_cmd);
  audit_cmd->add_option("name_or_path", audit.scenario, "Scenario JSON path or built-in name");
  audit_cmd->add_option("--model", audit.model, "Audit a stand-alone model: range, bearing, light_dark");
  audit_cmd->add_option("--lo", audit.lo, "Region lower corner")->delimiter(',');
  audit_cmd->add_option("--hi", audit.hi, "Region upper corner")->delimiter(',');
  audit_cmd->add_option("--direction", raw_dirs, "Direction d as comma-separated values (repeatable)");
  audit_cmd->add_option("--samples", audit.samples, "Sampled points per direction");

  std::string validate_ref;
  auto* validate_cmd = app.add_subcommand("validate", "Check a scenario for semantic problems");
  add_common(validate_cmd);
  validate_cmd->add_option("name_or_path", validate_ref, "Scenario JSON path or built-in name");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    for (auto* sub : app.get_subcommands()) err << sub->help();
    return kConfig;
  }

  try {
    if (*plan_cmd) return cmd_plan(common, plan, out, err);
    if (*run_cmd) return cmd_run(common, run, out, err);
    if (*bench_cmd) return cmd_benchmark(common, bench, out, err);
    if (*audit_cmd) {
      for (const auto& d : raw_dirs) {
        std::vector<double> v;
        std::stringstream ss(d);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
          try {
            v.push_back(std::stod(tok));
          } catch (const std::exception&) {
            throw ConfigError("--direction: '" + d + "' is not a list of numbers");
          }
        }
        audit.directions.push_back(v);
      }
      return cmd_audit(common, audit, out, err);
    }
    if (*validate_cmd) return cmd_validate(common, validate_ref, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kConfig;
}

}  // namespace brhc::cli
