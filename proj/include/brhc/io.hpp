#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "brhc/rhc.hpp"
#include "brhc/scenario.hpp"
#include "brhc/solver.hpp"

namespace brhc {

inline constexpr const char* kOutputSchema = "1";

/// 17 significant digits, enough to read back the same double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void append_columns(std::vector<std::string>& cols, const std::string& prefix, int n) {
  for (int i = 0; i < n; ++i) cols.push_back(prefix + std::to_string(i));
}

inline void append_values(std::ostream& os, const Vector& v, int n) {
  for (int i = 0; i < n; ++i) os << ',' << (i < v.size() ? format_double(v(i)) : std::string("nan"));
}

}  // namespace detail

/// Trace columns, in order:
///   step, x_0..x_{n-1}, u_0.., z_0.., map_0.., goal_probability, replanned,
///   status, cost_innovation, cost_control, cost_obstacle, ess, resampled
/// Row -1 holds the initial true state and MAP estimate. Timings are left out so
/// identical seeds give identical files.
inline std::string trace_csv(const ExecutionTrace& trace, int nx, int nu, int nz) {
  std::vector<std::string> cols{"step"};
  detail::append_columns(cols, "x_", nx);
  detail::append_columns(cols, "u_", nu);
  detail::append_columns(cols, "z_", nz);
  detail::append_columns(cols, "map_", nx);
  for (const char* c : {"goal_probability", "replanned", "status", "cost_innovation", "cost_control",
                        "cost_obstacle", "ess", "resampled"}) {
    cols.push_back(c);
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';

  os << -1;
  detail::append_values(os, trace.initial_state, nx);
  detail::append_values(os, Vector(), nu);
  detail::append_values(os, Vector(), nz);
  detail::append_values(os, trace.initial_map, nx);
  os << ',' << format_double(trace.initial_goal_probability) << ",0,,nan,nan,nan,nan,0\n";

  for (const auto& r : trace.steps) {
    os << r.step;
    detail::append_values(os, r.true_state, nx);
    detail::append_values(os, r.control, nu);
    detail::append_values(os, r.observation, nz);
    detail::append_values(os, r.map_estimate, nx);
    os << ',' << format_double(r.goal_probability) << ',' << (r.replanned ? 1 : 0) << ','
       << to_string(r.status);
    if (r.replanned) {
      os << ',' << format_double(r.cost.innovation) << ',' << format_double(r.cost.control) << ','
         << format_double(r.cost.obstacle);
    } else {
      os << ",nan,nan,nan";
    }
    os << ',' << format_double(r.ess) << ',' << (r.resampled ? 1 : 0) << '\n';
  }
  return os.str();
}

/// Particles after every step, at most `max_particles` per step (evenly strided).
/// Columns: step, particle, p_0..p_{n-1}.
inline std::string particles_csv(const ExecutionTrace& trace, int nx, int max_particles = 200) {
  std::ostringstream os;
  os << "step,particle";
  for (int i = 0; i < nx; ++i) os << ",p_" << i;
  os << '\n';
  for (const auto& r : trace.steps) {
    const auto n = static_cast<int>(r.particles.cols());
    if (n == 0) continue;
    const int stride = std::max(1, (n + max_particles - 1) / max_particles);
    for (int j = 0; j < n; j += stride) {
      os << r.step << ',' << j;
      detail::append_values(os, r.particles.col(j), nx);
      os << '\n';
    }
  }
  return os.str();
}

inline nlohmann::json cost_json(const CostBreakdown& c) {
  return {{"innovation", c.innovation}, {"control", c.control}, {"obstacle", c.obstacle},
          {"total", c.total()}};
}

inline nlohmann::json solution_json(const PlanSolution& s, int nu) {
  nlohmann::json j;
  j["status"] = to_string(s.status);
  j["controls"] = to_json(unstack_controls(s.controls, nu));
  j["map_trajectory"] = to_json(s.map_trajectory);
  j["cost"] = cost_json(s.cost);
  j["terminal_residual"] = s.terminal_residual;
  j["bound_violation"] = s.bound_violation;
  j["stationarity"] = s.stationarity;
  j["iterations"] = s.iterations;
  j["outer_iterations"] = s.outer_iterations;
  j["start_index"] = s.start_index;
  j["wall_time"] = s.wall_time;
  return j;
}

/// Stacked controls from a solution file written by solution_json.
inline Vector read_solution_controls(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open solution '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("solution '" + path + "' is not valid JSON: " + e.what());
  }
  const nlohmann::json* sol = &j;
  if (j.contains("solution")) sol = &j["solution"];
  if (!sol->contains("controls") || !(*sol)["controls"].is_array()) {
    throw ConfigError("solution '" + path + "' has no controls");
  }
  std::vector<Vector> us;
  for (const auto& row : (*sol)["controls"]) {
    if (!row.is_array()) throw ConfigError("solution '" + path + "': malformed control row");
    Vector u(static_cast<Eigen::Index>(row.size()));
    for (std::size_t i = 0; i < row.size(); ++i) u(static_cast<Eigen::Index>(i)) = row[i].get<double>();
    us.push_back(u);
  }
  return stack_controls(us);
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace brhc
