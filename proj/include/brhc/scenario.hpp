#pragma once

#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "brhc/belief.hpp"
#include "brhc/builtin_scenarios.hpp"
#include "brhc/dynamics.hpp"
#include "brhc/json_lines.hpp"
#include "brhc/obstacles.hpp"

namespace brhc {

inline constexpr const char* kScenarioSchema = "1";

struct ProcessSpec {
  std::string type = "linear";  // linear | unicycle
  Matrix a, b, g;               // linear
  double dt = 0.1;              // unicycle
  Matrix noise_cov;
};

struct ObservationSpec {
  std::string type = "light_dark";  // light_dark | range | bearing
  std::vector<Vector> landmarks;
  LandmarkNoise noise;
  double noise_scale = 1.0;  // light_dark
  double floor = 0.1;        // light_dark
};

struct RectangleSpec {
  Box box;
  double spacing = 0.25;
  double margin = 0.5;
};

struct ObstacleSpec {
  double penalty = 1e4;
  double smoothing = 0.0;
  std::vector<Ellipsoid> ellipsoids;
  std::vector<RectangleSpec> rectangles;
};

struct ScenarioDefaults {
  int horizon = 20;
  int particles = 1000;
  Matrix control_weight;
  std::optional<double> u_max;
  double beta = 0.0;
  int max_steps = 60;
  int replan_period = 1;
  double function_tolerance = 2e-3;
  double constraint_tolerance = 1e-8;
  int max_iterations = 5000;
  bool multistart = false;
  std::vector<Vector> waypoints;
};

struct Scenario {
  std::string name;
  ProcessSpec process;
  ObservationSpec observation;
  GaussianMixture initial_belief;
  GoalSpec goal;
  ObstacleSpec obstacles;
  ScenarioDefaults defaults;

  int state_dim() const {
    return process.type == "unicycle" ? 3 : static_cast<int>(process.a.rows());
  }
  int control_dim() const {
    return process.type == "unicycle" ? 2 : static_cast<int>(process.b.cols());
  }
};

/// Models and geometry instantiated from a Scenario.
struct World {
  std::shared_ptr<const ProcessModel> process;
  std::shared_ptr<const ObservationModel> observation;
  GaussianMixture initial_belief;
  GoalSpec goal;
  ObstacleSet obstacles;
};

inline ObstacleSet build_obstacles(const ObstacleSpec& spec) {
  std::vector<ObstacleSet> parts;
  ObstacleSet explicit_set;
  explicit_set.ellipsoids = spec.ellipsoids;
  parts.push_back(explicit_set);
  for (const auto& r : spec.rectangles) {
    parts.push_back(cover_walls(r.box, r.spacing, r.margin, spec.penalty));
  }
  ObstacleSet set = merge(parts, spec.penalty);
  set.smoothing = spec.smoothing;
  return set;
}

inline World instantiate(const Scenario& s) {
  World w;
  const int nx = s.state_dim();
  if (s.process.type == "linear") {
    w.process = std::make_shared<LinearProcess>(s.process.a, s.process.b, s.process.g, s.process.noise_cov);
  } else if (s.process.type == "unicycle") {
    w.process = std::make_shared<UnicycleProcess>(s.process.dt, s.process.noise_cov);
  } else {
    throw ConfigError("unknown process type '" + s.process.type + "'");
  }
  const auto& o = s.observation;
  if (o.type == "light_dark") {
    w.observation = std::make_shared<LightDarkObservation>(nx, o.noise_scale, o.floor);
  } else if (o.type == "range") {
    w.observation = std::make_shared<RangeObservation>(nx, o.landmarks, o.noise);
  } else if (o.type == "bearing") {
    w.observation = std::make_shared<BearingObservation>(nx, o.landmarks, o.noise);
  } else {
    throw ConfigError("unknown observation type '" + o.type + "'");
  }
  w.initial_belief = s.initial_belief;
  w.goal = s.goal;
  w.obstacles = build_obstacles(s.obstacles);
  w.obstacles.validate(nx);
  return w;
}

// ---------------------------------------------------------------------------
// JSON reading
// ---------------------------------------------------------------------------

namespace detail {

class ScenarioReader {
 public:
  using json = nlohmann::json;
  explicit ScenarioReader(const LocatedJson& doc) : doc_(doc) {}

  [[noreturn]] void fail(const std::string& ptr, const std::string& msg) const {
    throw ConfigError("scenario field '" + ptr + "' (line " + std::to_string(doc_.line_of(ptr)) +
                      "): " + msg);
  }

  const json& at(const std::string& ptr) const {
    const json::json_pointer jp(ptr);
    if (!doc_.value.contains(jp)) fail(ptr, "missing required field");
    return doc_.value.at(jp);
  }

  bool has(const std::string& ptr) const {
    const json::json_pointer jp(ptr);
    return doc_.value.contains(jp) && !doc_.value.at(jp).is_null();
  }

  void only_keys(const std::string& ptr, std::initializer_list<const char*> allowed) const {
    const json& obj = ptr.empty() ? doc_.value : at(ptr);
    if (!obj.is_object()) fail(ptr.empty() ? "/" : ptr, "expected an object");
    for (const auto& [k, v] : obj.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || k == a;
      if (!ok) fail(ptr + "/" + k, "unknown field");
    }
  }

  double number(const std::string& ptr) const {
    const json& v = at(ptr);
    if (!v.is_number()) fail(ptr, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(ptr, "expected a finite number");
    return d;
  }

  double number_or(const std::string& ptr, double fallback) const {
    return has(ptr) ? number(ptr) : fallback;
  }

  int integer(const std::string& ptr) const {
    const json& v = at(ptr);
    if (!v.is_number_integer()) fail(ptr, "expected an integer");
    return v.get<int>();
  }

  int integer_or(const std::string& ptr, int fallback) const {
    return has(ptr) ? integer(ptr) : fallback;
  }

  std::string string(const std::string& ptr) const {
    const json& v = at(ptr);
    if (!v.is_string()) fail(ptr, "expected a string");
    return v.get<std::string>();
  }

  bool boolean_or(const std::string& ptr, bool fallback) const {
    if (!has(ptr)) return fallback;
    const json& v = at(ptr);
    if (!v.is_boolean()) fail(ptr, "expected true or false");
    return v.get<bool>();
  }

  Vector vector(const std::string& ptr, int dim = -1) const {
    const json& v = at(ptr);
    if (!v.is_array() || v.empty()) fail(ptr, "expected a non-empty array of numbers");
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(i) = number(ptr + "/" + std::to_string(i));
    if (dim >= 0 && out.size() != dim) {
      fail(ptr, "expected " + std::to_string(dim) + " entries, got " + std::to_string(out.size()));
    }
    return out;
  }

  std::vector<Vector> vector_list(const std::string& ptr, int dim = -1) const {
    const json& v = at(ptr);
    if (!v.is_array()) fail(ptr, "expected an array");
    std::vector<Vector> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(vector(ptr + "/" + std::to_string(i), dim));
    return out;
  }

  /// Row-major nested array, or a scalar meaning scalar * identity.
  Matrix matrix(const std::string& ptr, int rows, int cols) const {
    const json& v = at(ptr);
    if (v.is_number()) {
      if (rows != cols) fail(ptr, "scalar shorthand needs a square matrix");
      return number(ptr) * Matrix::Identity(rows, cols);
    }
    if (!v.is_array() || static_cast<int>(v.size()) != rows) {
      fail(ptr, "expected " + std::to_string(rows) + " rows");
    }
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) m.row(r) = vector(ptr + "/" + std::to_string(r), cols).transpose();
    return m;
  }

  /// Nested array with the row count taken from the data.
  Matrix square_matrix(const std::string& ptr) const {
    const json& v = at(ptr);
    if (!v.is_array() || v.empty()) fail(ptr, "expected a square matrix");
    const int n = static_cast<int>(v.size());
    return matrix(ptr, n, n);
  }

  std::size_t array_size(const std::string& ptr) const {
    const json& v = at(ptr);
    if (!v.is_array()) fail(ptr, "expected an array");
    return v.size();
  }

 private:
  const LocatedJson& doc_;
};

inline Scenario read_scenario(const LocatedJson& doc) {
  const ScenarioReader r(doc);
  r.only_keys("", {"schema", "name", "process", "observation", "initial_belief", "goal",
                   "obstacles", "defaults"});
  if (r.string("/schema") != kScenarioSchema) r.fail("/schema", "unsupported schema version");
  Scenario s;
  s.name = r.has("/name") ? r.string("/name") : "unnamed";

  // process
  r.only_keys("/process", {"type", "A", "B", "G", "dt", "noise_cov"});
  s.process.type = r.string("/process/type");
  int nx = 0;
  int nu = 0;
  if (s.process.type == "linear") {
    s.process.a = r.square_matrix("/process/A");
    nx = static_cast<int>(s.process.a.rows());
    const auto brows = r.array_size("/process/B");
    if (static_cast<int>(brows) != nx) r.fail("/process/B", "needs one row per state");
    nu = static_cast<int>(r.vector("/process/B/0").size());
    s.process.b = r.matrix("/process/B", nx, nu);
    s.process.g = r.has("/process/G") ? r.matrix("/process/G", nx, nx) : Matrix::Identity(nx, nx);
    s.process.noise_cov = r.matrix("/process/noise_cov", static_cast<int>(s.process.g.cols()),
                                   static_cast<int>(s.process.g.cols()));
  } else if (s.process.type == "unicycle") {
    nx = 3;
    nu = 2;
    s.process.dt = r.number("/process/dt");
    if (!(s.process.dt > 0.0)) r.fail("/process/dt", "must be > 0");
    s.process.noise_cov = r.matrix("/process/noise_cov", 3, 3);
  } else {
    r.fail("/process/type", "expected 'linear' or 'unicycle'");
  }
  try {
    psd_sqrt(s.process.noise_cov);
  } catch (const ConfigError& e) {
    r.fail("/process/noise_cov", e.what());
  }

  // observation
  r.only_keys("/observation", {"type", "landmarks", "noise_base", "noise_slope", "noise_scale", "floor"});
  s.observation.type = r.string("/observation/type");
  if (s.observation.type == "light_dark") {
    s.observation.noise_scale = r.number_or("/observation/noise_scale", 1.0);
    s.observation.floor = r.number_or("/observation/floor", 0.1);
    if (!(s.observation.floor > 0.0)) r.fail("/observation/floor", "must be > 0");
    if (s.observation.noise_scale < 0.0) r.fail("/observation/noise_scale", "must be >= 0");
  } else if (s.observation.type == "range" || s.observation.type == "bearing") {
    const int ldim = s.observation.type == "bearing" ? 2 : -1;
    s.observation.landmarks = r.vector_list("/observation/landmarks", ldim);
    if (s.observation.landmarks.empty()) r.fail("/observation/landmarks", "needs at least one landmark");
    for (std::size_t i = 0; i < s.observation.landmarks.size(); ++i) {
      if (s.observation.landmarks[i].size() > nx) {
        r.fail("/observation/landmarks/" + std::to_string(i), "landmark exceeds state dimension");
      }
    }
    if (s.observation.type == "bearing" && nx < 3) {
      r.fail("/observation/type", "bearing needs a state with a heading");
    }
    s.observation.noise.base = r.number_or("/observation/noise_base", 0.01);
    s.observation.noise.slope = r.number_or("/observation/noise_slope", 0.0);
    if (s.observation.noise.base < 0.0) r.fail("/observation/noise_base", "must be >= 0");
    if (s.observation.noise.slope < 0.0) r.fail("/observation/noise_slope", "must be >= 0");
  } else {
    r.fail("/observation/type", "expected 'light_dark', 'range' or 'bearing'");
  }

  // initial belief
  r.only_keys("/initial_belief", {"components"});
  const auto ncomp = r.array_size("/initial_belief/components");
  if (ncomp == 0) r.fail("/initial_belief/components", "needs at least one component");
  double total = 0.0;
  for (std::size_t i = 0; i < ncomp; ++i) {
    const std::string p = "/initial_belief/components/" + std::to_string(i);
    r.only_keys(p, {"weight", "mean", "cov"});
    GaussianComponent c;
    c.weight = r.number(p + "/weight");
    if (c.weight < 0.0) r.fail(p + "/weight", "must be >= 0");
    c.mean = r.vector(p + "/mean", nx);
    c.cov = r.matrix(p + "/cov", nx, nx);
    try {
      psd_sqrt(c.cov);
    } catch (const ConfigError& e) {
      r.fail(p + "/cov", e.what());
    }
    total += c.weight;
    s.initial_belief.components.push_back(std::move(c));
  }
  if (std::abs(total - 1.0) > 1e-9) r.fail("/initial_belief/components", "weights must sum to 1");

  // goal
  r.only_keys("/goal", {"state", "radius", "threshold"});
  s.goal.state = r.vector("/goal/state", nx);
  s.goal.radius = r.number("/goal/radius");
  s.goal.threshold = r.number("/goal/threshold");
  if (!(s.goal.radius > 0.0)) r.fail("/goal/radius", "must be > 0");
  if (!(s.goal.threshold > 0.0 && s.goal.threshold < 1.0)) r.fail("/goal/threshold", "must be in (0, 1)");

  // obstacles
  r.only_keys("/obstacles", {"penalty", "smoothing", "ellipsoids", "rectangles"});
  s.obstacles.penalty = r.number_or("/obstacles/penalty", 1e4);
  s.obstacles.smoothing = r.number_or("/obstacles/smoothing", 0.0);
  if (!(s.obstacles.penalty > 0.0)) r.fail("/obstacles/penalty", "must be > 0");
  if (s.obstacles.smoothing < 0.0) r.fail("/obstacles/smoothing", "must be >= 0");
  if (r.has("/obstacles/ellipsoids")) {
    for (std::size_t i = 0; i < r.array_size("/obstacles/ellipsoids"); ++i) {
      const std::string p = "/obstacles/ellipsoids/" + std::to_string(i);
      r.only_keys(p, {"center", "alpha"});
      Ellipsoid e{r.vector(p + "/center"), r.vector(p + "/alpha")};
      if (e.center.size() > nx) r.fail(p + "/center", "exceeds state dimension");
      if (e.alpha.size() != e.center.size()) r.fail(p + "/alpha", "must match center dimension");
      if ((e.alpha.array() <= 0.0).any()) r.fail(p + "/alpha", "entries must be > 0");
      s.obstacles.ellipsoids.push_back(std::move(e));
    }
  }
  if (r.has("/obstacles/rectangles")) {
    for (std::size_t i = 0; i < r.array_size("/obstacles/rectangles"); ++i) {
      const std::string p = "/obstacles/rectangles/" + std::to_string(i);
      r.only_keys(p, {"lo", "hi", "spacing", "margin"});
      RectangleSpec rect;
      rect.box.lo = r.vector(p + "/lo");
      rect.box.hi = r.vector(p + "/hi", static_cast<int>(rect.box.lo.size()));
      if (rect.box.lo.size() > nx) r.fail(p + "/lo", "exceeds state dimension");
      if (((rect.box.hi - rect.box.lo).array() < 0.0).any()) r.fail(p + "/hi", "must be >= lo");
      rect.spacing = r.number(p + "/spacing");
      rect.margin = r.number(p + "/margin");
      if (!(rect.spacing > 0.0)) r.fail(p + "/spacing", "must be > 0");
      if (!(rect.margin > 0.0)) r.fail(p + "/margin", "must be > 0");
      s.obstacles.rectangles.push_back(std::move(rect));
    }
  }

  // defaults
  r.only_keys("/defaults", {"K", "N", "V", "u_max", "beta", "max_steps", "replan_period",
                            "function_tolerance", "constraint_tolerance", "max_iterations",
                            "multistart", "waypoints"});
  auto& d = s.defaults;
  d.horizon = r.integer("/defaults/K");
  d.particles = r.integer("/defaults/N");
  if (d.horizon < 1) r.fail("/defaults/K", "must be >= 1");
  if (d.particles < 1) r.fail("/defaults/N", "must be >= 1");
  d.control_weight = r.matrix("/defaults/V", nu, nu);
  try {
    psd_sqrt(d.control_weight, "V");
  } catch (const ConfigError& e) {
    r.fail("/defaults/V", e.what());
  }
  if (r.has("/defaults/u_max")) {
    d.u_max = r.number("/defaults/u_max");
    if (!(*d.u_max > 0.0)) r.fail("/defaults/u_max", "must be > 0");
  }
  d.beta = r.number_or("/defaults/beta", 0.0);
  if (d.beta != 0.0 && d.beta != 1.0) r.fail("/defaults/beta", "must be 0 or 1");
  d.max_steps = r.integer_or("/defaults/max_steps", 60);
  d.replan_period = r.integer_or("/defaults/replan_period", 1);
  if (d.max_steps < 0) r.fail("/defaults/max_steps", "must be >= 0");
  if (d.replan_period < 1) r.fail("/defaults/replan_period", "must be >= 1");
  d.function_tolerance = r.number_or("/defaults/function_tolerance", 2e-3);
  d.constraint_tolerance = r.number_or("/defaults/constraint_tolerance", 1e-8);
  if (!(d.function_tolerance > 0.0)) r.fail("/defaults/function_tolerance", "must be > 0");
  if (!(d.constraint_tolerance > 0.0)) r.fail("/defaults/constraint_tolerance", "must be > 0");
  d.max_iterations = r.integer_or("/defaults/max_iterations", 5000);
  if (d.max_iterations < 1) r.fail("/defaults/max_iterations", "must be >= 1");
  d.multistart = r.boolean_or("/defaults/multistart", false);
  if (r.has("/defaults/waypoints")) d.waypoints = r.vector_list("/defaults/waypoints", nx);
  return s;
}

}  // namespace detail

/// Parses scenario JSON text. Errors name the offending field and its line.
inline Scenario parse_scenario(const std::string& text) {
  LocatedJson doc;
  try {
    doc = parse_located_json(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + upto, '\n'));
    throw ConfigError("scenario is not valid JSON (line " + std::to_string(line) + "): " + e.what());
  }
  return detail::read_scenario(doc);
}

inline std::optional<std::string> builtin_scenario_text(const std::string& name) {
  for (const auto& b : builtin_scenarios()) {
    if (name == b.name) return std::string(b.json);
  }
  return std::nullopt;
}

/// Loads a built-in scenario by name, or a JSON file by path.
inline Scenario load_scenario(const std::string& path_or_builtin) {
  if (auto text = builtin_scenario_text(path_or_builtin)) return parse_scenario(*text);
  std::ifstream in(path_or_builtin);
  if (!in) throw ConfigError("cannot open scenario '" + path_or_builtin + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

// ---------------------------------------------------------------------------
// JSON writing
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline nlohmann::json to_json(const Matrix& m) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(to_json(Vector(m.row(r).transpose())));
  return a;
}

inline nlohmann::json to_json(const std::vector<Vector>& vs) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& v : vs) a.push_back(to_json(v));
  return a;
}

inline nlohmann::json to_json(const Scenario& s) {
  using nlohmann::json;
  json j;
  j["schema"] = kScenarioSchema;
  j["name"] = s.name;
  json p;
  p["type"] = s.process.type;
  if (s.process.type == "linear") {
    p["A"] = to_json(s.process.a);
    p["B"] = to_json(s.process.b);
    p["G"] = to_json(s.process.g);
  } else {
    p["dt"] = s.process.dt;
  }
  p["noise_cov"] = to_json(s.process.noise_cov);
  j["process"] = p;

  json o;
  o["type"] = s.observation.type;
  if (s.observation.type == "light_dark") {
    o["noise_scale"] = s.observation.noise_scale;
    o["floor"] = s.observation.floor;
  } else {
    o["landmarks"] = to_json(s.observation.landmarks);
    o["noise_base"] = s.observation.noise.base;
    o["noise_slope"] = s.observation.noise.slope;
  }
  j["observation"] = o;

  json comps = json::array();
  for (const auto& c : s.initial_belief.components) {
    comps.push_back({{"weight", c.weight}, {"mean", to_json(c.mean)}, {"cov", to_json(c.cov)}});
  }
  j["initial_belief"] = {{"components", comps}};
  j["goal"] = {{"state", to_json(s.goal.state)}, {"radius", s.goal.radius}, {"threshold", s.goal.threshold}};

  json ells = json::array();
  for (const auto& e : s.obstacles.ellipsoids) {
    ells.push_back({{"center", to_json(e.center)}, {"alpha", to_json(e.alpha)}});
  }
  json rects = json::array();
  for (const auto& r : s.obstacles.rectangles) {
    rects.push_back({{"lo", to_json(r.box.lo)}, {"hi", to_json(r.box.hi)},
                     {"spacing", r.spacing}, {"margin", r.margin}});
  }
  j["obstacles"] = {{"penalty", s.obstacles.penalty}, {"smoothing", s.obstacles.smoothing},
                    {"ellipsoids", ells}, {"rectangles", rects}};

  const auto& d = s.defaults;
  json dj;
  dj["K"] = d.horizon;
  dj["N"] = d.particles;
  dj["V"] = to_json(d.control_weight);
  dj["u_max"] = d.u_max ? json(*d.u_max) : json(nullptr);
  dj["beta"] = d.beta;
  dj["max_steps"] = d.max_steps;
  dj["replan_period"] = d.replan_period;
  dj["function_tolerance"] = d.function_tolerance;
  dj["constraint_tolerance"] = d.constraint_tolerance;
  dj["max_iterations"] = d.max_iterations;
  dj["multistart"] = d.multistart;
  dj["waypoints"] = to_json(d.waypoints);
  j["defaults"] = dj;
  return j;
}

inline std::string serialize_scenario(const Scenario& s) { return to_json(s).dump(2); }

namespace detail {

inline bool same(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

inline bool same(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same(a[i], b[i])) return false;
  }
  return true;
}

}  // namespace detail

inline bool operator==(const Scenario& x, const Scenario& y) {
  using detail::same;
  if (x.name != y.name) return false;
  const auto& p = x.process;
  const auto& q = y.process;
  if (p.type != q.type || !same(p.noise_cov, q.noise_cov)) return false;
  if (p.type == "linear" && (!same(p.a, q.a) || !same(p.b, q.b) || !same(p.g, q.g))) return false;
  if (p.type == "unicycle" && p.dt != q.dt) return false;
  const auto& o = x.observation;
  const auto& v = y.observation;
  if (o.type != v.type || !same(o.landmarks, v.landmarks) || o.noise.base != v.noise.base ||
      o.noise.slope != v.noise.slope || o.noise_scale != v.noise_scale || o.floor != v.floor) {
    return false;
  }
  const auto& ca = x.initial_belief.components;
  const auto& cb = y.initial_belief.components;
  if (ca.size() != cb.size()) return false;
  for (std::size_t i = 0; i < ca.size(); ++i) {
    if (ca[i].weight != cb[i].weight || !same(ca[i].mean, cb[i].mean) || !same(ca[i].cov, cb[i].cov)) {
      return false;
    }
  }
  if (!same(x.goal.state, y.goal.state) || x.goal.radius != y.goal.radius ||
      x.goal.threshold != y.goal.threshold) {
    return false;
  }
  const auto& ob = x.obstacles;
  const auto& oc = y.obstacles;
  if (ob.penalty != oc.penalty || ob.smoothing != oc.smoothing ||
      ob.ellipsoids.size() != oc.ellipsoids.size() || ob.rectangles.size() != oc.rectangles.size()) {
    return false;
  }
  for (std::size_t i = 0; i < ob.ellipsoids.size(); ++i) {
    if (!same(ob.ellipsoids[i].center, oc.ellipsoids[i].center) ||
        !same(ob.ellipsoids[i].alpha, oc.ellipsoids[i].alpha)) {
      return false;
    }
  }
  for (std::size_t i = 0; i < ob.rectangles.size(); ++i) {
    const auto& r = ob.rectangles[i];
    const auto& t = oc.rectangles[i];
    if (!same(r.box.lo, t.box.lo) || !same(r.box.hi, t.box.hi) || r.spacing != t.spacing ||
        r.margin != t.margin) {
      return false;
    }
  }
  const auto& d = x.defaults;
  const auto& e = y.defaults;
  return d.horizon == e.horizon && d.particles == e.particles &&
         same(d.control_weight, e.control_weight) && d.u_max == e.u_max && d.beta == e.beta &&
         d.max_steps == e.max_steps && d.replan_period == e.replan_period &&
         d.function_tolerance == e.function_tolerance &&
         d.constraint_tolerance == e.constraint_tolerance && d.max_iterations == e.max_iterations &&
         d.multistart == e.multistart && same(d.waypoints, e.waypoints);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Finding {
  std::string field;
  std::string message;
};

/// Semantic checks beyond the schema. Empty when the scenario is sound.
inline std::vector<Finding> validate_scenario(const Scenario& s) {
  std::vector<Finding> out;
  World w;
  try {
    w = instantiate(s);
  } catch (const Error& e) {
    out.push_back({"/", e.what()});
    return out;
  }

  if (s.observation.type == "light_dark") {
    // R(x) = 1/(2 x_1 + 1) has its pole at x_1 = -1/2; every point the planner is
    // asked to reach or start from must stay on the positive side.
    std::vector<std::pair<std::string, Vector>> points{{"/goal/state", s.goal.state}};
    for (std::size_t i = 0; i < s.initial_belief.components.size(); ++i) {
      points.push_back({"/initial_belief/components/" + std::to_string(i) + "/mean",
                        s.initial_belief.components[i].mean});
    }
    for (std::size_t i = 0; i < s.defaults.waypoints.size(); ++i) {
      points.push_back({"/defaults/waypoints/" + std::to_string(i), s.defaults.waypoints[i]});
    }
    for (const auto& [field, x] : points) {
      if (2.0 * x(0) + 1.0 <= 0.0) {
        out.push_back({field, "R(x) singular/negative at x1=-0.5 crossing (x1 = " +
                                  std::to_string(x(0)) + ")"});
      }
    }
  }

  auto blocked = [&](const Vector& x) {
    if (!w.obstacles.empty() && w.obstacles.max_cover_value(x) >= 0.0) return true;
    for (const auto& r : s.obstacles.rectangles) {
      if (r.box.contains(x)) return true;
    }
    return false;
  };
  if (blocked(s.goal.state)) out.push_back({"/goal/state", "goal blocked"});
  for (std::size_t i = 0; i < s.initial_belief.components.size(); ++i) {
    if (blocked(s.initial_belief.components[i].mean)) {
      out.push_back({"/initial_belief/components/" + std::to_string(i) + "/mean", "start blocked"});
    }
  }
  for (std::size_t i = 0; i < s.observation.landmarks.size(); ++i) {
    Vector x = Vector::Zero(s.state_dim());
    const auto& l = s.observation.landmarks[i];
    x.head(l.size()) = l;
    if (blocked(x)) {
      out.push_back({"/observation/landmarks/" + std::to_string(i), "landmark inside a wall"});
    }
  }
  for (std::size_t i = 0; i < s.defaults.waypoints.size(); ++i) {
    if (blocked(s.defaults.waypoints[i])) {
      out.push_back({"/defaults/waypoints/" + std::to_string(i), "waypoint blocked"});
    }
  }
  if (s.defaults.control_weight.rows() != s.control_dim()) {
    out.push_back({"/defaults/V", "control weight does not match control dimension"});
  }
  return out;
}

}  // namespace brhc
