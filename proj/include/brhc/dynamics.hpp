#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "brhc/core.hpp"

namespace brhc {

// ---------------------------------------------------------------------------
// Process models: x' = f(x, u, w), w ~ N(0, Q) iid.
// ---------------------------------------------------------------------------

class ProcessModel {
 public:
  ProcessModel(int nx, int nu, Matrix noise_cov)
      : nx_(nx), nu_(nu), noise_cov_(std::move(noise_cov)) {
    if (nx <= 0 || nu <= 0) throw ConfigError("process model dimensions must be positive");
    noise_sqrt_ = psd_sqrt(noise_cov_, "process noise covariance");
  }
  virtual ~ProcessModel() = default;

  int state_dim() const { return nx_; }
  int control_dim() const { return nu_; }
  int noise_dim() const { return static_cast<int>(noise_cov_.rows()); }
  const Matrix& noise_covariance() const { return noise_cov_; }
  const Matrix& noise_sqrt() const { return noise_sqrt_; }

  virtual std::string kind() const = 0;
  virtual Vector transition(const Vector& x, const Vector& u, const Vector& w) const = 0;

  // Jacobians at (x, u, w = 0). Central differences unless overridden.
  virtual Matrix state_jacobian(const Vector& x, const Vector& u) const {
    const Vector w0 = Vector::Zero(noise_dim());
    return numeric_jacobian([&](const Vector& xx) { return transition(xx, u, w0); }, x);
  }
  virtual Matrix control_jacobian(const Vector& x, const Vector& u) const {
    const Vector w0 = Vector::Zero(noise_dim());
    return numeric_jacobian([&](const Vector& uu) { return transition(x, uu, w0); }, u);
  }
  virtual Matrix noise_jacobian(const Vector& x, const Vector& u) const {
    return numeric_jacobian([&](const Vector& ww) { return transition(x, u, ww); },
                            Vector::Zero(noise_dim()));
  }

 private:
  int nx_;
  int nu_;
  Matrix noise_cov_;
  Matrix noise_sqrt_;
};

/// x' = A x + B u + G w. Covers the holonomic A = B = I model.
class LinearProcess final : public ProcessModel {
 public:
  LinearProcess(Matrix a, Matrix b, Matrix g, Matrix noise_cov)
      : ProcessModel(static_cast<int>(a.rows()), static_cast<int>(b.cols()), std::move(noise_cov)),
        a_(std::move(a)),
        b_(std::move(b)),
        g_(std::move(g)) {
    if (a_.cols() != a_.rows() || b_.rows() != a_.rows() || g_.rows() != a_.rows() ||
        g_.cols() != noise_dim()) {
      throw ConfigError("linear process: inconsistent A/B/G/Q shapes");
    }
  }

  /// A = B = G = I(n).
  static LinearProcess holonomic(int n, const Matrix& noise_cov) {
    const Matrix eye = Matrix::Identity(n, n);
    return LinearProcess(eye, eye, eye, noise_cov);
  }

  std::string kind() const override { return "linear"; }
  Vector transition(const Vector& x, const Vector& u, const Vector& w) const override {
    require_dim(x, state_dim(), "state");
    require_dim(u, control_dim(), "control");
    require_dim(w, noise_dim(), "process noise");
    return a_ * x + b_ * u + g_ * w;
  }
  Matrix state_jacobian(const Vector&, const Vector&) const override { return a_; }
  Matrix control_jacobian(const Vector&, const Vector&) const override { return b_; }
  Matrix noise_jacobian(const Vector&, const Vector&) const override { return g_; }

  const Matrix& a() const { return a_; }
  const Matrix& b() const { return b_; }
  const Matrix& g() const { return g_; }

 private:
  Matrix a_, b_, g_;
};

/// Euler-discretized unicycle: state (x, y, theta), control (v, omega),
/// additive noise on all three state components.
class UnicycleProcess final : public ProcessModel {
 public:
  UnicycleProcess(double dt, Matrix noise_cov) : ProcessModel(3, 2, std::move(noise_cov)), dt_(dt) {
    if (!(dt > 0.0)) throw ConfigError("unicycle: dt must be positive");
    if (noise_dim() != 3) throw ConfigError("unicycle: noise covariance must be 3x3");
  }

  std::string kind() const override { return "unicycle"; }
  double dt() const { return dt_; }

  Vector transition(const Vector& x, const Vector& u, const Vector& w) const override {
    require_dim(x, 3, "state");
    require_dim(u, 2, "control");
    require_dim(w, 3, "process noise");
    Vector next(3);
    next << x(0) + dt_ * u(0) * std::cos(x(2)), x(1) + dt_ * u(0) * std::sin(x(2)),
        x(2) + dt_ * u(1);
    return next + w;
  }
  Matrix state_jacobian(const Vector& x, const Vector& u) const override {
    Matrix a = Matrix::Identity(3, 3);
    a(0, 2) = -dt_ * u(0) * std::sin(x(2));
    a(1, 2) = dt_ * u(0) * std::cos(x(2));
    return a;
  }
  Matrix control_jacobian(const Vector& x, const Vector&) const override {
    Matrix b = Matrix::Zero(3, 2);
    b(0, 0) = dt_ * std::cos(x(2));
    b(1, 0) = dt_ * std::sin(x(2));
    b(2, 1) = dt_;
    return b;
  }
  Matrix noise_jacobian(const Vector&, const Vector&) const override {
    return Matrix::Identity(3, 3);
  }

 private:
  double dt_;
};

/// User-supplied transition; Jacobians fall back to central differences.
class CallbackProcess final : public ProcessModel {
 public:
  using Fn = std::function<Vector(const Vector&, const Vector&, const Vector&)>;
  CallbackProcess(int nx, int nu, Matrix noise_cov, Fn f)
      : ProcessModel(nx, nu, std::move(noise_cov)), f_(std::move(f)) {}
  std::string kind() const override { return "callback"; }
  Vector transition(const Vector& x, const Vector& u, const Vector& w) const override {
    return f_(x, u, w);
  }

 private:
  Fn f_;
};

// ---------------------------------------------------------------------------
// Observation models: z = h(x) + v, v ~ N(0, Sigma(x)).
// R(x) is the planner's weighting matrix; it need not equal Sigma(x).
// ---------------------------------------------------------------------------

class ObservationModel {
 public:
  virtual ~ObservationModel() = default;

  virtual std::string kind() const = 0;
  virtual int state_dim() const = 0;
  virtual int observation_dim() const = 0;
  virtual Vector measure(const Vector& x) const = 0;
  virtual Matrix weighting(const Vector& x) const = 0;
  virtual Matrix noise_covariance(const Vector& x) const = 0;

  virtual Matrix jacobian(const Vector& x) const {
    return numeric_jacobian([this](const Vector& xx) { return measure(xx); }, x);
  }

  /// z - zhat, with angular components wrapped where applicable.
  virtual Vector innovation(const Vector& z, const Vector& zhat) const { return z - zhat; }

  /// trace(W(x) S) with W = H^T R H.
  virtual double weight_trace(const Vector& x, const Matrix& s) const {
    const Matrix h = jacobian(x);
    return (h.transpose() * weighting(x) * h * s).trace();
  }

  /// Gradient of trace(W(x) S) in x; central differences unless overridden.
  virtual Vector weight_trace_gradient(const Vector& x, const Matrix& s) const {
    return numeric_gradient([&](const Vector& xx) { return weight_trace(xx, s); }, x);
  }

  virtual std::vector<Vector> landmarks() const { return {}; }
};

struct LandmarkNoise {
  // Per-landmark measurement variance = base + slope * distance^2.
  double base = 0.01;
  double slope = 0.0;
};

namespace detail {

inline void check_landmarks(const std::vector<Vector>& landmarks, int nx, int min_dim,
                            const char* who) {
  if (landmarks.empty()) throw ConfigError(std::string(who) + ": at least one landmark required");
  for (const auto& l : landmarks) {
    if (l.size() < min_dim || l.size() > nx || !l.allFinite()) {
      throw ConfigError(std::string(who) + ": landmark dimension inconsistent with state");
    }
  }
}

}  // namespace detail

/// Stacked range measurements h_l(x) = ||x[0:d] - L_l|| with R_l = ||x - L_l||^2,
/// so each W_l = (x - L_l)(x - L_l)^T.
class RangeObservation final : public ObservationModel {
 public:
  RangeObservation(int nx, std::vector<Vector> landmarks, LandmarkNoise noise = {})
      : nx_(nx), landmarks_(std::move(landmarks)), noise_(noise) {
    detail::check_landmarks(landmarks_, nx_, 1, "range observation");
    if (noise_.base < 0.0 || noise_.slope < 0.0) throw ConfigError("range noise must be >= 0");
  }

  std::string kind() const override { return "range"; }
  int state_dim() const override { return nx_; }
  int observation_dim() const override { return static_cast<int>(landmarks_.size()); }
  std::vector<Vector> landmarks() const override { return landmarks_; }
  const LandmarkNoise& noise() const { return noise_; }

  Vector measure(const Vector& x) const override {
    require_dim(x, nx_, "state");
    Vector z(observation_dim());
    for (std::size_t l = 0; l < landmarks_.size(); ++l) z(l) = distance(x, l);
    return z;
  }

  Matrix jacobian(const Vector& x) const override {
    require_dim(x, nx_, "state");
    Matrix h = Matrix::Zero(observation_dim(), nx_);
    for (std::size_t l = 0; l < landmarks_.size(); ++l) {
      const auto d = landmarks_[l].size();
      const double rho = distance(x, l);
      h.row(l).head(d) = (x.head(d) - landmarks_[l]).transpose() / rho;
    }
    return h;
  }

  Matrix weighting(const Vector& x) const override {
    Vector r(observation_dim());
    for (std::size_t l = 0; l < landmarks_.size(); ++l) {
      const auto d = landmarks_[l].size();
      r(l) = (x.head(d) - landmarks_[l]).squaredNorm();
    }
    return r.asDiagonal();
  }

  Matrix noise_covariance(const Vector& x) const override {
    Vector v(observation_dim());
    for (std::size_t l = 0; l < landmarks_.size(); ++l) {
      const auto d = landmarks_[l].size();
      v(l) = noise_.base + noise_.slope * (x.head(d) - landmarks_[l]).squaredNorm();
    }
    return v.asDiagonal();
  }

  double weight_trace(const Vector& x, const Matrix& s) const override {
    double total = 0.0;
    for (const auto& lm : landmarks_) {
      const auto d = lm.size();
      const Vector e = x.head(d) - lm;
      total += e.dot(s.topLeftCorner(d, d) * e);
    }
    return total;
  }

  Vector weight_trace_gradient(const Vector& x, const Matrix& s) const override {
    Vector g = Vector::Zero(nx_);
    for (const auto& lm : landmarks_) {
      const auto d = lm.size();
      const Matrix sd = s.topLeftCorner(d, d);
      g.head(d) += (sd + sd.transpose()) * (x.head(d) - lm);
    }
    return g;
  }

 private:
  double distance(const Vector& x, std::size_t l) const {
    const auto d = landmarks_[l].size();
    const double rho = (x.head(d) - landmarks_[l]).norm();
    if (rho < 1e-12) throw SingularObservationError("range observation: state at landmark");
    return rho;
  }

  int nx_;
  std::vector<Vector> landmarks_;
  LandmarkNoise noise_;
};

/// Stacked bearing measurements for states (x, y, theta, ...):
/// h_l(x) = wrap(atan2(y - L_y, x - L_x) - theta), R_l = (x - L_x)^2 + (y - L_y)^2.
class BearingObservation final : public ObservationModel {
 public:
  BearingObservation(int nx, std::vector<Vector> landmarks, LandmarkNoise noise = {})
      : nx_(nx), landmarks_(std::move(landmarks)), noise_(noise) {
    if (nx_ < 3) throw ConfigError("bearing observation: state needs (x, y, theta)");
    for (const auto& l : landmarks_) {
      if (l.size() != 2) throw ConfigError("bearing observation: landmarks must be planar");
    }
    detail::check_landmarks(landmarks_, nx_, 2, "bearing observation");
    if (noise_.base < 0.0 || noise_.slope < 0.0) throw ConfigError("bearing noise must be >= 0");
  }

  std::string kind() const override { return "bearing"; }
  int state_dim() const override { return nx_; }
  int observation_dim() const override { return static_cast<int>(landmarks_.size()); }
  std::vector<Vector> landmarks() const override { return landmarks_; }
  const LandmarkNoise& noise() const { return noise_; }

  Vector measure(const Vector& x) const override {
    require_dim(x, nx_, "state");
    Vector z(observation_dim());
    for (std::size_t l = 0; l < landmarks_.size(); ++l) {
      const auto [dx, dy] = offset(x, l);
      z(l) = wrap_angle(std::atan2(dy, dx) - x(2));
    }
    return z;
  }

  Matrix jacobian(const Vector& x) const override {
    require_dim(x, nx_, "state");
    Matrix h = Matrix::Zero(observation_dim(), nx_);
    for (std::size_t l = 0; l < landmarks_.size(); ++l) {
      const auto [dx, dy] = offset(x, l);
      const double rho2 = dx * dx + dy * dy;
      h(l, 0) = -dy / rho2;
      h(l, 1) = dx / rho2;
      h(l, 2) = -1.0;
    }
    return h;
  }

  Matrix weighting(const Vector& x) const override {
    Vector r(observation_dim());
    for (std::size_t l = 0; l < landmarks_.size(); ++l) {
      const auto [dx, dy] = offset(x, l);
      r(l) = dx * dx + dy * dy;
    }
    return r.asDiagonal();
  }

  Matrix noise_covariance(const Vector& x) const override {
    Vector v(observation_dim());
    for (std::size_t l = 0; l < landmarks_.size(); ++l) {
      const auto [dx, dy] = offset(x, l);
      v(l) = noise_.base + noise_.slope * (dx * dx + dy * dy);
    }
    return v.asDiagonal();
  }

  Vector innovation(const Vector& z, const Vector& zhat) const override {
    Vector e = z - zhat;
    for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = wrap_angle(e(i));
    return e;
  }

  // sqrt(R_l) H_l = (-dy/rho, dx/rho, -rho) on (x, y, theta); trace(W S) is a sum of
  // quadratic forms in that vector.
  double weight_trace(const Vector& x, const Matrix& s) const override {
    double total = 0.0;
    for (std::size_t l = 0; l < landmarks_.size(); ++l) {
      const Eigen::Vector3d v = scaled_row(x, l);
      total += v.dot(s.topLeftCorner(3, 3) * v);
    }
    return total;
  }

  Vector weight_trace_gradient(const Vector& x, const Matrix& s) const override {
    Vector g = Vector::Zero(nx_);
    const Matrix s3 = s.topLeftCorner(3, 3);
    const Matrix sym = s3 + s3.transpose();
    for (std::size_t l = 0; l < landmarks_.size(); ++l) {
      const auto [dx, dy] = offset(x, l);
      const double rho = std::hypot(dx, dy);
      const double rho3 = rho * rho * rho;
      const Eigen::Vector3d v = scaled_row(x, l);
      Eigen::Matrix<double, 3, 2> jv;
      jv << dx * dy / rho3, -dx * dx / rho3,
            dy * dy / rho3, -dx * dy / rho3,
            -dx / rho, -dy / rho;
      g.head(2) += jv.transpose() * (sym * v);
    }
    return g;
  }

 private:
  std::pair<double, double> offset(const Vector& x, std::size_t l) const {
    const double dx = x(0) - landmarks_[l](0);
    const double dy = x(1) - landmarks_[l](1);
    if (dx * dx + dy * dy < 1e-24) {
      throw SingularObservationError("bearing observation: state at landmark");
    }
    return {dx, dy};
  }

  Eigen::Vector3d scaled_row(const Vector& x, std::size_t l) const {
    const auto [dx, dy] = offset(x, l);
    const double rho = std::hypot(dx, dy);
    return {-dy / rho, dx / rho, -rho};
  }

  int nx_;
  std::vector<Vector> landmarks_;
  LandmarkNoise noise_;
};

/// Light-dark sensor: h(x) = x, noise covariance and weighting both
/// diag(1/(2 x_1 + 1)). The denominator is clamped at `floor` so the model stays
/// defined for x_1 <= -1/2 (where the formula has its pole).
class LightDarkObservation final : public ObservationModel {
 public:
  explicit LightDarkObservation(int nx = 2, double noise_scale = 1.0, double floor = 0.1)
      : nx_(nx), noise_scale_(noise_scale), floor_(floor) {
    if (nx_ < 1) throw ConfigError("light-dark: state dimension must be positive");
    if (!(noise_scale_ >= 0.0)) throw ConfigError("light-dark: noise scale must be >= 0");
    if (!(floor_ > 0.0)) throw ConfigError("light-dark: denominator floor must be positive");
  }

  std::string kind() const override { return "light_dark"; }
  int state_dim() const override { return nx_; }
  int observation_dim() const override { return nx_; }
  double noise_scale() const { return noise_scale_; }
  double floor() const { return floor_; }

  Vector measure(const Vector& x) const override {
    require_dim(x, nx_, "state");
    return x;
  }
  Matrix jacobian(const Vector& x) const override {
    require_dim(x, nx_, "state");
    return Matrix::Identity(nx_, nx_);
  }
  Matrix weighting(const Vector& x) const override {
    return Matrix::Identity(nx_, nx_) / denominator(x);
  }
  Matrix noise_covariance(const Vector& x) const override {
    return noise_scale_ * Matrix::Identity(nx_, nx_) / denominator(x);
  }
  double weight_trace(const Vector& x, const Matrix& s) const override {
    return s.trace() / denominator(x);
  }
  Vector weight_trace_gradient(const Vector& x, const Matrix& s) const override {
    Vector g = Vector::Zero(nx_);
    const double den = 2.0 * x(0) + 1.0;
    if (den > floor_) g(0) = -2.0 * s.trace() / (den * den);
    return g;
  }

 private:
  double denominator(const Vector& x) const { return std::max(2.0 * x(0) + 1.0, floor_); }

  int nx_;
  double noise_scale_;
  double floor_;
};

// ---------------------------------------------------------------------------
// Free operations
// ---------------------------------------------------------------------------

/// Noiseless step f(x, u, 0).
inline Vector step(const ProcessModel& model, const Vector& x, const Vector& u) {
  require_dim(x, model.state_dim(), "state");
  require_dim(u, model.control_dim(), "control");
  return model.transition(x, u, Vector::Zero(model.noise_dim()));
}

/// Noisy step f(x, u, w) with w drawn from the model's noise.
inline Vector step(const ProcessModel& model, const Vector& x, const Vector& u, Rng& rng) {
  require_dim(x, model.state_dim(), "state");
  require_dim(u, model.control_dim(), "control");
  return model.transition(x, u, sample_gaussian(model.noise_sqrt(), rng));
}

inline Vector observe(const ObservationModel& model, const Vector& x) {
  require_dim(x, model.state_dim(), "state");
  return model.measure(x);
}

inline Vector observe(const ObservationModel& model, const Vector& x, Rng& rng) {
  Vector z = observe(model, x);
  z += sample_gaussian(psd_sqrt(model.noise_covariance(x), "measurement noise covariance"), rng);
  return z;
}

inline Matrix linearize_observation(const ObservationModel& model, const Vector& x_map) {
  require_dim(x_map, model.state_dim(), "state");
  Matrix h = model.jacobian(x_map);
  if (!h.allFinite()) throw SingularObservationError("observation Jacobian is not finite");
  return h;
}

/// Per-step linearization (A_t, B_t, G_t, fp_t) about a nominal trajectory.
struct LinearizedSystem {
  std::vector<Matrix> a, b, g;
  std::vector<Vector> fp;
  std::vector<Vector> nominal_states;    // K + 1
  std::vector<Vector> nominal_controls;  // K

  int horizon() const { return static_cast<int>(a.size()); }
  int state_dim() const { return a.empty() ? 0 : static_cast<int>(a.front().rows()); }
  int control_dim() const { return b.empty() ? 0 : static_cast<int>(b.front().cols()); }
};

inline LinearizedSystem linearize_process(const ProcessModel& model,
                                          const std::vector<Vector>& states,
                                          const std::vector<Vector>& controls) {
  if (controls.empty() || states.size() != controls.size() + 1) {
    throw ConfigError("linearize_process: nominal needs K+1 states and K >= 1 controls");
  }
  LinearizedSystem lin;
  lin.nominal_states = states;
  lin.nominal_controls = controls;
  const int k = static_cast<int>(controls.size());
  for (int t = 0; t < k; ++t) {
    const Vector& x = states[t];
    const Vector& u = controls[t];
    require_dim(x, model.state_dim(), "nominal state");
    require_dim(u, model.control_dim(), "nominal control");
    Matrix a = model.state_jacobian(x, u);
    Matrix b = model.control_jacobian(x, u);
    Matrix g = model.noise_jacobian(x, u);
    if (!a.allFinite() || !b.allFinite() || !g.allFinite()) {
      throw LinearizationError("non-finite process Jacobian", t);
    }
    Vector fp = step(model, x, u) - a * x - b * u;
    if (!fp.allFinite()) throw LinearizationError("non-finite affine term", t);
    lin.a.push_back(std::move(a));
    lin.b.push_back(std::move(b));
    lin.g.push_back(std::move(g));
    lin.fp.push_back(std::move(fp));
  }
  return lin;
}

/// Noiseless rollout of the nonlinear model from x0 under a control sequence.
inline std::vector<Vector> rollout(const ProcessModel& model, const Vector& x0,
                                   const std::vector<Vector>& controls) {
  std::vector<Vector> xs{x0};
  xs.reserve(controls.size() + 1);
  for (const auto& u : controls) xs.push_back(step(model, xs.back(), u));
  return xs;
}

}  // namespace brhc
