#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace brhc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

// Error hierarchy. Everything thrown by the library derives from Error so
// callers can map failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SingularObservationError : public Error {
 public:
  using Error::Error;
};

class LinearizationError : public Error {
 public:
  LinearizationError(const std::string& what, int step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

class DegenerateUpdateError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, int step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

class InitializationError : public Error {
 public:
  using Error::Error;
};

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r <= 0.0) r += two_pi;
  return r - std::numbers::pi;
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

inline void require_dim(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw ConfigError(std::string(what) + ": expected dimension " + std::to_string(n) +
                      ", got " + std::to_string(v.size()));
  }
}

/// Central-difference Jacobian of a vector map. Step is 1e-6 * (1 + |x_i|).
inline Matrix numeric_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x) {
  const Vector f0 = f(x);
  Matrix jac(f0.size(), x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * (1.0 + std::abs(x(i)));
    xp(i) = x(i) + h;
    const Vector fp = f(xp);
    xp(i) = x(i) - h;
    const Vector fm = f(xp);
    xp(i) = x(i);
    jac.col(i) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

/// Central-difference gradient of a scalar map.
inline Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * (1.0 + std::abs(x(i)));
    xp(i) = x(i) + h;
    const double fp = f(xp);
    xp(i) = x(i) - h;
    const double fm = f(xp);
    xp(i) = x(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Square-root factor L with L L^T = cov for a symmetric PSD matrix.
/// Throws ConfigError when cov is not symmetric PSD.
inline Matrix psd_sqrt(const Matrix& cov, const char* what = "covariance") {
  if (cov.rows() != cov.cols()) throw ConfigError(std::string(what) + " is not square");
  if (!cov.allFinite()) throw ConfigError(std::string(what) + " has non-finite entries");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ConfigError(std::string(what) + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector& lambda = eig.eigenvalues();
  if (lambda.size() > 0 && lambda.minCoeff() < -1e-12 * scale) {
    throw ConfigError(std::string(what) + " is not positive semidefinite");
  }
  return eig.eigenvectors() * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

/// Draws a zero-mean Gaussian vector with covariance sqrt_cov * sqrt_cov^T.
inline Vector sample_gaussian(const Matrix& sqrt_cov, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector e(sqrt_cov.cols());
  for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = normal(rng);
  return sqrt_cov * e;
}

}  // namespace brhc
