#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "brhc/core.hpp"
#include "brhc/dynamics.hpp"

namespace brhc {

/// Weighted particle approximation b(x) ~ sum_i w_i delta(x - x_i).
/// Particles are stored column-wise (n_x by N).
struct ParticleBelief {
  Matrix particles;
  Vector weights;

  ParticleBelief() = default;
  ParticleBelief(Matrix p, Vector w) : particles(std::move(p)), weights(std::move(w)) {}

  /// Uniform weights 1/N.
  static ParticleBelief uniform(Matrix p) {
    const auto n = p.cols();
    return ParticleBelief(std::move(p), Vector::Constant(n, 1.0 / static_cast<double>(n)));
  }

  int size() const { return static_cast<int>(particles.cols()); }
  int state_dim() const { return static_cast<int>(particles.rows()); }
  Vector particle(int i) const { return particles.col(i); }

  void validate() const {
    if (particles.cols() < 1) throw ConfigError("belief: needs at least one particle");
    if (weights.size() != particles.cols()) throw ConfigError("belief: weight count mismatch");
    if (!particles.allFinite()) throw ConfigError("belief: non-finite particle");
    if (!weights.allFinite() || weights.minCoeff() < 0.0) {
      throw ConfigError("belief: weights must be finite and nonnegative");
    }
    if (std::abs(weights.sum() - 1.0) > 1e-9) throw ConfigError("belief: weights must sum to 1");
  }

  double effective_sample_size() const { return 1.0 / weights.squaredNorm(); }
};

struct GoalSpec {
  Vector state;
  double radius = 0.3;
  double threshold = 0.5;

  void validate() const {
    if (!(radius > 0.0)) throw ConfigError("goal: radius must be > 0");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("goal: threshold must be in (0,1)");
    if (!state.allFinite()) throw ConfigError("goal: non-finite goal state");
  }
};

/// Probability mass strictly inside the open r-ball around the goal.
inline double goal_probability(const ParticleBelief& b, const GoalSpec& g) {
  double mass = 0.0;
  for (int i = 0; i < b.size(); ++i) {
    if ((b.particles.col(i) - g.state).norm() < g.radius) mass += b.weights(i);
  }
  return std::clamp(mass, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// MAP extraction
// ---------------------------------------------------------------------------

/// Silverman's rule per dimension, using the weighted standard deviation.
/// Dimensions with zero spread get bandwidth 1 (their kernel factor is constant).
inline Vector silverman_bandwidth(const ParticleBelief& b) {
  const int d = b.state_dim();
  const double n = static_cast<double>(b.size());
  const Vector mean = b.particles * b.weights;
  const Matrix centered = b.particles.colwise() - mean;
  const Vector var = centered.cwiseAbs2() * b.weights;
  const double factor = std::pow(4.0 / ((d + 2.0) * n), 1.0 / (d + 4.0));
  Vector h(d);
  for (int j = 0; j < d; ++j) {
    const double sigma = std::sqrt(std::max(var(j), 0.0));
    h(j) = sigma > 0.0 ? sigma * factor : 1.0;
  }
  return h;
}

/// Weighted Gaussian-kernel density (unnormalized) of the particle set at x.
inline double kde_density(const ParticleBelief& b, const Vector& bandwidth, const Vector& x) {
  double dens = 0.0;
  for (int i = 0; i < b.size(); ++i) {
    const double q = ((b.particles.col(i) - x).array() / bandwidth.array()).square().sum();
    dens += b.weights(i) * std::exp(-0.5 * q);
  }
  return dens;
}

struct MapOptions {
  // Above this particle count only an evenly strided subset of particles are
  // candidates (all particles still contribute to the density).
  int exact_limit = 5000;
};

/// Index of the particle that maximizes the weighted KDE. Ties go to the lowest index.
inline int map_index(const ParticleBelief& b, const Vector& bandwidth, MapOptions opt = {}) {
  b.validate();
  if (bandwidth.size() != b.state_dim() || (bandwidth.array() <= 0.0).any()) {
    throw ConfigError("map_estimate: bandwidth must be positive per dimension");
  }
  const int n = b.size();
  const int stride = n > opt.exact_limit ? (n + opt.exact_limit - 1) / opt.exact_limit : 1;
  const Matrix scaled = bandwidth.cwiseInverse().asDiagonal() * b.particles;
  int best = 0;
  double best_density = -1.0;
  for (int j = 0; j < n; j += stride) {
    const Matrix diff = scaled.colwise() - scaled.col(j);
    const Vector q = diff.colwise().squaredNorm().transpose();
    const double dens = b.weights.dot((-0.5 * q.array()).exp().matrix());
    if (dens > best_density) {
      best_density = dens;
      best = j;
    }
  }
  return best;
}

inline Vector map_estimate(const ParticleBelief& b, const Vector& bandwidth, MapOptions opt = {}) {
  return b.particles.col(map_index(b, bandwidth, opt));
}

inline Vector map_estimate(const ParticleBelief& b) {
  return map_estimate(b, silverman_bandwidth(b));
}

// ---------------------------------------------------------------------------
// Sequential importance resampling
// ---------------------------------------------------------------------------

/// Systematic resampling: N evenly spaced pointers with one uniform offset.
inline std::vector<int> systematic_resample_indices(const Vector& weights, Rng& rng) {
  const int n = static_cast<int>(weights.size());
  std::uniform_real_distribution<double> unif(0.0, 1.0 / n);
  const double u0 = unif(rng);
  std::vector<int> idx(n);
  double cumulative = weights(0);
  int i = 0;
  for (int m = 0; m < n; ++m) {
    const double u = u0 + static_cast<double>(m) / n;
    while (u > cumulative && i < n - 1) cumulative += weights(++i);
    idx[m] = i;
  }
  return idx;
}

struct UpdateStats {
  double ess = 0.0;
  bool resampled = false;
  bool inflated = false;
};

namespace detail {

// log N(e; 0, cov) up to the shared -n/2 log(2 pi) constant. Covariances below
// 1e-300 on the diagonal are floored so exact matches stay finite.
inline double gaussian_log_density(const Vector& e, const Matrix& cov) {
  Matrix c = cov;
  c.diagonal() = c.diagonal().cwiseMax(1e-300);
  Eigen::LDLT<Matrix> ldlt(c);
  const Vector d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || (d.array() <= 0.0).any()) {
    return -std::numeric_limits<double>::infinity();
  }
  return -0.5 * e.dot(ldlt.solve(e)) - 0.5 * d.array().log().sum();
}

}  // namespace detail

/// One particle-filter step b' = tau(b, u, z). Each particle is propagated
/// through f with sampled process noise, reweighted by the measurement
/// likelihood with covariance evaluated at the particle itself, renormalized,
/// and systematically resampled when ESS < N/2. If every weighted likelihood
/// underflows, the update is retried once with the measurement covariance
/// inflated by 10 before DegenerateUpdateError is thrown.
inline ParticleBelief pf_update(ParticleBelief b, const Vector& u, const Vector& z,
                                const ProcessModel& proc, const ObservationModel& obs, Rng& rng,
                                UpdateStats* stats = nullptr) {
  b.validate();
  if (b.state_dim() != proc.state_dim() || obs.state_dim() != proc.state_dim()) {
    throw ConfigError("pf_update: model/belief dimension mismatch");
  }
  require_dim(u, proc.control_dim(), "control");
  require_dim(z, obs.observation_dim(), "observation");
  const int n = b.size();

  for (int i = 0; i < n; ++i) b.particles.col(i) = step(proc, b.particles.col(i), u, rng);

  Vector log_w(n);
  bool inflated = false;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const double inflate = attempt == 0 ? 1.0 : 10.0;
    for (int i = 0; i < n; ++i) {
      const Vector x = b.particles.col(i);
      const Vector e = obs.innovation(z, obs.measure(x));
      const double lw = b.weights(i) > 0.0 ? std::log(b.weights(i)) : -std::numeric_limits<double>::infinity();
      log_w(i) = lw + detail::gaussian_log_density(e, inflate * obs.noise_covariance(x));
    }
    // Degenerate when every unnormalized weight underflows to zero.
    if (log_w.maxCoeff() > std::log(std::numeric_limits<double>::min())) break;
    if (attempt == 1) throw DegenerateUpdateError("pf_update: all measurement likelihoods vanish");
    inflated = true;
  }

  const double top = log_w.maxCoeff();
  Vector w = (log_w.array() - top).exp().matrix();
  w /= w.sum();
  b.weights = w;

  const double ess = b.effective_sample_size();
  bool resampled = false;
  if (ess < 0.5 * n) {
    const auto idx = systematic_resample_indices(b.weights, rng);
    Matrix next(b.state_dim(), n);
    for (int m = 0; m < n; ++m) next.col(m) = b.particles.col(idx[m]);
    b.particles = std::move(next);
    b.weights.setConstant(1.0 / n);
    resampled = true;
  }
  if (stats) *stats = {ess, resampled, inflated};
  return b;
}

// ---------------------------------------------------------------------------
// Initial belief
// ---------------------------------------------------------------------------

struct GaussianComponent {
  double weight = 1.0;
  Vector mean;
  Matrix cov;
};

struct GaussianMixture {
  std::vector<GaussianComponent> components;

  int state_dim() const {
    return components.empty() ? 0 : static_cast<int>(components.front().mean.size());
  }

  void validate() const {
    if (components.empty()) throw ConfigError("mixture: no components");
    double total = 0.0;
    for (const auto& c : components) {
      if (c.mean.size() != state_dim() || c.cov.rows() != state_dim() || c.cov.cols() != state_dim()) {
        throw ConfigError("mixture: inconsistent component dimensions");
      }
      if (!(c.weight >= 0.0)) throw ConfigError("mixture: negative component weight");
      psd_sqrt(c.cov, "mixture component covariance");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("mixture: weights must sum to 1");
  }
};

/// N iid draws from the mixture with uniform weights. `labels`, if given,
/// receives the component index of each particle.
inline ParticleBelief sample_initial_belief(const GaussianMixture& mix, int n, Rng& rng,
                                            std::vector<int>* labels = nullptr) {
  mix.validate();
  if (n < 1) throw ConfigError("sample_initial_belief: N must be >= 1");
  std::vector<double> w;
  std::vector<Matrix> roots;
  for (const auto& c : mix.components) {
    w.push_back(c.weight);
    roots.push_back(psd_sqrt(c.cov));
  }
  std::discrete_distribution<int> pick(w.begin(), w.end());
  Matrix p(mix.state_dim(), n);
  if (labels) labels->assign(n, 0);
  for (int i = 0; i < n; ++i) {
    const int k = pick(rng);
    p.col(i) = mix.components[k].mean + sample_gaussian(roots[k], rng);
    if (labels) (*labels)[i] = k;
  }
  return ParticleBelief::uniform(std::move(p));
}

}  // namespace brhc
