#pragma once

#include <memory>
#include <string>
#include <vector>

#include "brhc/belief.hpp"
#include "brhc/core.hpp"
#include "brhc/dynamics.hpp"
#include "brhc/obstacles.hpp"

namespace brhc {

// Horizon-local time: t = 0 is the planning instant, t = K the terminal step.

/// Products of the linearized state matrices along the horizon.
class ChainProducts {
 public:
  explicit ChainProducts(const LinearizedSystem& lin) : a_(lin.a) {
    if (a_.empty()) throw ConfigError("chain_products: empty horizon");
    const auto n = a_.front().rows();
    prefix_.push_back(Matrix::Identity(n, n));
    for (const auto& a : a_) prefix_.push_back(a * prefix_.back());
  }

  int horizon() const { return static_cast<int>(a_.size()); }
  int state_dim() const { return static_cast<int>(a_.front().rows()); }

  /// A_{t2} A_{t2-1} ... A_{t1}; identity when t1 > t2.
  Matrix between(int t1, int t2) const {
    Matrix m = Matrix::Identity(state_dim(), state_dim());
    for (int t = t1; t <= t2; ++t) m = a_.at(t) * m;
    return m;
  }

  /// A_{t-1} ... A_0, i.e. between(0, t - 1), for t = 0..K.
  const Matrix& prefix(int t) const { return prefix_.at(t); }

 private:
  std::vector<Matrix> a_;
  std::vector<Matrix> prefix_;
};

inline ChainProducts chain_products(const LinearizedSystem& lin) { return ChainProducts(lin); }

/// Per-step scatter S_t = (1/N) sum_i o_it o_it^T of the particle offsets
/// o_it = prefix(t) (x_i - x_map), t = 0..K. Built in one O(N) pass; nothing
/// downstream depends on N.
struct OffsetSummary {
  std::vector<Matrix> scatter;
};

/// Offsets of every particle at step t through the noiseless linearized dynamics.
inline Matrix particle_offsets(const ParticleBelief& b, const Vector& x_map0,
                               const ChainProducts& chains, int t) {
  return chains.prefix(t) * (b.particles.colwise() - x_map0);
}

inline OffsetSummary offset_summaries(const ParticleBelief& b, const Vector& x_map0,
                                      const ChainProducts& chains) {
  if (b.state_dim() != chains.state_dim()) throw ConfigError("offset_summaries: dimension mismatch");
  const Matrix centered = b.particles.colwise() - x_map0;
  const Matrix base = centered * centered.transpose() / static_cast<double>(b.size());
  OffsetSummary out;
  for (int t = 0; t <= chains.horizon(); ++t) {
    const Matrix& p = chains.prefix(t);
    Matrix s = p * base * p.transpose();
    out.scatter.push_back(0.5 * (s + s.transpose()));
  }
  return out;
}

/// x_map_t = gain[t] U + offset[t] for stacked controls U in R^{K n_u}.
struct MapTrajectory {
  std::vector<Matrix> gain;
  std::vector<Vector> offset;

  int horizon() const { return static_cast<int>(gain.size()) - 1; }

  Vector state(int t, const Vector& u) const { return gain[t] * u + offset[t]; }

  std::vector<Vector> states(const Vector& u) const {
    std::vector<Vector> xs;
    xs.reserve(gain.size());
    for (std::size_t t = 0; t < gain.size(); ++t) xs.push_back(gain[t] * u + offset[t]);
    return xs;
  }
};

inline MapTrajectory build_map_trajectory(const LinearizedSystem& lin, const Vector& x_map0) {
  const int k = lin.horizon();
  const int nx = lin.state_dim();
  const int nu = lin.control_dim();
  require_dim(x_map0, nx, "MAP state");
  MapTrajectory traj;
  traj.gain.push_back(Matrix::Zero(nx, k * nu));
  traj.offset.push_back(x_map0);
  for (int t = 0; t < k; ++t) {
    Matrix g = lin.a[t] * traj.gain.back();
    g.middleCols(t * nu, nu) += lin.b[t];
    traj.offset.push_back(lin.a[t] * traj.offset.back() + lin.fp[t]);
    traj.gain.push_back(std::move(g));
  }
  return traj;
}

inline Matrix weight_matrix(const ObservationModel& obs, const Vector& x_map) {
  const Matrix h = linearize_observation(obs, x_map);
  const Matrix w = h.transpose() * obs.weighting(x_map) * h;
  return 0.5 * (w + w.transpose());
}

struct CostWeights {
  Matrix control;  // V
  double beta = 0.0;
};

/// Everything the cost needs; immutable once assembled.
struct CostContext {
  OffsetSummary summary;
  MapTrajectory trajectory;
  CostWeights weights;
  ObstacleSet obstacles;
  std::shared_ptr<const ObservationModel> observation;

  int horizon() const { return trajectory.horizon(); }
  int control_dim() const { return static_cast<int>(weights.control.rows()); }
  int num_variables() const { return horizon() * control_dim(); }
};

struct CostBreakdown {
  double innovation = 0.0;
  double control = 0.0;
  double obstacle = 0.0;
  double total() const { return innovation + control + obstacle; }
};

inline CostBreakdown cost_breakdown(const Vector& u, const CostContext& ctx) {
  require_dim(u, ctx.num_variables(), "stacked controls");
  const int nu = ctx.control_dim();
  CostBreakdown c;
  for (int t = 1; t <= ctx.horizon(); ++t) {
    const Vector x = ctx.trajectory.state(t, u);
    const double inn = ctx.observation->weight_trace(x, ctx.summary.scatter[t]);
    const auto ut = u.segment((t - 1) * nu, nu);
    const double ctl = ut.dot(ctx.weights.control * ut);
    const double obs = ctx.weights.beta != 0.0 ? ctx.weights.beta * opf_value(ctx.obstacles, x) : 0.0;
    if (!std::isfinite(inn) || !std::isfinite(ctl) || !std::isfinite(obs)) {
      throw EvaluationError("non-finite cost", t);
    }
    c.innovation += inn;
    c.control += ctl;
    c.obstacle += obs;
  }
  return c;
}

inline double total_cost(const Vector& u, const CostContext& ctx) {
  return cost_breakdown(u, ctx).total();
}

/// Analytic gradient through the affine MAP trajectory. At OPF ties the
/// lowest-index ellipsoid supplies the (sub)gradient.
inline Vector cost_gradient(const Vector& u, const CostContext& ctx) {
  require_dim(u, ctx.num_variables(), "stacked controls");
  const int nu = ctx.control_dim();
  const Matrix vsym = ctx.weights.control + ctx.weights.control.transpose();
  Vector g = Vector::Zero(u.size());
  for (int t = 1; t <= ctx.horizon(); ++t) {
    const Vector x = ctx.trajectory.state(t, u);
    Vector gx = ctx.observation->weight_trace_gradient(x, ctx.summary.scatter[t]);
    if (ctx.weights.beta != 0.0) gx += ctx.weights.beta * opf_grad(ctx.obstacles, x);
    if (!gx.allFinite()) throw EvaluationError("non-finite gradient", t);
    g.noalias() += ctx.trajectory.gain[t].transpose() * gx;
    g.segment((t - 1) * nu, nu) += vsym * u.segment((t - 1) * nu, nu);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Convexity audit
// ---------------------------------------------------------------------------

struct Lemma1Report {
  // Largest midpoint violation of convexity (l(m) above the chord) and of
  // concavity (l(m) below the chord), over all observation rows.
  double convex_violation = 0.0;
  double concave_violation = 0.0;
  // max |d^T H_k^T R_kk H_k d - l_k^2| over sampled points and rows.
  double g_error = 0.0;
  int samples = 0;
  int skipped = 0;  // samples that hit a singular point
  double tolerance = 1e-9;

  bool is_convex() const { return convex_violation <= tolerance; }
  bool is_concave() const { return concave_violation <= tolerance; }

  std::string verdict() const {
    if (is_convex() && is_concave()) return "affine (convex and concave)";
    if (is_convex()) return "convex";
    if (is_concave()) return "concave";
    return "neither convex nor concave";
  }
};

/// l_k(x) = sqrt(R_kk(x)) * (H_k(x) d) for observation row k.
inline Vector lemma1_l(const ObservationModel& obs, const Vector& d, const Vector& x) {
  const Matrix h = linearize_observation(obs, x);
  const Vector r = obs.weighting(x).diagonal();
  return r.cwiseMax(0.0).cwiseSqrt().cwiseProduct(h * d);
}

/// Numerical check of the convexity premise on random midpoints in `region`,
/// and of g = l^2 at random points.
inline Lemma1Report lemma1_audit(const ObservationModel& obs, const Vector& d, const Box& region,
                                 int samples, Rng& rng) {
  require_dim(d, obs.state_dim(), "direction");
  if (region.lo.size() != obs.state_dim() || region.hi.size() != obs.state_dim()) {
    throw ConfigError("lemma1_audit: region dimension mismatch");
  }
  Lemma1Report rep;
  rep.samples = samples;
  auto draw = [&] {
    Vector x(region.lo.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      std::uniform_real_distribution<double> u(region.lo(j), region.hi(j));
      x(j) = u(rng);
    }
    return x;
  };
  for (int s = 0; s < samples; ++s) {
    const Vector a = draw();
    const Vector b = draw();
    const Vector m = 0.5 * (a + b);
    try {
      const Vector la = lemma1_l(obs, d, a);
      const Vector lb = lemma1_l(obs, d, b);
      const Vector lm = lemma1_l(obs, d, m);
      const Vector chord = 0.5 * (la + lb);
      const double scale = 1.0 + la.cwiseAbs().maxCoeff() + lb.cwiseAbs().maxCoeff();
      rep.convex_violation = std::max(rep.convex_violation, (lm - chord).maxCoeff() / scale);
      rep.concave_violation = std::max(rep.concave_violation, (chord - lm).maxCoeff() / scale);

      const Matrix h = linearize_observation(obs, a);
      const Matrix r = obs.weighting(a);
      for (Eigen::Index k = 0; k < h.rows(); ++k) {
        const Matrix hk = h.row(k);
        const double g = (d.transpose() * hk.transpose() * r(k, k) * hk * d)(0, 0);
        rep.g_error = std::max(rep.g_error, std::abs(g - la(k) * la(k)));
      }
    } catch (const SingularObservationError&) {
      ++rep.skipped;
    }
  }
  return rep;
}

struct MidpointReport {
  double worst = 0.0;  // largest (f(m) - chord) / (1 + |chord|)
  int accepted = 0;
  int rejected = 0;
};

/// Randomized midpoint-convexity check of total_cost in U. Pairs are drawn
/// around `center` with the given spread; when `region` is set, pairs whose
/// MAP trajectories leave it are redrawn (the trajectory is affine in U, so the
/// midpoint stays inside too).
inline MidpointReport cost_midpoint_violation(const CostContext& ctx, const Vector& center, double spread,
                                              int samples, Rng& rng, const Box* region = nullptr) {
  std::normal_distribution<double> normal(0.0, spread);
  auto inside = [&](const Vector& u) {
    if (!region) return true;
    for (const auto& x : ctx.trajectory.states(u)) {
      if (!region->contains(x)) return false;
    }
    return true;
  };
  MidpointReport rep;
  const int max_draws = 100 * samples;
  for (int draw = 0; draw < max_draws && rep.accepted < samples; ++draw) {
    Vector a = center, b = center;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a(i) += normal(rng);
      b(i) += normal(rng);
    }
    if (!inside(a) || !inside(b)) {
      ++rep.rejected;
      continue;
    }
    ++rep.accepted;
    const double fa = total_cost(a, ctx);
    const double fb = total_cost(b, ctx);
    const double fm = total_cost(0.5 * (a + b), ctx);
    const double chord = 0.5 * (fa + fb);
    rep.worst = std::max(rep.worst, (fm - chord) / (1.0 + std::abs(chord)));
  }
  return rep;
}

}  // namespace brhc
