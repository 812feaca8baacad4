#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "brhc/core.hpp"

namespace brhc {

/// Axis-aligned ellipsoid with center c and axis coefficients alpha > 0.
/// Its exponent is q(x) = -sum_j alpha_j (x_j - c_j)^2; the covered region is
/// {q(x) >= -1}. Ellipsoids may span fewer coordinates than the state, in
/// which case they act on the leading ones.
struct Ellipsoid {
  Vector center;
  Vector alpha;

  void validate() const {
    if (center.size() == 0 || center.size() != alpha.size()) {
      throw ConfigError("ellipsoid: center/alpha dimension mismatch");
    }
    if (!center.allFinite() || !alpha.allFinite() || (alpha.array() <= 0.0).any()) {
      throw ConfigError("ellipsoid: alpha must be finite and strictly positive");
    }
  }

  double exponent(const Vector& x) const {
    const auto d = center.size();
    return -(alpha.array() * (x.head(d) - center).array().square()).sum();
  }

  /// Covering function f'(x) = 1 + q(x); nonnegative inside the ellipsoid.
  double cover_value(const Vector& x) const { return 1.0 + exponent(x); }
};

/// Ellipsoid cover plus penalty magnitude M for the obstacle penalty
///   f_b(x) = max_i M exp(q_i(x)).
/// With `smoothing` > 0 the max over exponents is replaced by a log-sum-exp
/// with that sharpness; 0 keeps the hard max.
struct ObstacleSet {
  std::vector<Ellipsoid> ellipsoids;
  double penalty = 1e4;
  double smoothing = 0.0;

  bool empty() const { return ellipsoids.empty(); }

  void validate(int nx) const {
    if (!(penalty > 0.0)) throw ConfigError("obstacles: penalty M must be > 0");
    if (!(smoothing >= 0.0)) throw ConfigError("obstacles: smoothing must be >= 0");
    for (const auto& e : ellipsoids) {
      e.validate();
      if (e.center.size() > nx) throw ConfigError("obstacles: ellipsoid exceeds state dimension");
    }
  }

  /// Index of the active ellipsoid (largest exponent, lowest index on ties), -1 if empty.
  int active(const Vector& x) const {
    int best = -1;
    double best_q = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ellipsoids.size(); ++i) {
      const double q = ellipsoids[i].exponent(x);
      if (q > best_q) {
        best_q = q;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  /// max_i f'_i(x); negative infinity when empty.
  double max_cover_value(const Vector& x) const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& e : ellipsoids) m = std::max(m, e.cover_value(x));
    return m;
  }
};

namespace detail {

inline double smoothed_exponent(const ObstacleSet& set, const Vector& x, Vector* softmax) {
  const auto n = set.ellipsoids.size();
  Vector q(n);
  for (std::size_t i = 0; i < n; ++i) q(i) = set.ellipsoids[i].exponent(x);
  const double top = q.maxCoeff();
  const Vector e = ((q.array() - top) * set.smoothing).exp().matrix();
  const double s = e.sum();
  if (softmax) *softmax = e / s;
  return top + std::log(s) / set.smoothing;
}

}  // namespace detail

inline double opf_value(const ObstacleSet& set, const Vector& x) {
  if (set.empty()) return 0.0;
  if (set.smoothing > 0.0) return set.penalty * std::exp(detail::smoothed_exponent(set, x, nullptr));
  return set.penalty * std::exp(set.ellipsoids[set.active(x)].exponent(x));
}

/// Gradient of the active term, -2 M e^q alpha_j (x_j - c_j); ties resolve to
/// the lowest-index ellipsoid.
inline Vector opf_grad(const ObstacleSet& set, const Vector& x) {
  Vector g = Vector::Zero(x.size());
  if (set.empty()) return g;
  auto term_grad = [&](const Ellipsoid& e) {
    const auto d = e.center.size();
    return Vector(-2.0 * (e.alpha.array() * (x.head(d) - e.center).array()).matrix());
  };
  if (set.smoothing > 0.0) {
    Vector soft;
    const double value = set.penalty * std::exp(detail::smoothed_exponent(set, x, &soft));
    for (std::size_t i = 0; i < set.ellipsoids.size(); ++i) {
      const auto& e = set.ellipsoids[i];
      g.head(e.center.size()) += value * soft(i) * term_grad(e);
    }
    return g;
  }
  const auto& e = set.ellipsoids[set.active(x)];
  g.head(e.center.size()) = set.penalty * std::exp(e.exponent(x)) * term_grad(e);
  return g;
}

/// Axis-aligned box [lo, hi].
struct Box {
  Vector lo;
  Vector hi;

  bool contains(const Vector& x) const {
    const auto d = lo.size();
    return ((x.head(d) - lo).array() >= 0.0).all() && ((hi - x.head(d)).array() >= 0.0).all();
  }

  /// Euclidean distance from x to the box (0 inside).
  double distance(const Vector& x) const {
    const auto d = lo.size();
    const Vector below = (lo - x.head(d)).cwiseMax(0.0);
    const Vector above = (x.head(d) - hi).cwiseMax(0.0);
    return (below + above).norm();
  }
};

/// ln(1e6): exponent depth at which the penalty reaches 1e-6 M.
inline constexpr double kMarginDecay = 13.815510557964274;

/// Covers a box with a grid of identical ellipsoids, one per cell. Cells are at
/// most `spacing` wide and are refined until every cell corner lies inside its
/// ellipsoid. Each alpha_j = ln(1e6) / (h_j + margin)^2, where h_j is the cell
/// half-width, so the penalty is at most 1e-6 M once a point is `margin` beyond
/// the box along any axis.
inline ObstacleSet cover_walls(const Box& wall, double spacing, double margin, double penalty) {
  const auto d = wall.lo.size();
  if (d == 0 || wall.hi.size() != d || !wall.lo.allFinite() || !wall.hi.allFinite() ||
      ((wall.hi - wall.lo).array() < 0.0).any()) {
    throw ConfigError("cover_walls: degenerate rectangle");
  }
  if (!(spacing > 0.0)) throw ConfigError("cover_walls: spacing must be > 0");
  if (!(margin > 0.0)) throw ConfigError("cover_walls: margin must be > 0");
  if (!(penalty > 0.0)) throw ConfigError("cover_walls: penalty must be > 0");

  const Vector extent = wall.hi - wall.lo;
  std::vector<int> cells(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    cells[j] = std::max(1, static_cast<int>(std::ceil(extent(j) / spacing - 1e-12)));
  }

  Vector half(d), alpha(d);
  for (int refine = 0;; ++refine) {
    for (Eigen::Index j = 0; j < d; ++j) {
      half(j) = extent(j) / (2.0 * cells[j]);
      alpha(j) = kMarginDecay / ((half(j) + margin) * (half(j) + margin));
    }
    const double corner = (alpha.array() * half.array().square()).sum();
    if (corner <= 1.0) break;
    if (refine > 60) throw ConfigError("cover_walls: margin too small to cover the rectangle");
    // Split the widest cells first.
    Eigen::Index widest = 0;
    half.maxCoeff(&widest);
    for (Eigen::Index j = 0; j < d; ++j) {
      if (half(j) >= 0.5 * half(widest)) cells[j] *= 2;
    }
  }

  ObstacleSet set;
  set.penalty = penalty;
  std::vector<int> index(d, 0);
  while (true) {
    Vector c(d);
    for (Eigen::Index j = 0; j < d; ++j) c(j) = wall.lo(j) + (2.0 * index[j] + 1.0) * half(j);
    set.ellipsoids.push_back({c, alpha});
    Eigen::Index j = 0;
    while (j < d && ++index[j] == cells[j]) index[j++] = 0;
    if (j == d) break;
  }
  return set;
}

/// Concatenates covers under a single penalty magnitude.
inline ObstacleSet merge(const std::vector<ObstacleSet>& parts, double penalty) {
  ObstacleSet out;
  out.penalty = penalty;
  for (const auto& p : parts) {
    out.ellipsoids.insert(out.ellipsoids.end(), p.ellipsoids.begin(), p.ellipsoids.end());
  }
  return out;
}

}  // namespace brhc
