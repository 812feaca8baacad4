#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "brhc/dynamics.hpp"

using namespace brhc;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

LinearProcess holonomic2() { return LinearProcess::holonomic(2, 1e-4 * Matrix::Identity(2, 2)); }

}  // namespace

TEST(Process, HolonomicStep) {
  const auto p = holonomic2();
  const Vector x = step(p, vec({1.0, 0.0}), vec({0.5, 0.5}));
  EXPECT_EQ(x, vec({1.5, 0.5}));
}

TEST(Process, FixedPointUnderZeroControl) {
  Matrix a(2, 2);
  a << 0.5, 0.0, 0.0, 2.0;
  LinearProcess p(a, Matrix::Identity(2, 2), Matrix::Identity(2, 2), Matrix::Zero(2, 2));
  const Vector x0 = Vector::Zero(2);
  EXPECT_EQ(step(p, x0, Vector::Zero(2)), x0);

  UnicycleProcess uni(0.1, Matrix::Zero(3, 3));
  const Vector pose = vec({1.0, -2.0, 0.7});
  EXPECT_EQ(step(uni, pose, Vector::Zero(2)), pose);
}

TEST(Process, UnicycleEulerStep) {
  UnicycleProcess uni(0.1, 1e-4 * Matrix::Identity(3, 3));
  const Vector x = step(uni, vec({0.0, 0.0, 0.0}), vec({1.0, 0.0}));
  EXPECT_NEAR(x(0), 0.1, 1e-15);
  EXPECT_NEAR(x(1), 0.0, 1e-15);
  EXPECT_NEAR(x(2), 0.0, 1e-15);
}

TEST(Process, DimensionMismatchIsConfigError) {
  const auto p = holonomic2();
  EXPECT_THROW(step(p, vec({1.0, 2.0, 3.0}), vec({0.0, 0.0})), ConfigError);
  EXPECT_THROW(step(p, vec({1.0, 2.0}), vec({0.0})), ConfigError);
  EXPECT_THROW(LinearProcess(Matrix::Identity(2, 2), Matrix::Identity(3, 2), Matrix::Identity(2, 2),
                             Matrix::Identity(2, 2)),
               ConfigError);
}

TEST(Process, NoisyStepIsReproducible) {
  const auto p = holonomic2();
  Rng a(5), b(5);
  EXPECT_EQ(step(p, vec({0.0, 0.0}), vec({1.0, 1.0}), a), step(p, vec({0.0, 0.0}), vec({1.0, 1.0}), b));
}

TEST(Process, CallbackJacobiansByDifferences) {
  CallbackProcess cb(2, 1, Matrix::Identity(2, 2), [](const Vector& x, const Vector& u, const Vector& w) {
    Vector y(2);
    y << x(0) + std::sin(x(1)) * u(0), x(1) * x(1) + u(0);
    return Vector(y + w);
  });
  const Vector x = vec({0.2, 0.4});
  const Vector u = vec({1.5});
  Matrix a(2, 2);
  a << 1.0, std::cos(0.4) * 1.5, 0.0, 0.8;
  Matrix b(2, 1);
  b << std::sin(0.4), 1.0;
  EXPECT_LT((cb.state_jacobian(x, u) - a).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((cb.control_jacobian(x, u) - b).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((cb.noise_jacobian(x, u) - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Observation, RangeDistance) {
  RangeObservation r(2, {vec({0.0, 0.0})});
  EXPECT_DOUBLE_EQ(observe(r, vec({3.0, 4.0}))(0), 5.0);
}

TEST(Observation, LightDarkIsIdentity) {
  LightDarkObservation ld;
  EXPECT_EQ(observe(ld, vec({2.0, 0.5})), vec({2.0, 0.5}));
}

TEST(Observation, BearingQuarterPi) {
  BearingObservation br(3, {vec({0.0, 0.0})});
  EXPECT_NEAR(observe(br, vec({1.0, 1.0, 0.0}))(0), std::numbers::pi / 4.0, 1e-15);
}

TEST(Observation, BearingSubtractsHeadingAndWraps) {
  BearingObservation br(3, {vec({0.0, 0.0})});
  // atan2(1, -1) = 3pi/4, heading -pi/2 gives 5pi/4 which wraps to -3pi/4.
  EXPECT_NEAR(observe(br, vec({-1.0, 1.0, -std::numbers::pi / 2.0}))(0), -3.0 * std::numbers::pi / 4.0,
              1e-14);
  const Vector e = br.innovation(vec({3.1}), vec({-3.1}));
  EXPECT_NEAR(e(0), 6.2 - 2.0 * std::numbers::pi, 1e-14);
}

TEST(Observation, AtLandmarkIsSingular) {
  RangeObservation r(2, {vec({1.0, 1.0})});
  EXPECT_THROW(observe(r, vec({1.0, 1.0})), SingularObservationError);
  EXPECT_THROW(linearize_observation(r, vec({1.0, 1.0})), SingularObservationError);
  BearingObservation br(3, {vec({1.0, 1.0})});
  EXPECT_THROW(observe(br, vec({1.0, 1.0, 0.3})), SingularObservationError);
}

TEST(Observation, NoisyObservationUsesStateNoise) {
  LightDarkObservation ld(2, 1.0, 0.1);
  Rng rng(3);
  const Vector x = vec({4.5, 0.0});  // variance 1/10
  const int n = 100000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += std::pow(observe(ld, x, rng)(0) - x(0), 2);
  EXPECT_NEAR(acc / n, 0.1, 0.003);
}

TEST(Linearization, RangeJacobian) {
  RangeObservation r(2, {vec({0.0, 0.0})});
  const Matrix h = linearize_observation(r, vec({3.0, 4.0}));
  EXPECT_NEAR(h(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(h(0, 1), 0.8, 1e-15);
}

TEST(Linearization, LightDarkJacobianIsIdentity) {
  LightDarkObservation ld;
  for (double x1 : {-3.0, 0.0, 2.0, 10.0}) {
    EXPECT_EQ(linearize_observation(ld, vec({x1, 1.0})), Matrix::Identity(2, 2));
  }
}

TEST(Linearization, StackedRangeRowsAreUnit) {
  RangeObservation r(3, {vec({0.0, 0.0}), vec({5.0, -1.0})});
  const Matrix h = linearize_observation(r, vec({1.0, 2.0, 7.0}));
  ASSERT_EQ(h.rows(), 2);
  ASSERT_EQ(h.cols(), 3);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(h.row(i).norm(), 1.0, 1e-14);
  EXPECT_EQ(h(0, 2), 0.0);
}

TEST(Linearization, AnalyticJacobiansMatchDifferences) {
  BearingObservation br(3, {vec({0.0, 0.0}), vec({2.0, -1.0})});
  RangeObservation r(2, {vec({1.0, 3.0})});
  const Vector xb = vec({1.3, 0.4, 0.2});
  const Vector xr = vec({-0.5, 0.7});
  auto fb = [&](const Vector& x) { return br.measure(x); };
  auto fr = [&](const Vector& x) { return r.measure(x); };
  EXPECT_LT((br.jacobian(xb) - numeric_jacobian(fb, xb)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((r.jacobian(xr) - numeric_jacobian(fr, xr)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Linearization, WeightTraceGradientsMatchDifferences) {
  Matrix s(3, 3);
  s << 0.4, 0.1, 0.0, 0.1, 0.3, 0.05, 0.0, 0.05, 0.2;
  BearingObservation br(3, {vec({0.0, 0.0}), vec({2.0, -1.0})});
  RangeObservation r(3, {vec({1.0, 3.0})});
  LightDarkObservation ld(3);
  const Vector x = vec({1.3, 0.4, 0.2});
  for (const ObservationModel* m : std::initializer_list<const ObservationModel*>{&br, &r, &ld}) {
    const Vector fd = numeric_gradient([&](const Vector& xx) { return m->weight_trace(xx, s); }, x);
    EXPECT_LT((m->weight_trace_gradient(x, s) - fd).norm(), 1e-7) << m->kind();
    const Matrix h = m->jacobian(x);
    EXPECT_NEAR(m->weight_trace(x, s), (h.transpose() * m->weighting(x) * h * s).trace(), 1e-12) << m->kind();
  }
}

TEST(Linearization, HolonomicNominal) {
  const auto p = holonomic2();
  const std::vector<Vector> us{vec({1.0, 0.0}), vec({0.3, -2.0}), vec({0.0, 0.5})};
  const auto xs = rollout(p, vec({0.5, 0.5}), us);
  const auto lin = linearize_process(p, xs, us);
  ASSERT_EQ(lin.horizon(), 3);
  for (int t = 0; t < 3; ++t) {
    EXPECT_EQ(lin.a[t], Matrix::Identity(2, 2));
    EXPECT_EQ(lin.b[t], Matrix::Identity(2, 2));
    EXPECT_LT(lin.fp[t].norm(), 1e-15);
  }
}

TEST(Linearization, UnicycleAtOrigin) {
  UnicycleProcess uni(0.1, 1e-4 * Matrix::Identity(3, 3));
  const std::vector<Vector> us{vec({1.0, 0.0})};
  const auto lin = linearize_process(uni, rollout(uni, vec({0.0, 0.0, 0.0}), us), us);
  EXPECT_EQ(lin.a[0](0, 2), 0.0);
  EXPECT_NEAR(lin.a[0](1, 2), 0.1, 1e-15);
  EXPECT_NEAR(lin.b[0](0, 0), 0.1, 1e-15);
  EXPECT_EQ(lin.b[0](1, 0), 0.0);
  EXPECT_EQ(lin.b[0](2, 0), 0.0);
  // f(x, u) = A x + B u + fp reproduces the nonlinear step at the nominal.
  const Vector x0 = lin.nominal_states[0];
  EXPECT_LT((lin.a[0] * x0 + lin.b[0] * us[0] + lin.fp[0] - lin.nominal_states[1]).norm(), 1e-15);
}

TEST(Linearization, NonFiniteReportsStep) {
  CallbackProcess cb(1, 1, Matrix::Identity(1, 1), [](const Vector& x, const Vector& u, const Vector& w) {
    Vector y(1);
    y << (x(0) > 1.5 ? std::sqrt(-1.0) : x(0) + u(0)) + w(0);
    return y;
  });
  const std::vector<Vector> us{vec({1.0}), vec({1.0}), vec({1.0})};
  std::vector<Vector> xs{vec({0.0}), vec({1.0}), vec({2.0}), vec({3.0})};
  try {
    linearize_process(cb, xs, us);
    FAIL() << "expected LinearizationError";
  } catch (const LinearizationError& e) {
    EXPECT_EQ(e.step(), 2);
  }
}

TEST(Linearization, RejectsShortNominal) {
  const auto p = holonomic2();
  EXPECT_THROW(linearize_process(p, {vec({0.0, 0.0})}, {}), ConfigError);
}

TEST(Observation, ConstructorValidation) {
  EXPECT_THROW(RangeObservation(2, {}), ConfigError);
  EXPECT_THROW(RangeObservation(2, {vec({1.0, 2.0, 3.0})}), ConfigError);
  EXPECT_THROW(BearingObservation(2, {vec({0.0, 0.0})}), ConfigError);
  EXPECT_THROW(LightDarkObservation(2, 1.0, 0.0), ConfigError);
  EXPECT_THROW(UnicycleProcess(0.0, Matrix::Identity(3, 3)), ConfigError);
}

TEST(Observation, LightDarkWeightingAndFloor) {
  LightDarkObservation ld(2, 1.0, 0.1);
  EXPECT_LT((ld.weighting(vec({2.0, 0.0})) - Matrix::Identity(2, 2) / 5.0).norm(), 1e-15);
  EXPECT_LT((ld.weighting(vec({-3.0, 0.0})) - Matrix::Identity(2, 2) / 0.1).norm(), 1e-12);
  EXPECT_EQ(ld.weight_trace_gradient(vec({-3.0, 0.0}), Matrix::Identity(2, 2)), Vector::Zero(2));
}
