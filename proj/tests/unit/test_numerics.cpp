#include <doctest.h>

#include <cmath>
#include <vector>

#include "crn/errors.hpp"
#include "crn/numerics.hpp"
#include "crn/rng.hpp"

using namespace crn;

// Reference values from mpmath at 30 digits.
TEST_CASE("softmax matches high-precision reference") {
  const std::vector<double> big{1000.0, 1001.0, 1002.0};
  const Vector p = stable_softmax(big);
  CHECK(p[0] == doctest::Approx(0.0900305731703804580).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.2447284710547976525).epsilon(1e-14));
  CHECK(p[2] == doctest::Approx(0.6652409557748218895).epsilon(1e-14));
}

TEST_CASE("softmax sums to one and ignores shifts") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.index(12));
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.uniform(-50, 50);
    const Vector p = stable_softmax(v);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    const Vector shifted = stable_softmax(Vector(v.array() + rng.uniform(-300, 300)));
    CHECK((p - shifted).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("softmax rejects empty and non-finite input") {
  CHECK_THROWS_AS(stable_softmax(std::vector<double>{}), DimensionError);
  CHECK_THROWS_AS(stable_softmax(std::vector<double>{1.0, NAN}), NumericError);
  CHECK_THROWS_AS(stable_softmax(std::vector<double>{INFINITY}), NumericError);
}

TEST_CASE("adam first step moves each coordinate by the learning rate") {
  // With bias correction, m_hat = g and v_hat = g^2 on step one.
  Matrix p(1, 3);
  p << 1.0, -2.0, 0.5;
  Matrix g(1, 3);
  g << 0.3, -4.0, 1e-3;
  std::vector<ParamRef> params{{"p", &p}};
  std::vector<ConstParamRef> grads{{"p", &g}};
  AdamState st;
  st.config.learning_rate = 0.01;
  adam_step(params, grads, st);
  for (int k = 0; k < 3; ++k) {
    const double expect = std::vector<double>{1.0, -2.0, 0.5}[k] -
                          0.01 * g(0, k) / (std::abs(g(0, k)) + st.config.epsilon);
    CHECK(p(0, k) == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("adam matches a hand-rolled two-step update") {
  double x = 0.7, m = 0, v = 0;
  Matrix p(1, 1);
  p(0, 0) = x;
  Matrix g(1, 1);
  std::vector<ParamRef> params{{"p", &p}};
  std::vector<ConstParamRef> grads{{"p", &g}};
  AdamState st;
  for (int t = 1; t <= 2; ++t) {
    const double grad = 2 * x - 0.1 * t;
    g(0, 0) = grad;
    adam_step(params, grads, st);
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    x -= 1e-3 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    CHECK(p(0, 0) == doctest::Approx(x).epsilon(1e-14));
  }
}

TEST_CASE("adam rejects mismatched shapes") {
  Matrix p(2, 2), g(2, 3);
  p.setZero();
  g.setZero();
  std::vector<ParamRef> params{{"p", &p}};
  std::vector<ConstParamRef> grads{{"p", &g}};
  AdamState st;
  CHECK_THROWS_AS(adam_step(params, grads, st), DimensionError);
}

TEST_CASE("finite difference check accepts exact and rejects scaled gradients") {
  // f(W) = sum(tanh(W x)^2) with an analytic gradient.
  Rng rng(11);
  Matrix w(3, 4);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1, 1);
  Vector x(4);
  for (int i = 0; i < 4; ++i) x[i] = rng.uniform(-1, 1);
  auto loss = [&] { return (w * x).array().tanh().square().sum(); };
  const Vector y = (w * x).array().tanh();
  Matrix grad = (2.0 * y.array() * (1.0 - y.array().square())).matrix() * x.transpose();

  std::vector<GradCheckParam> params{{"w", &w, &grad}};
  const auto good = finite_diff_check(loss, params, 1e-5, 1e-4);
  CHECK(good.pass);
  CHECK(good.max_rel_error < 1e-7);

  Matrix off = grad * 1.01;
  std::vector<GradCheckParam> bad_params{{"w", &w, &off}};
  const auto bad = finite_diff_check(loss, bad_params, 1e-5, 1e-4);
  CHECK_FALSE(bad.pass);
  CHECK(bad.max_rel_error == doctest::Approx(0.01 / 1.01).epsilon(1e-3));
}

TEST_CASE("finite difference check restores parameters") {
  Matrix w(2, 2);
  w << 0.1, 0.2, 0.3, 0.4;
  const Matrix before = w;
  Matrix grad = 2 * w;
  auto loss = [&] { return w.squaredNorm(); };
  std::vector<GradCheckParam> params{{"w", &w, &grad}};
  finite_diff_check(loss, params, 1e-5, 1e-4);
  CHECK(w == before);
}

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a(5, 1), b(5, 1), c(5, 2);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    differs |= x != c.next();
  }
  CHECK(differs);
}

TEST_CASE("rng uniform and normal moments") {
  Rng rng(9);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  int outside = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    outside += !(u >= 0.0 && u < 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(outside == 0);
  CHECK(std::abs(su / n - 0.5) < 4 * std::sqrt(1.0 / 12 / n));
  CHECK(std::abs(sn / n) < 4 / std::sqrt(double(n)));
  CHECK(std::abs(sn2 / n - 1.0) < 4 * std::sqrt(2.0 / n));
}
