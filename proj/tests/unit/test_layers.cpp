#include <doctest.h>

#include <cmath>

#include "crn/layers.hpp"
#include "crn/rng.hpp"

using namespace crn;

namespace {

Matrix random_matrix(int r, int c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

// Fixed random projection so the loss mixes every output.
double project(const Matrix& y, const Matrix& probe) { return y.cwiseProduct(probe).sum(); }

}  // namespace

TEST_CASE("affine backward matches finite differences") {
  Rng rng(1);
  Affine a = Affine::random(5, 3, rng);
  a.bias = random_matrix(3, 1, rng);
  const Matrix x = random_matrix(5, 4, rng);
  const Matrix probe = random_matrix(3, 4, rng);
  Affine g = Affine::zeros(5, 3);
  const Matrix dx = a.backward(x, probe, g);

  std::vector<GradCheckParam> params{{"weight", &a.weight, &g.weight}, {"bias", &a.bias, &g.bias}};
  const auto rep = finite_diff_check([&] { return project(a.forward(x), probe); }, params, 1e-5, 1e-6);
  CHECK(rep.pass);

  Matrix xv = x;
  std::vector<GradCheckParam> input{{"x", &xv, &dx}};
  CHECK(finite_diff_check([&] { return project(a.forward(xv), probe); }, input, 1e-5, 1e-6).pass);
}

TEST_CASE("batch norm train mode normalises each feature over the batch") {
  Rng rng(2);
  BatchNorm bn = BatchNorm::identity(3);
  const Matrix x = random_matrix(3, 16, rng, 5.0);
  BatchNormCache c;
  const Matrix y = batchnorm_forward(bn, x, Mode::Train, c);
  for (int f = 0; f < 3; ++f) {
    const double mean = y.row(f).mean();
    const double var = (y.row(f).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-12);
    // Biased batch variance plus epsilon in the denominator.
    const double raw_var = (x.row(f).array() - x.row(f).mean()).square().mean();
    CHECK(var == doctest::Approx(raw_var / (raw_var + BatchNorm::kEpsilon)).epsilon(1e-12));
  }
}

TEST_CASE("batch norm running statistics use momentum 0.1 and unbiased variance") {
  BatchNorm bn = BatchNorm::identity(1);
  Matrix x(1, 4);
  x << 1.0, 2.0, 3.0, 6.0;
  BatchNormCache c;
  batchnorm_forward(bn, x, Mode::Train, c);
  update_running_stats(bn, c, 4);
  // mean 3, unbiased variance (4 + 1 + 0 + 9) / 3.
  CHECK(bn.running_mean[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 3.0));
  CHECK(bn.running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 14.0 / 3.0));
}

TEST_CASE("batch norm inference uses running statistics per sample") {
  BatchNorm bn = BatchNorm::identity(2);
  bn.running_mean << 1.0, -1.0;
  bn.running_var << 4.0, 0.25;
  bn.gamma << 2.0, 1.0;
  bn.beta << 0.5, 0.0;
  Matrix x(2, 1);
  x << 3.0, 0.0;
  BatchNormCache c;
  const Matrix y = batchnorm_forward(bn, x, Mode::Infer, c);
  CHECK(y(0, 0) == doctest::Approx(2.0 * 2.0 / std::sqrt(4.0 + 1e-5) + 0.5));
  CHECK(y(1, 0) == doctest::Approx(1.0 / std::sqrt(0.25 + 1e-5)));
}

TEST_CASE("batch norm backward matches finite differences in both modes") {
  for (Mode mode : {Mode::Train, Mode::Infer}) {
    Rng rng(mode == Mode::Train ? 3 : 4);
    BatchNorm bn = BatchNorm::identity(4);
    bn.gamma = random_matrix(4, 1, rng, 2.0);
    bn.beta = random_matrix(4, 1, rng);
    bn.running_mean = random_matrix(4, 1, rng);
    bn.running_var = (random_matrix(4, 1, rng).array().abs() + 0.5).matrix();
    Matrix x = random_matrix(4, 6, rng, 2.0);
    const Matrix probe = random_matrix(4, 6, rng);
    BatchNormCache c;
    batchnorm_forward(bn, x, mode, c);
    BatchNorm g = BatchNorm::identity(4);
    g.gamma.setZero();
    g.beta.setZero();
    const Matrix dx = batchnorm_backward(bn, c, probe, g);
    auto loss = [&] {
      BatchNormCache tmp;
      return project(batchnorm_forward(bn, x, mode, tmp), probe);
    };
    std::vector<GradCheckParam> params{{"gamma", &bn.gamma, &g.gamma}, {"beta", &bn.beta, &g.beta}, {"x", &x, &dx}};
    const auto rep = finite_diff_check(loss, params, 1e-5, 1e-6);
    CHECK(rep.pass);
  }
}

TEST_CASE("mlp backward matches finite differences in train mode") {
  Rng rng(5);
  Mlp mlp = Mlp::random(3, 6, 2, OutputActivation::Tanh, rng);
  mlp.bn1.gamma = random_matrix(6, 1, rng, 2.0);
  mlp.bn2.beta = random_matrix(6, 1, rng);
  Matrix x = random_matrix(3, 8, rng, 2.0);
  const Matrix probe = random_matrix(2, 8, rng);
  MlpCache c;
  mlp_forward(mlp, x, Mode::Train, c);
  Mlp g = mlp;
  std::vector<ParamRef> gp;
  g.collect("", gp);
  for (auto& p : gp) p.value->setZero();
  const Matrix dx = mlp_backward(mlp, c, probe, g);

  std::vector<ParamRef> vp;
  mlp.collect("", vp);
  std::vector<GradCheckParam> params;
  for (std::size_t i = 0; i < vp.size(); ++i) params.push_back({vp[i].name, vp[i].value, gp[i].value});
  params.push_back({"x", &x, &dx});
  auto loss = [&] {
    MlpCache tmp;
    return project(mlp_forward(mlp, x, Mode::Train, tmp), probe);
  };
  const auto rep = finite_diff_check(loss, params, 1e-5, 1e-5);
  for (const auto& e : rep.entries) INFO(e.name << " " << e.max_rel_error);
  CHECK(rep.pass);
}

TEST_CASE("relu backward gates on the pre-activation sign") {
  Matrix pre(1, 3);
  pre << -1.0, 0.0, 2.0;
  Matrix dy(1, 3);
  dy << 5.0, 5.0, 5.0;
  const Matrix d = relu_backward(pre, dy);
  CHECK(d(0, 0) == 0.0);
  CHECK(d(0, 1) == 0.0);
  CHECK(d(0, 2) == 5.0);
}
