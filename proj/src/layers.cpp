#include "crn/layers.hpp"

#include <cmath>

#include "crn/errors.hpp"
#include "crn/rng.hpp"

namespace crn {

Affine Affine::zeros(int in, int out) {
  return Affine{Matrix::Zero(out, in), Matrix::Zero(out, 1)};
}

Affine Affine::random(int in, int out, Rng& rng) {
  Affine a = zeros(in, out);
  const double bound = std::sqrt(1.0 / in);
  for (Eigen::Index k = 0; k < a.weight.size(); ++k) a.weight.data()[k] = rng.uniform(-bound, bound);
  return a;
}

Matrix Affine::forward(const Matrix& x) const {
  if (x.rows() != in()) {
    throw DimensionError("affine: input width " + std::to_string(x.rows()) + ", expected " +
                         std::to_string(in()));
  }
  Matrix y = weight * x;
  y.colwise() += bias.col(0);
  return y;
}

Matrix Affine::backward(const Matrix& x, const Matrix& dy, Affine& grad) const {
  grad.weight.noalias() += dy * x.transpose();
  grad.bias.col(0) += dy.rowwise().sum();
  return weight.transpose() * dy;
}

void Affine::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + "weight", &weight});
  out.push_back({prefix + "bias", &bias});
}

BatchNorm BatchNorm::identity(int n) {
  return BatchNorm{Matrix::Ones(n, 1), Matrix::Zero(n, 1), Vector::Zero(n), Vector::Ones(n)};
}

void BatchNorm::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + "gamma", &gamma});
  out.push_back({prefix + "beta", &beta});
}

void BatchNorm::collect_buffers(const std::string& prefix, std::vector<BufferRef>& out) {
  out.push_back({prefix + "running_mean", &running_mean});
  out.push_back({prefix + "running_var", &running_var});
}

Matrix batchnorm_forward(const BatchNorm& bn, const Matrix& x, Mode mode, BatchNormCache& c) {
  if (x.rows() != bn.gamma.rows()) throw DimensionError("batchnorm: feature width mismatch");
  c.mode = mode;
  if (mode == Mode::Train) {
    const double n = static_cast<double>(x.cols());
    c.batch_mean = x.rowwise().sum() / n;
    const Matrix centered = x.colwise() - c.batch_mean;
    c.batch_var = centered.array().square().rowwise().sum().matrix() / n;
    c.inv_std = (c.batch_var.array() + BatchNorm::kEpsilon).rsqrt().matrix();
    c.x_hat = c.inv_std.asDiagonal() * centered;
  } else {
    c.inv_std = (bn.running_var.array() + BatchNorm::kEpsilon).rsqrt().matrix();
    c.x_hat = c.inv_std.asDiagonal() * (x.colwise() - bn.running_mean);
  }
  Matrix y = bn.gamma.col(0).asDiagonal() * c.x_hat;
  y.colwise() += bn.beta.col(0);
  return y;
}

Matrix batchnorm_backward(const BatchNorm& bn, const BatchNormCache& c, const Matrix& dy,
                          BatchNorm& grad) {
  grad.gamma.col(0) += dy.cwiseProduct(c.x_hat).rowwise().sum();
  grad.beta.col(0) += dy.rowwise().sum();
  const Matrix dx_hat = bn.gamma.col(0).asDiagonal() * dy;
  if (c.mode == Mode::Infer) return c.inv_std.asDiagonal() * dx_hat;

  const double n = static_cast<double>(dy.cols());
  const Vector sum_dx_hat = dx_hat.rowwise().sum();
  const Vector sum_dx_hat_xhat = dx_hat.cwiseProduct(c.x_hat).rowwise().sum();
  Matrix dx = n * dx_hat;
  dx.colwise() -= sum_dx_hat;
  dx -= sum_dx_hat_xhat.asDiagonal() * c.x_hat;
  return (c.inv_std / n).asDiagonal() * dx;
}

void update_running_stats(BatchNorm& bn, const BatchNormCache& c, Eigen::Index batch) {
  if (c.mode != Mode::Train) return;
  const double m = BatchNorm::kMomentum;
  bn.running_mean = (1.0 - m) * bn.running_mean + m * c.batch_mean;
  if (batch > 1) {
    const double unbiased = static_cast<double>(batch) / static_cast<double>(batch - 1);
    bn.running_var = (1.0 - m) * bn.running_var + m * unbiased * c.batch_var;
  }
}

Mlp Mlp::random(int in, int hidden, int out, OutputActivation act, Rng& rng) {
  Mlp mlp;
  mlp.l1 = Affine::random(in, hidden, rng);
  mlp.l2 = Affine::random(hidden, hidden, rng);
  mlp.l3 = Affine::random(hidden, out, rng);
  mlp.bn1 = BatchNorm::identity(hidden);
  mlp.bn2 = BatchNorm::identity(hidden);
  mlp.output = act;
  return mlp;
}

void Mlp::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  l1.collect(prefix + "l1.", out);
  bn1.collect(prefix + "bn1.", out);
  l2.collect(prefix + "l2.", out);
  bn2.collect(prefix + "bn2.", out);
  l3.collect(prefix + "l3.", out);
}

void Mlp::collect_buffers(const std::string& prefix, std::vector<BufferRef>& out) {
  bn1.collect_buffers(prefix + "bn1.", out);
  bn2.collect_buffers(prefix + "bn2.", out);
}

Matrix mlp_forward(const Mlp& mlp, const Matrix& x, Mode mode, MlpCache& c) {
  c.x = x;
  c.pre1 = mlp.l1.forward(x);
  c.act1 = relu(c.pre1);
  c.hidden1 = batchnorm_forward(mlp.bn1, c.act1, mode, c.bn1);
  c.pre2 = mlp.l2.forward(c.hidden1);
  c.act2 = relu(c.pre2);
  c.hidden2 = batchnorm_forward(mlp.bn2, c.act2, mode, c.bn2);
  Matrix y = mlp.l3.forward(c.hidden2);
  if (mlp.output == OutputActivation::Tanh) y = y.array().tanh().matrix();
  c.output = y;
  return y;
}

Matrix mlp_backward(const Mlp& mlp, const MlpCache& c, const Matrix& dy, Mlp& g) {
  Matrix d = dy;
  if (mlp.output == OutputActivation::Tanh) {
    d = d.cwiseProduct((1.0 - c.output.array().square()).matrix());
  }
  d = mlp.l3.backward(c.hidden2, d, g.l3);
  d = batchnorm_backward(mlp.bn2, c.bn2, d, g.bn2);
  d = relu_backward(c.pre2, d);
  d = mlp.l2.backward(c.hidden1, d, g.l2);
  d = batchnorm_backward(mlp.bn1, c.bn1, d, g.bn1);
  d = relu_backward(c.pre1, d);
  return mlp.l1.backward(c.x, d, g.l1);
}

void update_running_stats(Mlp& mlp, const MlpCache& c) {
  update_running_stats(mlp.bn1, c.bn1, c.x.cols());
  update_running_stats(mlp.bn2, c.bn2, c.x.cols());
}

}  // namespace crn
