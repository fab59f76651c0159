#pragma once

#include <string>
#include <vector>

#include "crn/numerics.hpp"

namespace crn {

class Rng;

/// Training mode uses batch statistics in batch normalization; inference
/// mode uses the frozen running statistics, making every sample independent.
enum class Mode { Train, Infer };

/// Non-learnable state saved with the model (batch-norm running stats).
struct BufferRef {
  std::string name;
  Vector* value;
};

// Batched layers take inputs as (features x batch): one column per sample.

struct Affine {
  Matrix weight;  // out x in
  Matrix bias;    // out x 1

  static Affine zeros(int in, int out);
  static Affine random(int in, int out, Rng& rng);
  int in() const { return static_cast<int>(weight.cols()); }
  int out() const { return static_cast<int>(weight.rows()); }

  Matrix forward(const Matrix& x) const;
  /// Accumulates parameter gradients into `grad`; returns d loss / d x.
  Matrix backward(const Matrix& x, const Matrix& dy, Affine& grad) const;
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

struct BatchNorm {
  static constexpr double kMomentum = 0.1;
  static constexpr double kEpsilon = 1e-5;

  Matrix gamma;  // n x 1
  Matrix beta;   // n x 1
  Vector running_mean;
  Vector running_var;

  static BatchNorm identity(int n);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
  void collect_buffers(const std::string& prefix, std::vector<BufferRef>& out);
};

struct BatchNormCache {
  Mode mode = Mode::Infer;
  Matrix x_hat;
  Vector inv_std;
  Vector batch_mean;
  Vector batch_var;
};

Matrix batchnorm_forward(const BatchNorm& bn, const Matrix& x, Mode mode, BatchNormCache& cache);
Matrix batchnorm_backward(const BatchNorm& bn, const BatchNormCache& cache, const Matrix& dy,
                          BatchNorm& grad);
/// Folds one training batch's statistics into the running estimates.
void update_running_stats(BatchNorm& bn, const BatchNormCache& cache, Eigen::Index batch);

enum class OutputActivation { Identity, Tanh };

/// Three affine layers; the two hidden layers are affine -> ReLU -> BN.
struct Mlp {
  Affine l1, l2, l3;
  BatchNorm bn1, bn2;
  OutputActivation output = OutputActivation::Identity;

  static Mlp random(int in, int hidden, int out, OutputActivation act, Rng& rng);
  int in() const { return l1.in(); }
  int out() const { return l3.out(); }
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
  void collect_buffers(const std::string& prefix, std::vector<BufferRef>& out);
};

struct MlpCache {
  Matrix x;
  Matrix pre1, act1, pre2, act2, hidden2;
  Matrix hidden1;
  BatchNormCache bn1, bn2;
  Matrix output;
};

Matrix mlp_forward(const Mlp& mlp, const Matrix& x, Mode mode, MlpCache& cache);
Matrix mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& dy, Mlp& grad);
void update_running_stats(Mlp& mlp, const MlpCache& cache);

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }
inline Matrix relu_backward(const Matrix& pre, const Matrix& dy) {
  return (pre.array() > 0.0).select(dy, 0.0);
}

}  // namespace crn
