#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace crn {

/// Dense 64-bit matrix, row-major. Biases are stored as n x 1 matrices so
/// every learnable quantity shares one type.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vector sigmoid(const Vector& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

inline Vector tanh(const Vector& x) {
  return x.unaryExpr([](double v) { return std::tanh(v); });
}

/// Numerically stable softmax (max-subtraction). Throws DimensionError on
/// empty input and NumericError on a non-finite entry.
Vector stable_softmax(std::span<const double> v);
inline Vector stable_softmax(const Vector& v) {
  return stable_softmax(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

bool all_finite(const Matrix& m);

/// A named reference to one learnable matrix.
struct ParamRef {
  std::string name;
  Matrix* value;
};

struct ConstParamRef {
  std::string name;
  const Matrix* value;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step = 0;
};

/// Bias-corrected Adam update, applied in place. Moments are lazily sized
/// on the first call; shape disagreement throws DimensionError.
void adam_step(std::span<const ParamRef> params, std::span<const ConstParamRef> grads,
               AdamState& state);

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// A parameter under test: its live value (perturbed in place, then restored)
/// and the analytic gradient to compare against.
struct GradCheckParam {
  std::string name;
  Matrix* value;
  const Matrix* analytic;
};

/// Compares analytic gradients against central differences
/// (f(p+h) - f(p-h)) / 2h per coordinate. Relative error uses the
/// denominator max(|analytic|, |numeric|, 1e-8).
GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  std::span<const GradCheckParam> params, double h,
                                  double tolerance);

}  // namespace crn
