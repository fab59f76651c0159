#include "crn/numerics.hpp"

#include <algorithm>
#include <limits>

#include "crn/errors.hpp"

namespace crn {

Vector stable_softmax(std::span<const double> v) {
  if (v.empty()) throw DimensionError("softmax of an empty vector");
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError("softmax input contains a non-finite entry");
    hi = std::max(hi, x);
  }
  Vector out(static_cast<Eigen::Index>(v.size()));
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = std::exp(v[i] - hi);
    total += out[static_cast<Eigen::Index>(i)];
  }
  return out / total;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

void adam_step(std::span<const ParamRef> params, std::span<const ConstParamRef> grads,
               AdamState& state) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
      state.second_moment.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam: moment count does not match parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& p = *params[i].value;
    const Matrix& g = *grads[i].value;
    if (p.rows() != g.rows() || p.cols() != g.cols() ||
        state.first_moment[i].rows() != p.rows() || state.first_moment[i].cols() != p.cols()) {
      throw DimensionError("adam: shape mismatch for parameter '" + params[i].name + "'");
    }
  }

  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i].value;
    const Matrix& g = *grads[i].value;
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    const double* mp = m.data();
    const double* vp = v.data();
    double* pp = p.data();
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double m_hat = mp[k] / correction1;
      const double v_hat = vp[k] / correction2;
      pp[k] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  std::span<const GradCheckParam> params, double h,
                                  double tolerance) {
  if (!(h > 0.0)) throw RangeError("finite_diff_check: perturbation must be positive");
  const double base = loss();
  const double again = loss();
  if (base != again) {
    throw DeterminismError("finite_diff_check: loss evaluated twice at the same point differs");
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  for (const auto& param : params) {
    if (param.value->rows() != param.analytic->rows() ||
        param.value->cols() != param.analytic->cols()) {
      throw DimensionError("finite_diff_check: analytic gradient shape differs for '" +
                           param.name + "'");
    }
    GradCheckEntry entry;
    entry.name = param.name;
    double* data = param.value->data();
    const double* analytic = param.analytic->data();
    for (Eigen::Index k = 0; k < param.value->size(); ++k) {
      const double saved = data[k];
      data[k] = saved + h;
      const double up = loss();
      data[k] = saved - h;
      const double down = loss();
      data[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic[k] - numeric) / denom;
      if (k == 0 || rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = static_cast<std::size_t>(k);
        entry.analytic = analytic[k];
        entry.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

}  // namespace crn
