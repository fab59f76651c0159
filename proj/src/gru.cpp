#include "crn/gru.hpp"

#include <cmath>

#include "crn/errors.hpp"
#include "crn/rng.hpp"

namespace crn {

GruCell GruCell::zeros(int n_in, int n_hidden) {
  const Matrix hx = Matrix::Zero(n_hidden, n_in);
  const Matrix hh = Matrix::Zero(n_hidden, n_hidden);
  return GruCell{hx, hx, hx, hh, hh, hh};
}

GruCell GruCell::random(int n_in, int n_hidden, Rng& rng) {
  GruCell c = zeros(n_in, n_hidden);
  for (auto& p : c.parameters()) {
    const double bound = std::sqrt(1.0 / static_cast<double>(p.value->cols()));
    for (Eigen::Index k = 0; k < p.value->size(); ++k) {
      p.value->data()[k] = rng.uniform(-bound, bound);
    }
  }
  return c;
}

std::vector<ParamRef> GruCell::parameters(const std::string& prefix) {
  return {{prefix + "w_z", &w_z}, {prefix + "w_r", &w_r}, {prefix + "w_h", &w_h},
          {prefix + "u_z", &u_z}, {prefix + "u_r", &u_r}, {prefix + "u_h", &u_h}};
}

std::vector<ConstParamRef> GruCell::parameters(const std::string& prefix) const {
  std::vector<ConstParamRef> out;
  for (auto& p : const_cast<GruCell*>(this)->parameters(prefix)) out.push_back({p.name, p.value});
  return out;
}

Vector gru_step(const GruCell& cell, const Vector& input, const Vector& prev, GruCache& c) {
  if (input.size() != cell.n_in() || prev.size() != cell.n_hidden()) {
    throw DimensionError("gru_step: input or state width does not match the cell");
  }
  c.input = input;
  c.prev = prev;
  c.z = sigmoid(cell.w_z * input + cell.u_z * prev);
  c.r = sigmoid(cell.w_r * input + cell.u_r * prev);
  c.candidate = tanh(cell.w_h * input + cell.u_h * c.r.cwiseProduct(prev));
  return (1.0 - c.z.array()).matrix().cwiseProduct(prev) + c.z.cwiseProduct(c.candidate);
}

GruStepGrads gru_backward(const GruCell& cell, const GruCache& c, const Vector& dh,
                          GruCell& g) {
  if (c.z.size() != cell.n_hidden() || dh.size() != cell.n_hidden()) {
    throw ConsistencyError("gru_backward: cache or gradient does not match the cell");
  }
  GruStepGrads out;
  out.prev = dh.cwiseProduct((1.0 - c.z.array()).matrix());
  const Vector dz = dh.cwiseProduct(c.candidate - c.prev);
  const Vector dc_pre =
      dh.cwiseProduct(c.z).cwiseProduct((1.0 - c.candidate.array().square()).matrix());
  const Vector rh = c.r.cwiseProduct(c.prev);
  g.w_h.noalias() += dc_pre * c.input.transpose();
  g.u_h.noalias() += dc_pre * rh.transpose();
  out.input = cell.w_h.transpose() * dc_pre;
  const Vector d_rh = cell.u_h.transpose() * dc_pre;
  out.prev += d_rh.cwiseProduct(c.r);
  const Vector dr = d_rh.cwiseProduct(c.prev);

  const Vector pz = dz.cwiseProduct(c.z.cwiseProduct((1.0 - c.z.array()).matrix()));
  const Vector pr = dr.cwiseProduct(c.r.cwiseProduct((1.0 - c.r.array()).matrix()));
  g.w_z.noalias() += pz * c.input.transpose();
  g.u_z.noalias() += pz * c.prev.transpose();
  g.w_r.noalias() += pr * c.input.transpose();
  g.u_r.noalias() += pr * c.prev.transpose();
  out.input.noalias() += cell.w_z.transpose() * pz + cell.w_r.transpose() * pr;
  out.prev.noalias() += cell.u_z.transpose() * pz + cell.u_r.transpose() * pr;
  return out;
}

Matrix gru_step_batch(const GruCell& cell, const Matrix& input, const Matrix& prev,
                      GruBatchCache* cache) {
  if (input.rows() != cell.n_in() || prev.rows() != cell.n_hidden() || input.cols() != prev.cols()) {
    throw DimensionError("gru_step_batch: input or state shape does not match the cell");
  }
  GruBatchCache local;
  GruBatchCache& c = cache ? *cache : local;
  c.z = (cell.w_z * input + cell.u_z * prev).unaryExpr([](double v) { return sigmoid(v); });
  c.r = (cell.w_r * input + cell.u_r * prev).unaryExpr([](double v) { return sigmoid(v); });
  c.candidate = (cell.w_h * input + cell.u_h * c.r.cwiseProduct(prev))
                    .unaryExpr([](double v) { return std::tanh(v); });
  Matrix next = ((1.0 - c.z.array()) * prev.array() + c.z.array() * c.candidate.array()).matrix();
  if (cache) {
    c.input = input;
    c.prev = prev;
  }
  return next;
}

GruBatchGrads gru_backward_batch(const GruCell& cell, const GruBatchCache& c, const Matrix& dh,
                                 GruCell& g) {
  if (c.z.rows() != cell.n_hidden() || dh.rows() != cell.n_hidden() || dh.cols() != c.z.cols()) {
    throw ConsistencyError("gru_backward_batch: cache or gradient does not match the cell");
  }
  GruBatchGrads out;
  out.prev = (dh.array() * (1.0 - c.z.array())).matrix();
  const Matrix dz = dh.cwiseProduct(c.candidate - c.prev);
  const Matrix dc_pre = (dh.array() * c.z.array() * (1.0 - c.candidate.array().square())).matrix();
  g.w_h.noalias() += dc_pre * c.input.transpose();
  g.u_h.noalias() += dc_pre * c.r.cwiseProduct(c.prev).transpose();
  out.input.noalias() = cell.w_h.transpose() * dc_pre;
  const Matrix d_rh = cell.u_h.transpose() * dc_pre;
  out.prev += d_rh.cwiseProduct(c.r);
  const Matrix dr = d_rh.cwiseProduct(c.prev);

  const Matrix pz = (dz.array() * c.z.array() * (1.0 - c.z.array())).matrix();
  const Matrix pr = (dr.array() * c.r.array() * (1.0 - c.r.array())).matrix();
  g.w_z.noalias() += pz * c.input.transpose();
  g.u_z.noalias() += pz * c.prev.transpose();
  g.w_r.noalias() += pr * c.input.transpose();
  g.u_r.noalias() += pr * c.prev.transpose();
  out.input.noalias() += cell.w_z.transpose() * pz;
  out.input.noalias() += cell.w_r.transpose() * pr;
  out.prev.noalias() += cell.u_z.transpose() * pz;
  out.prev.noalias() += cell.u_r.transpose() * pr;
  return out;
}

}  // namespace crn
