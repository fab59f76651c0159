#pragma once

#include <vector>

#include "crn/numerics.hpp"

namespace crn {

class Rng;

/// Bias-free GRU used by the recurrent baseline:
///   z = sigma(W_z x + U_z h), r = sigma(W_r x + U_r h),
///   c = tanh(W_h x + U_h (r o h)), h' = (1 - z) o h + z o c.
struct GruCell {
  Matrix w_z, w_r, w_h;  // hidden x input
  Matrix u_z, u_r, u_h;  // hidden x hidden

  static GruCell zeros(int n_in, int n_hidden);
  static GruCell random(int n_in, int n_hidden, Rng& rng);
  int n_in() const { return static_cast<int>(w_z.cols()); }
  int n_hidden() const { return static_cast<int>(w_z.rows()); }

  std::vector<ParamRef> parameters(const std::string& prefix = "gru.");
  std::vector<ConstParamRef> parameters(const std::string& prefix = "gru.") const;
};

struct GruCache {
  Vector input, prev, z, r, candidate;
};

Vector gru_step(const GruCell& cell, const Vector& input, const Vector& prev, GruCache& cache);

struct GruStepGrads {
  Vector input;
  Vector prev;
};

GruStepGrads gru_backward(const GruCell& cell, const GruCache& cache, const Vector& grad_next,
                          GruCell& grad_cell);

struct GruBatchCache {
  Matrix input, prev, z, r, candidate;
};

/// Column-batched gru_step.
Matrix gru_step_batch(const GruCell& cell, const Matrix& input, const Matrix& prev,
                      GruBatchCache* cache);

struct GruBatchGrads {
  Matrix input;
  Matrix prev;
};

GruBatchGrads gru_backward_batch(const GruCell& cell, const GruBatchCache& cache,
                                 const Matrix& grad_next, GruCell& grad_cell);

}  // namespace crn
