#pragma once

#include <utility>
#include <vector>

#include "crn/numerics.hpp"

namespace crn {

class Rng;

/// Coupled Recurrent Unit parameters. Action-pathway matrices are n_a x n_a,
/// response-pathway matrices n_o x n_o; `u_i` (n_a x n_o) lets the previous
/// response memory drive the interaction gate and `i_o` (n_o x n_a) injects
/// the gated action candidate into the response candidate. No biases.
struct CruCell {
  Matrix w_za, w_ra, w_i, w_a, u_za, u_ra, u_a;
  Matrix w_zo, w_ro, w_o, u_zo, u_ro, u_o;
  Matrix u_i, i_o;

  static CruCell zeros(int n_a, int n_o);
  /// uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) per matrix.
  static CruCell random(int n_a, int n_o, Rng& rng);

  int n_a() const { return static_cast<int>(w_za.rows()); }
  int n_o() const { return static_cast<int>(w_zo.rows()); }

  /// Fixed order used by checkpoints and gradient checks.
  std::vector<ParamRef> parameters(const std::string& prefix = "cru.");
  std::vector<ConstParamRef> parameters(const std::string& prefix = "cru.") const;
};

/// Paired memories: a* (action history) and o* (response history).
struct CruState {
  Vector action;
  Vector response;

  static CruState zeros(int n_a, int n_o) {
    return {Vector::Zero(n_a), Vector::Zero(n_o)};
  }
};

/// Everything one forward step needs for its backward pass.
struct StepCache {
  Vector action_in;
  Vector response_in;
  CruState prev;
  Vector z_a, r_a, z_o, r_o, r_i;
  Vector action_candidate;    // \hat a_{t-1}
  Vector response_candidate;  // \hat o_t
};

struct CruStepResult {
  CruState next;
  StepCache cache;
};

CruStepResult cru_step(const CruCell& cell, const Vector& action_in, const Vector& response_in,
                       const CruState& prev);

struct CruStepGrads {
  Vector action_in;
  Vector response_in;
  CruState prev;
};

/// Backward through one step. Parameter gradients are added into `grad_cell`
/// so repeated calls over an unroll accumulate.
CruStepGrads cru_backward(const CruCell& cell, const StepCache& cache, const CruState& grad_next,
                          CruCell& grad_cell);

struct CruUnroll {
  CruState final_state;
  std::vector<StepCache> caches;
};

/// Column-batched form of cru_step: each column is an independent sample.
struct CruBatchCache {
  Matrix action_in, response_in, prev_action, prev_response;
  Matrix z_a, r_a, z_o, r_o, r_i;
  Matrix action_candidate, response_candidate;
};

struct CruBatchState {
  Matrix action;    // n_a x k
  Matrix response;  // n_o x k
};

CruBatchState cru_step_batch(const CruCell& cell, const Matrix& action_in, const Matrix& response_in,
                             const CruBatchState& prev, CruBatchCache* cache);

struct CruBatchGrads {
  Matrix action_in, response_in;
  CruBatchState prev;
};

CruBatchGrads cru_backward_batch(const CruCell& cell, const CruBatchCache& cache,
                                 const CruBatchState& grad_next, CruCell& grad_cell);

/// Left fold of cru_step over (action_in, response_in) pairs.
CruUnroll unroll(const CruCell& cell, const std::vector<std::pair<Vector, Vector>>& inputs,
                 const CruState& init);

}  // namespace crn
