#pragma once

// Shared between model.cpp, encoder.cpp and reward_head.cpp.

#include <span>
#include <vector>

#include "crn/cru.hpp"
#include "crn/gru.hpp"
#include "crn/layers.hpp"
#include "crn/model.hpp"

namespace crn {

/// Batched unroll record. Columns are sorted by sequence length (longest
/// first) so the samples still running at step j are the first active[j].
struct MemoryCache {
  std::vector<Eigen::Index> order;          // sorted position -> batch column
  std::vector<Eigen::Index> active;
  std::vector<std::vector<ActionId>> prev;  // per step, a_{j} fed at step j+1
  std::vector<Matrix> multi_hot;            // per step, n_r x active
  std::vector<CruBatchCache> cru;
  std::vector<GruBatchCache> gru;
};

struct EncodeCache {
  Mode mode = Mode::Infer;
  std::vector<const ClientTuple*> tuples;
  MlpCache demographic;
  Matrix initial;  // n_o x B
  MemoryCache unroll;
  Matrix memory;      // memory_width x B
  Matrix explicit_in; // n_x x B
  Matrix fusion_in;   // (n_imp + n_exp) x B
  MlpCache fusion;
  Matrix states;
};

struct HeadCache {
  Mode mode = Mode::Infer;
  std::vector<ActionId> actions;
  std::array<Matrix, 4> z;  // z[0] = [s; a], z[k+1] = z[k] + BN(ReLU(W z[k] + b))
  std::array<Matrix, 3> pre;
  std::array<Matrix, 3> act;
  std::array<BatchNormCache, 3> norm;
  Matrix probs;  // 1 x B
};

Matrix encode_forward(const CrnModel& model, std::span<const ClientTuple* const> tuples, Mode mode,
                      EncodeCache& cache);
void encode_backward(const CrnModel& model, const EncodeCache& cache, const Matrix& d_states,
                     CrnModel& grad);

Matrix gather_embeddings(const EncoderParams& e, std::span<const ActionId> ids);
Matrix multi_hot_matrix(std::span<const std::vector<int>* const> sets, int n_r);

/// Terminal memories (memory_width x B) given the initial response memories.
Matrix run_memories(const CrnModel& model, std::span<const ClientTuple* const> tuples,
                    const Matrix& initial, MemoryCache& keep);
/// Returns d loss / d initial response memory and accumulates recurrent,
/// embedding and response-projection gradients.
Matrix backward_memories(const CrnModel& model, const MemoryCache& cache, const Matrix& d_memory,
                         CrnModel& grad);

/// [s_imp; s_exp] -> fusion MLP. Inputs are memory_width x B and n_x x B.
Matrix fuse_states(const CrnModel& model, const Matrix& memory, const Matrix& explicit_in,
                   Mode mode, EncodeCache& cache);

Matrix head_forward(const CrnModel& model, const Matrix& states, std::span<const ActionId> actions,
                    Mode mode, HeadCache& cache);
/// Returns d loss / d states and accumulates head + embedding gradients.
Matrix head_backward(const CrnModel& model, const HeadCache& cache, const Vector& d_predictions,
                     CrnModel& grad);

Matrix demographics_matrix(const CrnModel& model, std::span<const ClientTuple* const> tuples);

}  // namespace crn
