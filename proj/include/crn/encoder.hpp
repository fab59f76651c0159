#pragma once

#include <string>
#include <vector>

#include "crn/domain.hpp"
#include "crn/model.hpp"

namespace crn {

struct StateVector {
  Vector s;
  std::string client_id;
  int t = 0;
};

/// Row `action` of the shared embedding table. RangeError outside [0, m].
Vector embed_action(const EncoderParams& params, ActionId action);

/// Multi-hot of the response set projected to n_o (no bias): the empty set
/// maps to zero.
Vector encode_responses(const EncoderParams& params, const std::vector<int>& responses);

/// Multi-hot indicator of a response set, width n_r.
Vector multi_hot(const std::vector<int>& responses, int n_r);

/// o*_0 from demographics (inference mode). SchemaError on a mismatch.
Vector init_memory(const CrnModel& model, const Demographics& demographics);

/// s_t for one tuple (inference mode).
StateVector encode_client(const CrnModel& model, const ClientTuple& tuple,
                          const std::string& client_id = {});

/// s_t for every t = 1..length of a record, reusing one unroll. Bit-identical
/// to calling encode_client on each prefix.
std::vector<Vector> encode_all_steps(const CrnModel& model, const ClientRecord& record);

}  // namespace crn
