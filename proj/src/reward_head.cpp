#include "crn/reward_head.hpp"

#include "crn/encoder.hpp"
#include "crn/errors.hpp"
#include "model_internal.hpp"

namespace crn {

double score_action(const CrnModel& model, const Vector& state, ActionId action) {
  if (state.size() != model.dims().n_s) {
    throw DimensionError("score_action: state width differs from n_s");
  }
  Matrix s(state.size(), 1);
  s.col(0) = state;
  HeadCache cache;
  const ActionId actions[1] = {action};
  return head_forward(model, s, actions, Mode::Infer, cache)(0, 0);
}

double predict_reward(const CrnModel& model, const ClientTuple& tuple, ActionId action) {
  if (action < 1 || action > model.config.schema.n_actions) {
    throw RangeError("predict_reward: action " + std::to_string(action) + " outside [1, " +
                     std::to_string(model.config.schema.n_actions) + "]");
  }
  return score_action(model, encode_client(model, tuple).s, action);
}

}  // namespace crn
