#pragma once

#include "crn/domain.hpp"
#include "crn/model.hpp"

namespace crn {

/// r_theta(C_t, a) in (0, 1), inference mode.
double predict_reward(const CrnModel& model, const ClientTuple& tuple, ActionId action);

/// Reward of `action` for an already encoded state s_t.
double score_action(const CrnModel& model, const Vector& state, ActionId action);

}  // namespace crn
