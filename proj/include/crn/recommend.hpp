#pragma once

#include <string>
#include <utility>
#include <vector>

#include "crn/domain.hpp"
#include "crn/model.hpp"

namespace crn {

struct Recommendation {
  std::string client_id;
  int t = 0;
  /// (action, predicted reward), best first.
  std::vector<std::pair<ActionId, double>> ranked;
};

/// The k candidates with the highest predicted reward, ties broken by the
/// smaller action id. Duplicate candidates are scored once. ConstraintError
/// on an empty candidate set, RangeError for k < 1 or an unknown action.
Recommendation recommend_top_k(const CrnModel& model, const ClientTuple& tuple,
                               const std::vector<ActionId>& candidates, int k,
                               const std::string& client_id = {});

}  // namespace crn
