#include "crn/recommend.hpp"

#include <algorithm>

#include "crn/encoder.hpp"
#include "crn/errors.hpp"
#include "crn/reward_head.hpp"

namespace crn {

Recommendation recommend_top_k(const CrnModel& model, const ClientTuple& tuple,
                               const std::vector<ActionId>& candidates, int k,
                               const std::string& client_id) {
  if (candidates.empty()) throw ConstraintError("empty candidate set");
  if (k < 1) throw RangeError("k must be >= 1, got " + std::to_string(k));
  const int m = model.config.schema.n_actions;
  for (ActionId a : candidates) {
    if (a < 1 || a > m) {
      throw RangeError("candidate action " + std::to_string(a) + " outside [1, " + std::to_string(m) + "]");
    }
  }

  std::vector<ActionId> unique = candidates;
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());

  const StateVector state = encode_client(model, tuple, client_id);
  Recommendation rec;
  rec.client_id = client_id;
  rec.t = tuple.t();
  for (ActionId a : unique) rec.ranked.emplace_back(a, score_action(model, state.s, a));
  std::stable_sort(rec.ranked.begin(), rec.ranked.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  if (rec.ranked.size() > static_cast<std::size_t>(k)) rec.ranked.resize(static_cast<std::size_t>(k));
  return rec;
}

}  // namespace crn
