#include "crn/domain.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "crn/errors.hpp"

namespace crn {

int DemographicSchema::encoded_width() const {
  int width = numeric_count;
  for (int c : categorical_cardinalities) width += c;
  return width;
}

std::vector<std::string> validate_record(const ClientRecord& record, const DatasetSchema& schema) {
  std::vector<std::string> out;
  const std::string who = "client '" + record.id + "'";
  const auto& demo = record.demographics;
  const auto& ds = schema.demographics;
  if (demo.categorical.size() != ds.categorical_cardinalities.size()) {
    out.push_back(who + ": demographics.categorical has " +
                  std::to_string(demo.categorical.size()) + " fields, schema declares " +
                  std::to_string(ds.categorical_cardinalities.size()));
  } else {
    for (std::size_t f = 0; f < demo.categorical.size(); ++f) {
      if (demo.categorical[f] < 0 || demo.categorical[f] >= ds.categorical_cardinalities[f]) {
        out.push_back(who + ": demographics.categorical[" + std::to_string(f) + "] = " +
                      std::to_string(demo.categorical[f]) + " outside [0, " +
                      std::to_string(ds.categorical_cardinalities[f]) + ")");
      }
    }
  }
  if (static_cast<int>(demo.numeric.size()) != ds.numeric_count) {
    out.push_back(who + ": demographics.numeric has " + std::to_string(demo.numeric.size()) +
                  " fields, schema declares " + std::to_string(ds.numeric_count));
  }
  for (std::size_t f = 0; f < demo.numeric.size(); ++f) {
    if (!std::isfinite(demo.numeric[f])) {
      out.push_back(who + ": demographics.numeric[" + std::to_string(f) + "] is not finite");
    }
  }
  if (record.steps.empty()) out.push_back(who + ": sequence length must be at least 1");

  for (std::size_t s = 0; s < record.steps.size(); ++s) {
    const auto& step = record.steps[s];
    const std::string at = who + " step " + std::to_string(step.index);
    const int expected = static_cast<int>(s) + 1;
    if (step.index != expected) {
      out.push_back(who + ": step index " + std::to_string(step.index) + " at position " +
                    std::to_string(expected) + " (indices must be 1..t with no gaps)");
    }
    if (s == 0 && step.prev_action != kNoAction) {
      out.push_back(at + ": prev_action must be 0 at the first step");
    }
    if (s > 0 && (step.prev_action < 1 || step.prev_action > schema.n_actions)) {
      out.push_back(at + ": prev_action " + std::to_string(step.prev_action) + " outside [1, " +
                    std::to_string(schema.n_actions) + "]");
    }
    std::set<int> seen;
    for (int code : step.responses) {
      if (code < 0 || code >= schema.n_responses) {
        out.push_back(at + ": response code " + std::to_string(code) + " outside [0, " +
                      std::to_string(schema.n_responses) + ")");
      }
      if (!seen.insert(code).second) {
        out.push_back(at + ": duplicate response code " + std::to_string(code));
      }
    }
    const bool last = s + 1 == record.steps.size();
    if (step.reward) {
      if (last) {
        out.push_back(at + ": reward present on the final open step");
      } else if (!std::isfinite(*step.reward) || *step.reward < 0.0 || *step.reward > 1.0) {
        out.push_back(at + ": reward " + std::to_string(*step.reward) + " outside [0, 1]");
      }
    } else if (!last) {
      out.push_back(at + ": reward missing on a closed step");
    }
    if (step.candidates.empty()) out.push_back(at + ": candidate set is empty");
    std::set<int> cand_seen;
    for (int a : step.candidates) {
      if (a < 1 || a > schema.n_actions) {
        out.push_back(at + ": candidate action " + std::to_string(a) + " outside [1, " +
                      std::to_string(schema.n_actions) + "]");
      }
      if (!cand_seen.insert(a).second) {
        out.push_back(at + ": duplicate candidate action " + std::to_string(a));
      }
    }
    if (!step.candidate_rewards.empty() && step.candidate_rewards.size() != step.candidates.size()) {
      out.push_back(at + ": candidate_rewards length differs from candidates");
    }
    if (static_cast<int>(step.explicit_features.size()) != schema.explicit_width) {
      out.push_back(at + ": explicit feature width " +
                    std::to_string(step.explicit_features.size()) + ", schema declares " +
                    std::to_string(schema.explicit_width));
    }
    for (double x : step.explicit_features) {
      if (!std::isfinite(x)) {
        out.push_back(at + ": explicit feature is not finite");
        break;
      }
    }
  }
  return out;
}

ClientTuple build_client_tuple(const ClientRecord& record, int t) {
  if (t < 1 || t > record.length()) {
    throw RangeError("build_client_tuple: t=" + std::to_string(t) + " outside [1, " +
                     std::to_string(record.length()) + "] for client '" + record.id + "'");
  }
  ClientTuple tuple;
  tuple.demographics = record.demographics;
  const auto n = static_cast<std::size_t>(t);
  tuple.action_history.reserve(n - 1);
  tuple.response_history.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) tuple.action_history.push_back(record.steps[i].prev_action);
    tuple.response_history.push_back(record.steps[i].responses);
  }
  tuple.explicit_features = record.steps[n - 1].explicit_features;
  return tuple;
}

std::vector<LabeledStep> labeled_steps(const std::vector<ClientRecord>& clients) {
  std::vector<LabeledStep> out;
  for (std::size_t c = 0; c < clients.size(); ++c) {
    for (int s = 1; s <= clients[c].labeled_count(); ++s) out.push_back({c, s});
  }
  return out;
}

ActionCatalog build_catalog(const std::vector<ClientRecord>& clients, int n_actions) {
  ActionCatalog catalog;
  catalog.m = n_actions;
  catalog.frequency.assign(static_cast<std::size_t>(n_actions) + 1, 0.0);
  double total = 0.0;
  for (const auto& rec : clients) {
    for (int s = 1; s <= rec.labeled_count(); ++s) {
      const ActionId a = action_at(rec, s);
      if (a < 1 || a > n_actions) {
        throw DataError("client '" + rec.id + "': action " + std::to_string(a) +
                        " outside catalog of " + std::to_string(n_actions));
      }
      catalog.frequency[static_cast<std::size_t>(a)] += 1.0;
      total += 1.0;
    }
  }
  if (total > 0.0) {
    for (auto& f : catalog.frequency) f /= total;
  }
  return catalog;
}

}  // namespace crn
