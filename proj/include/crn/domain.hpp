#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace crn {

/// Action identifier. 1..m are catalog actions; 0 is the "no prior action"
/// token consumed at the first step.
using ActionId = int;
inline constexpr ActionId kNoAction = 0;

/// Declared layout of the demographic block: one categorical field per
/// cardinality, followed by `numeric_count` real-valued fields.
struct DemographicSchema {
  std::vector<int> categorical_cardinalities;
  int numeric_count = 0;

  /// Width after one-hot encoding of categoricals plus numerics.
  int encoded_width() const;
  int field_count() const {
    return static_cast<int>(categorical_cardinalities.size()) + numeric_count;
  }
  bool operator==(const DemographicSchema&) const = default;
};

struct DatasetSchema {
  int version = 1;
  DemographicSchema demographics;
  int n_responses = 0;     // n_r
  int n_actions = 0;       // m
  int explicit_width = 0;  // explicit feature count per step
  bool operator==(const DatasetSchema&) const = default;
};

struct Demographics {
  std::vector<int> categorical;
  std::vector<double> numeric;
  bool operator==(const Demographics&) const = default;
};

/// One step i of a client's history. `prev_action` is a_{i-1}; `reward` is
/// the label for the action taken at this step (a_i, which is the next
/// step's `prev_action`) and is absent on the final open step.
struct InteractionStep {
  int index = 1;
  ActionId prev_action = kNoAction;
  std::vector<int> responses;
  std::optional<double> reward;
  std::vector<ActionId> candidates;
  std::vector<double> explicit_features;
  /// Optional noise-free reward of every candidate (same order), present
  /// on synthetic data; used only for lift metrics.
  std::vector<double> candidate_rewards;
  /// Optional noise-free reward of the logged action, synthetic data only.
  std::optional<double> true_reward;

  bool operator==(const InteractionStep&) const = default;
};

struct ClientRecord {
  std::string id;
  Demographics demographics;
  std::vector<InteractionStep> steps;

  int length() const { return static_cast<int>(steps.size()); }
  /// Number of closed (rewarded) steps: all but the final open one.
  int labeled_count() const { return steps.empty() ? 0 : length() - 1; }
  bool operator==(const ClientRecord&) const = default;
};

struct Dataset {
  DatasetSchema schema;
  std::vector<ClientRecord> clients;
  bool operator==(const Dataset&) const = default;
};

/// C_t = <D_t, A_{t-1}, O_t> plus the explicit features at t.
struct ClientTuple {
  Demographics demographics;
  std::vector<ActionId> action_history;          // a_1 .. a_{t-1}
  std::vector<std::vector<int>> response_history;  // O_{t,1} .. O_{t,t}
  std::vector<double> explicit_features;
  int t() const { return static_cast<int>(response_history.size()); }
};

/// Per-action training frequencies. `frequency[a]` for a in 1..m is the
/// share of labeled training steps taking action a; index 0 is unused.
struct ActionCatalog {
  int m = 0;
  std::vector<double> frequency;
};

/// Every invariant violation of `record`, as human-readable strings naming
/// the step and field. Empty means valid. Never throws.
std::vector<std::string> validate_record(const ClientRecord& record, const DatasetSchema& schema);

/// Throws RangeError unless 1 <= t <= record.length().
ClientTuple build_client_tuple(const ClientRecord& record, int t);

/// A closed step usable for training: the tuple at `step` and the action
/// that was taken there.
struct LabeledStep {
  std::size_t client = 0;
  int step = 1;  // 1-based
};

std::vector<LabeledStep> labeled_steps(const std::vector<ClientRecord>& clients);

/// Action taken at closed step `step` (1-based), i.e. a_step.
inline ActionId action_at(const ClientRecord& record, int step) {
  return record.steps[static_cast<std::size_t>(step)].prev_action;
}
inline double reward_at(const ClientRecord& record, int step) {
  return *record.steps[static_cast<std::size_t>(step - 1)].reward;
}

ActionCatalog build_catalog(const std::vector<ClientRecord>& clients, int n_actions);

}  // namespace crn
