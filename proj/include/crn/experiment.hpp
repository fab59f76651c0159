#pragma once

#include <vector>

#include "crn/domain.hpp"
#include "crn/metrics.hpp"
#include "crn/model.hpp"
#include "crn/training.hpp"

namespace crn {

/// Per labeled step, the model's greedy choice among the logged candidates
/// and the noise-free rewards needed for lift. Steps without
/// candidate_rewards or true_reward are skipped.
struct PolicyComparison {
  std::vector<ActionId> chosen;
  std::vector<double> chosen_reward;
  std::vector<double> logged_reward;
};

PolicyComparison compare_policies(const CrnModel& model, const std::vector<ClientRecord>& clients);

/// Test-set metrics: predictions never see labels; labels only enter the
/// comparison afterwards. DataError if `clients` has no labeled step.
MetricsReport evaluate_model(const CrnModel& model, const std::vector<ClientRecord>& clients);

struct ExperimentResult {
  CrnModel model;
  TrainHistory history;
  ClientSplit split;
  MetricsReport test;
};

/// 70/10/20 client split with config.seed, train, evaluate on the test part.
ExperimentResult run_experiment(const Dataset& dataset, const TrainConfig& config,
                                const ImbalanceConfig& imbalance, const EpochCallback& on_epoch = {});

/// Same loop with config.kind replaced by `kind` (Gru or MarkovMlp).
/// ConfigError for ModelKind::Crn.
ExperimentResult run_baseline(ModelKind kind, const Dataset& dataset, TrainConfig config,
                              const ImbalanceConfig& imbalance = ImbalanceConfig::none(),
                              const EpochCallback& on_epoch = {});

}  // namespace crn
