#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crn/domain.hpp"

namespace crn {

inline constexpr double kHighReward = 0.5;

struct ActionMetrics {
  ActionId action = kNoAction;
  long count = 0;
  double mse = 0.0;
  long positives = 0;       // labels >= 0.5
  long true_positives = 0;  // ... also predicted >= 0.5
  /// true_positives / positives; empty when the action has no positives.
  std::optional<double> precision;
};

struct MetricsReport {
  std::vector<ActionMetrics> per_action;  // actions 1..m
  long samples = 0;
  double total_avg = 0.0;   // count-weighted mean of per-action MSE
  double action_avg = 0.0;  // unweighted mean over actions with samples
  std::optional<double> precision;
  double mean_reward = 0.0;
  double top_decile_reward = 0.0;
  /// Present when noise-free rewards of the model's choice and of the logged
  /// action are available.
  std::optional<double> model_reward;
  std::optional<double> logged_reward;
  std::optional<double> reward_lift;
};

/// `predictions`, `labels` and `actions` are aligned per sample. The two
/// optional spans hold, per decision, the noise-free reward of the model's
/// top-1 candidate and of the logged action. DataError on empty or
/// misaligned input, RangeError on a label outside [0, 1] or bad action.
MetricsReport compute_metrics(std::span<const double> predictions, std::span<const double> labels,
                              std::span<const ActionId> actions, int m,
                              std::span<const double> model_rewards = {},
                              std::span<const double> logged_rewards = {});

/// Mean label of the 10% highest predictions. A tie group straddling the
/// cut contributes its mean in proportion to the share that fits.
double top_decile_mean(std::span<const double> predictions, std::span<const double> labels);

std::string metrics_to_json(const MetricsReport& report);
/// One row per action plus total rows: action,count,mse,positives,precision.
std::string metrics_to_csv(const MetricsReport& report);
std::string metrics_to_table(const MetricsReport& report);

}  // namespace crn
