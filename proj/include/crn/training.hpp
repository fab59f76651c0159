#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "crn/domain.hpp"
#include "crn/model.hpp"
#include "crn/numerics.hpp"

namespace crn {

class Rng;

/// Switches for the four imbalance strategies.
///  - action_weighting: loss multiplied by softmax(1/f) of the action taken.
///  - client_sampling: clients drawn with probability softmax(length).
///  - reward_weighting: loss multiplied by tanh(r + 0.1), and only the
///    k_loss largest per-sample losses of a batch are backpropagated.
///  - effectiveness: training labels replaced by r / t^2.
struct ImbalanceConfig {
  bool action_weighting = false;
  bool client_sampling = false;
  bool reward_weighting = false;
  bool effectiveness = false;
  int k_loss = 0;  // 0 = half the batch

  static ImbalanceConfig none() { return {}; }
  static ImbalanceConfig all();
  /// "none", "all", or a comma list of action,sampling,reward,effectiveness.
  static ImbalanceConfig parse(const std::string& text);
  std::string to_string() const;
  bool selection_enabled() const { return reward_weighting; }
  /// k_loss resolved against a batch size. ConfigError if out of [1, batch].
  int resolved_k(int batch_size) const;
};

struct TrainConfig {
  ModelKind kind = ModelKind::Crn;
  ModelDims dims;
  int batch_size = 128;
  int epochs = 20;
  std::uint64_t seed = 1;
  AdamConfig adam;
  double validation_fraction = 0.1;
  double test_fraction = 0.2;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> seconds;
};

/// softmax(1/f) over the actions present in the catalog (f > 0). Entry 0 and
/// absent actions are 0. ConfigError if no action is present.
std::vector<double> action_weights(const ActionCatalog& catalog);

/// Same formula over an explicit frequency list (all must be > 0).
std::vector<double> action_weights(const std::vector<double>& frequencies);

double reward_weight(double reward);

/// r / t^2. RangeError for t < 1 or r outside [0, 1].
double adjust_effectiveness(double reward, int t);

/// Draws (client, step) training samples. With length sampling clients are
/// drawn with replacement by softmax of their action count, then a labeled
/// step uniformly within the client; otherwise labeled steps are uniform.
class BatchSampler {
 public:
  BatchSampler(const std::vector<ClientRecord>& clients, bool by_length);

  std::vector<LabeledStep> sample(Rng& rng, int batch_size) const;
  /// Per-client probabilities (0 for clients without a labeled step).
  const std::vector<double>& client_probabilities() const { return probability_; }
  std::size_t labeled_total() const { return steps_.size(); }

 private:
  const std::vector<ClientRecord>* clients_;
  bool by_length_;
  std::vector<LabeledStep> steps_;
  std::vector<double> probability_;
  std::vector<double> cumulative_;
  std::size_t last_positive_ = 0;
};

std::vector<LabeledStep> sample_batch(const std::vector<ClientRecord>& clients, Rng& rng,
                                      int batch_size, bool by_length = true);

struct LossResult {
  double loss = 0.0;           // mean of the selected per-sample losses
  Vector grad;                 // d loss / d prediction
  Vector per_sample;           // weighted squared errors
  std::vector<int> selected;   // indices that contribute, ascending
};

/// `weights` are per-sample action weights, ignored unless action weighting
/// is on. Labels must already be adjusted if effectiveness is on.
LossResult compute_loss(const Vector& predictions, const Vector& labels, const Vector& weights,
                        const ImbalanceConfig& config);

/// Client-level split of indices into train / validation / test.
struct ClientSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

ClientSplit split_clients(std::size_t count, std::uint64_t seed, double validation_fraction,
                          double test_fraction);
std::vector<ClientRecord> select_clients(const std::vector<ClientRecord>& clients,
                                         const std::vector<std::size_t>& indices);

/// Inference-mode predictions for every labeled step of `clients`, in
/// labeled_steps order.
Vector predict_labeled(const CrnModel& model, const std::vector<ClientRecord>& clients);

/// Plain mean squared error against the raw labels.
double evaluate_mse(const CrnModel& model, const std::vector<ClientRecord>& clients);

struct TrainResult {
  CrnModel model;
  TrainHistory history;
};

using EpochCallback = std::function<void(int epoch, double train_loss, double val_loss, double seconds)>;

TrainResult train(const std::vector<ClientRecord>& train_clients,
                  const std::vector<ClientRecord>& validation_clients, const DatasetSchema& schema,
                  const TrainConfig& config, const ImbalanceConfig& imbalance,
                  const EpochCallback& on_epoch = {});

/// Splits `dataset` with config.seed and trains on the training part.
TrainResult train(const Dataset& dataset, const TrainConfig& config,
                  const ImbalanceConfig& imbalance, const EpochCallback& on_epoch = {});

}  // namespace crn
