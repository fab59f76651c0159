#include "crn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string_view>

#include "crn/errors.hpp"
#include "crn/rng.hpp"

namespace crn {

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kBatchStream = 0xBA7C;
constexpr std::uint64_t kSplitStream = 0x5B17;
constexpr std::size_t kInferenceChunk = 256;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string first_non_finite(const CrnModel& model) {
  for (const auto& p : model.parameters()) {
    if (!all_finite(*p.value)) return p.name;
  }
  return {};
}

}  // namespace

ImbalanceConfig ImbalanceConfig::all() {
  ImbalanceConfig c;
  c.action_weighting = c.client_sampling = c.reward_weighting = c.effectiveness = true;
  return c;
}

ImbalanceConfig ImbalanceConfig::parse(const std::string& text) {
  if (text == "none" || text.empty()) return none();
  if (text == "all") return all();
  ImbalanceConfig c;
  for (const auto& name : split_list(text)) {
    if (name == "action") {
      c.action_weighting = true;
    } else if (name == "sampling") {
      c.client_sampling = true;
    } else if (name == "reward") {
      c.reward_weighting = true;
    } else if (name == "effectiveness") {
      c.effectiveness = true;
    } else {
      throw ConfigError("unknown imbalance strategy '" + name +
                        "' (expected none, all, or action,sampling,reward,effectiveness)");
    }
  }
  return c;
}

std::string ImbalanceConfig::to_string() const {
  std::vector<std::string> on;
  if (action_weighting) on.push_back("action");
  if (client_sampling) on.push_back("sampling");
  if (reward_weighting) on.push_back("reward");
  if (effectiveness) on.push_back("effectiveness");
  if (on.empty()) return "none";
  if (on.size() == 4) return "all";
  std::string out = on[0];
  for (std::size_t i = 1; i < on.size(); ++i) out += "," + on[i];
  return out;
}

int ImbalanceConfig::resolved_k(int batch_size) const {
  const int k = k_loss == 0 ? std::max(1, batch_size / 2) : k_loss;
  if (k < 1 || k > batch_size) {
    throw ConfigError("k_loss " + std::to_string(k) + " outside [1, " +
                      std::to_string(batch_size) + "]");
  }
  return k;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (validation_fraction < 0 || test_fraction < 0 || validation_fraction + test_fraction >= 1) {
    throw ConfigError("validation and test fractions must be >= 0 and sum below 1");
  }
  if (dims.n_a < 1 || dims.n_o < 1 || dims.n_s < 1 || dims.n_imp < 1 || dims.n_exp < 1) {
    throw ConfigError("model dimensions must be >= 1");
  }
  if (!(adam.learning_rate > 0)) throw ConfigError("learning rate must be > 0");
}

std::vector<double> action_weights(const std::vector<double>& frequencies) {
  std::vector<double> inverse;
  inverse.reserve(frequencies.size());
  for (double f : frequencies) {
    if (!(f > 0) || !std::isfinite(f)) {
      throw ConfigError("action frequency must be positive, got " + std::to_string(f));
    }
    inverse.push_back(1.0 / f);
  }
  const Vector w = stable_softmax(inverse);
  return {w.data(), w.data() + w.size()};
}

std::vector<double> action_weights(const ActionCatalog& catalog) {
  std::vector<double> present;
  std::vector<int> ids;
  for (int a = 1; a <= catalog.m; ++a) {
    const double f = catalog.frequency[static_cast<std::size_t>(a)];
    if (f < 0 || !std::isfinite(f)) throw ConfigError("invalid frequency for action " + std::to_string(a));
    if (f > 0) {
      present.push_back(f);
      ids.push_back(a);
    }
  }
  if (present.empty()) throw ConfigError("no action present in training data");
  const auto w = action_weights(present);
  std::vector<double> out(static_cast<std::size_t>(catalog.m) + 1, 0.0);
  for (std::size_t i = 0; i < ids.size(); ++i) out[static_cast<std::size_t>(ids[i])] = w[i];
  return out;
}

double reward_weight(double reward) { return std::tanh(reward + 0.1); }

double adjust_effectiveness(double reward, int t) {
  if (t < 1) throw RangeError("step index must be >= 1, got " + std::to_string(t));
  if (!(reward >= 0.0 && reward <= 1.0)) {
    throw RangeError("reward must lie in [0, 1], got " + std::to_string(reward));
  }
  return reward / (static_cast<double>(t) * static_cast<double>(t));
}

BatchSampler::BatchSampler(const std::vector<ClientRecord>& clients, bool by_length)
    : clients_(&clients), by_length_(by_length), steps_(labeled_steps(clients)) {
  if (steps_.empty()) throw DataError("no labeled steps to sample from");
  probability_.assign(clients.size(), 0.0);
  if (by_length_) {
    std::vector<double> lengths;
    std::vector<std::size_t> owners;
    for (std::size_t c = 0; c < clients.size(); ++c) {
      if (clients[c].labeled_count() > 0) {
        lengths.push_back(clients[c].labeled_count());
        owners.push_back(c);
      }
    }
    const Vector p = stable_softmax(lengths);
    for (std::size_t i = 0; i < owners.size(); ++i) probability_[owners[i]] = p[static_cast<Eigen::Index>(i)];
  } else {
    const double total = static_cast<double>(steps_.size());
    for (std::size_t c = 0; c < clients.size(); ++c) probability_[c] = clients[c].labeled_count() / total;
  }
  cumulative_.resize(probability_.size());
  std::partial_sum(probability_.begin(), probability_.end(), cumulative_.begin());
  for (std::size_t c = 0; c < probability_.size(); ++c) {
    if (probability_[c] > 0) last_positive_ = c;
  }
}

std::vector<LabeledStep> BatchSampler::sample(Rng& rng, int batch_size) const {
  std::vector<LabeledStep> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  for (int b = 0; b < batch_size; ++b) {
    if (!by_length_) {
      out.push_back(steps_[rng.index(steps_.size())]);
      continue;
    }
    const double u = rng.uniform() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    std::size_t c = static_cast<std::size_t>(it - cumulative_.begin());
    // upper_bound only stops where the cumulative sum jumps, i.e. on a client
    // with positive probability; rounding can push u past the end.
    if (c == cumulative_.size()) c = last_positive_;
    const auto n = static_cast<std::uint64_t>((*clients_)[c].labeled_count());
    out.push_back({c, 1 + static_cast<int>(rng.index(n))});
  }
  return out;
}

std::vector<LabeledStep> sample_batch(const std::vector<ClientRecord>& clients, Rng& rng,
                                      int batch_size, bool by_length) {
  return BatchSampler(clients, by_length).sample(rng, batch_size);
}

LossResult compute_loss(const Vector& predictions, const Vector& labels, const Vector& weights,
                        const ImbalanceConfig& config) {
  const auto n = predictions.size();
  if (labels.size() != n || (config.action_weighting && weights.size() != n)) {
    throw DimensionError("compute_loss: predictions, labels and weights must have equal length");
  }
  if (n == 0) throw DimensionError("compute_loss: empty batch");

  LossResult r;
  r.per_sample.resize(n);
  Vector factor(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double w = 1.0;
    if (config.action_weighting) w *= weights[i];
    if (config.reward_weighting) w *= reward_weight(labels[i]);
    factor[i] = w;
    const double d = predictions[i] - labels[i];
    r.per_sample[i] = w * d * d;
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  if (config.selection_enabled()) {
    const int k = std::min<int>(config.resolved_k(static_cast<int>(n)), static_cast<int>(n));
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return r.per_sample[a] > r.per_sample[b]; });
    order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());
  }
  r.selected = order;

  const double inv_k = 1.0 / static_cast<double>(order.size());
  r.grad = Vector::Zero(n);
  for (int i : order) {
    r.loss += r.per_sample[i];
    r.grad[i] = 2.0 * factor[i] * (predictions[i] - labels[i]) * inv_k;
  }
  r.loss *= inv_k;
  return r;
}

ClientSplit split_clients(std::size_t count, std::uint64_t seed, double validation_fraction,
                          double test_fraction) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed, kSplitStream);
  rng.shuffle(idx);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(count)));
  const auto n_val =
      static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(count)));
  ClientSplit s;
  s.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(count, n_test)));
  const std::size_t val_end = std::min(count, n_test + n_val);
  s.validation.assign(idx.begin() + static_cast<std::ptrdiff_t>(s.test.size()),
                      idx.begin() + static_cast<std::ptrdiff_t>(val_end));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(val_end), idx.end());
  for (auto* part : {&s.train, &s.validation, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

std::vector<ClientRecord> select_clients(const std::vector<ClientRecord>& clients,
                                         const std::vector<std::size_t>& indices) {
  std::vector<ClientRecord> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(clients.at(i));
  return out;
}

Vector predict_labeled(const CrnModel& model, const std::vector<ClientRecord>& clients) {
  const auto steps = labeled_steps(clients);
  Vector out(static_cast<Eigen::Index>(steps.size()));
  std::vector<BatchItem> items;
  for (std::size_t begin = 0; begin < steps.size(); begin += kInferenceChunk) {
    const std::size_t end = std::min(steps.size(), begin + kInferenceChunk);
    items.clear();
    for (std::size_t i = begin; i < end; ++i) {
      const auto& rec = clients[steps[i].client];
      items.push_back({build_client_tuple(rec, steps[i].step), action_at(rec, steps[i].step)});
    }
    const BatchPass pass = forward_batch(model, items, Mode::Infer);
    out.segment(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) =
        pass.predictions;
  }
  return out;
}

double evaluate_mse(const CrnModel& model, const std::vector<ClientRecord>& clients) {
  const auto steps = labeled_steps(clients);
  if (steps.empty()) return 0.0;
  const Vector pred = predict_labeled(model, clients);
  double total = 0.0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const double d = pred[static_cast<Eigen::Index>(i)] - reward_at(clients[steps[i].client], steps[i].step);
    total += d * d;
  }
  return total / static_cast<double>(steps.size());
}

TrainResult train(const std::vector<ClientRecord>& train_clients,
                  const std::vector<ClientRecord>& validation_clients, const DatasetSchema& schema,
                  const TrainConfig& config, const ImbalanceConfig& imbalance,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (imbalance.selection_enabled()) imbalance.resolved_k(config.batch_size);
  const BatchSampler sampler(train_clients, imbalance.client_sampling);

  ModelConfig mc;
  mc.kind = config.kind;
  mc.dims = config.dims;
  mc.schema = schema;
  Rng init_rng(config.seed, kInitStream);
  TrainResult result{CrnModel::create(mc, init_rng), {}};
  CrnModel& model = result.model;
  model.scaler = DemographicScaler::fit(train_clients, schema.demographics);

  std::vector<double> weights_by_action;
  if (imbalance.action_weighting) weights_by_action = action_weights(build_catalog(train_clients, schema.n_actions));

  CrnModel grad = model.zeros_like();
  AdamState adam;
  adam.config = config.adam;
  Rng rng(config.seed, kBatchStream);
  const auto iterations = static_cast<int>(
      (sampler.labeled_total() + static_cast<std::size_t>(config.batch_size) - 1) /
      static_cast<std::size_t>(config.batch_size));

  std::vector<BatchItem> items;
  Vector labels(config.batch_size);
  Vector weights(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double epoch_loss = 0.0;
    for (int it = 0; it < iterations; ++it) try {
      const auto batch = sampler.sample(rng, config.batch_size);
      items.clear();
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& rec = train_clients[batch[b].client];
        const int t = batch[b].step;
        const ActionId action = action_at(rec, t);
        items.push_back({build_client_tuple(rec, t), action});
        double label = reward_at(rec, t);
        if (imbalance.effectiveness) label = adjust_effectiveness(label, t);
        labels[static_cast<Eigen::Index>(b)] = label;
        weights[static_cast<Eigen::Index>(b)] =
            imbalance.action_weighting ? weights_by_action[static_cast<std::size_t>(action)] : 1.0;
      }

      const BatchPass pass = forward_batch(model, items, Mode::Train);
      const LossResult loss = compute_loss(pass.predictions, labels, weights, imbalance);
      if (!std::isfinite(loss.loss)) {
        const auto name = first_non_finite(model);
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(it) + " (parameter " + (name.empty() ? "none" : name) + ")");
      }

      for (const auto& p : grad.parameters()) p.value->setZero();
      backward_batch(model, pass, loss.grad, grad);
      if (const auto name = first_non_finite(grad); !name.empty()) {
        throw NumericError("non-finite gradient at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(it) + " (parameter " + name + ")");
      }
      commit_batch_statistics(model, pass);
      const auto params = model.parameters();
      const auto grads = std::as_const(grad).parameters();
      adam_step(params, grads, adam);
      epoch_loss += loss.loss;
    } catch (const NumericError& e) {
      if (std::string_view(e.what()).find(" at epoch ") != std::string_view::npos) throw;
      throw NumericError("at epoch " + std::to_string(epoch) + " batch " + std::to_string(it) + ": " + e.what());
    }

    const double train_loss = epoch_loss / iterations;
    double val_loss = 0.0;
    try {
      if (!validation_clients.empty()) val_loss = evaluate_mse(model, validation_clients);
    } catch (const NumericError& e) {
      throw NumericError("at epoch " + std::to_string(epoch) + " validation: " + e.what());
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.train_loss.push_back(train_loss);
    result.history.val_loss.push_back(val_loss);
    result.history.seconds.push_back(seconds);
    if (on_epoch) on_epoch(epoch, train_loss, val_loss, seconds);
  }
  return result;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config,
                  const ImbalanceConfig& imbalance, const EpochCallback& on_epoch) {
  config.validate();
  const auto split = split_clients(dataset.clients.size(), config.seed, config.validation_fraction,
                                   config.test_fraction);
  return train(select_clients(dataset.clients, split.train),
               select_clients(dataset.clients, split.validation), dataset.schema, config,
               imbalance, on_epoch);
}

}  // namespace crn
