#include "crn/experiment.hpp"

#include <algorithm>

#include "crn/errors.hpp"
#include "model_internal.hpp"

namespace crn {

namespace {

constexpr std::size_t kChunk = 256;

}  // namespace

PolicyComparison compare_policies(const CrnModel& model, const std::vector<ClientRecord>& clients) {
  std::vector<LabeledStep> steps;
  for (const auto& s : labeled_steps(clients)) {
    const auto& step = clients[s.client].steps[static_cast<std::size_t>(s.step - 1)];
    if (step.true_reward && !step.candidates.empty() &&
        step.candidate_rewards.size() == step.candidates.size()) {
      steps.push_back(s);
    }
  }
  PolicyComparison out;
  std::vector<BatchItem> items;
  std::vector<ActionId> actions;
  for (std::size_t begin = 0; begin < steps.size(); begin += kChunk) {
    const std::size_t end = std::min(steps.size(), begin + kChunk);
    items.clear();
    for (std::size_t i = begin; i < end; ++i) {
      const auto& rec = clients[steps[i].client];
      items.push_back({build_client_tuple(rec, steps[i].step), action_at(rec, steps[i].step)});
    }
    const BatchPass pass = forward_batch(model, items, Mode::Infer);

    // One head column per (decision, candidate).
    actions.clear();
    std::vector<Eigen::Index> owner;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& step = clients[steps[i].client].steps[static_cast<std::size_t>(steps[i].step - 1)];
      for (ActionId a : step.candidates) {
        actions.push_back(a);
        owner.push_back(static_cast<Eigen::Index>(i - begin));
      }
    }
    Matrix states(pass.states.rows(), static_cast<Eigen::Index>(owner.size()));
    for (std::size_t c = 0; c < owner.size(); ++c) states.col(static_cast<Eigen::Index>(c)) = pass.states.col(owner[c]);
    HeadCache head;
    const Matrix probs = head_forward(model, states, actions, Mode::Infer, head);

    std::size_t col = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& step = clients[steps[i].client].steps[static_cast<std::size_t>(steps[i].step - 1)];
      std::size_t best = 0;
      for (std::size_t c = 1; c < step.candidates.size(); ++c) {
        const double p = probs(0, static_cast<Eigen::Index>(col + c));
        const double q = probs(0, static_cast<Eigen::Index>(col + best));
        if (p > q || (p == q && step.candidates[c] < step.candidates[best])) best = c;
      }
      col += step.candidates.size();
      out.chosen.push_back(step.candidates[best]);
      out.chosen_reward.push_back(step.candidate_rewards[best]);
      out.logged_reward.push_back(*step.true_reward);
    }
  }
  return out;
}

MetricsReport evaluate_model(const CrnModel& model, const std::vector<ClientRecord>& clients) {
  const auto steps = labeled_steps(clients);
  if (steps.empty()) throw DataError("evaluate: no labeled steps");
  const Vector pred = predict_labeled(model, clients);
  const PolicyComparison policy = compare_policies(model, clients);

  std::vector<double> labels;
  std::vector<ActionId> actions;
  labels.reserve(steps.size());
  actions.reserve(steps.size());
  for (const auto& s : steps) {
    labels.push_back(reward_at(clients[s.client], s.step));
    actions.push_back(action_at(clients[s.client], s.step));
  }
  return compute_metrics(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())), labels,
                         actions, model.config.schema.n_actions, policy.chosen_reward, policy.logged_reward);
}

ExperimentResult run_experiment(const Dataset& dataset, const TrainConfig& config,
                                const ImbalanceConfig& imbalance, const EpochCallback& on_epoch) {
  config.validate();
  const ClientSplit split = split_clients(dataset.clients.size(), config.seed, config.validation_fraction,
                                          config.test_fraction);
  const auto train_clients = select_clients(dataset.clients, split.train);
  const auto val_clients = select_clients(dataset.clients, split.validation);
  const auto test_clients = select_clients(dataset.clients, split.test);
  TrainResult trained = train(train_clients, val_clients, dataset.schema, config, imbalance, on_epoch);
  MetricsReport test = evaluate_model(trained.model, test_clients);
  return {std::move(trained.model), std::move(trained.history), split, std::move(test)};
}

ExperimentResult run_baseline(ModelKind kind, const Dataset& dataset, TrainConfig config,
                              const ImbalanceConfig& imbalance, const EpochCallback& on_epoch) {
  if (kind == ModelKind::Crn) throw ConfigError("baseline kind must be gru or markov_mlp");
  config.kind = kind;
  return run_experiment(dataset, config, imbalance, on_epoch);
}

}  // namespace crn
