#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "crn/errors.hpp"
#include "crn/io.hpp"
#include "crn/model_check.hpp"
#include "crn/rng.hpp"
#include "crn/synthworld.hpp"
#include "crn/training.hpp"

using namespace crn;

namespace {

ClientRecord client_with_length(const std::string& id, int actions) {
  ClientRecord r;
  r.id = id;
  for (int i = 1; i <= actions + 1; ++i) {
    InteractionStep s;
    s.index = i;
    s.prev_action = i == 1 ? kNoAction : 1;
    if (i <= actions) s.reward = 0.5;
    s.candidates = {1};
    r.steps.push_back(s);
  }
  return r;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

}  // namespace

// Reference values computed with mpmath at 30 digits.
TEST_CASE("action weights for frequencies (1, 3)") {
  const auto w = action_weights(std::vector<double>{1.0, 3.0});
  CHECK(w[0] == doctest::Approx(0.660756368765817172).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(0.339243631234182828).epsilon(1e-12));
}

TEST_CASE("action weights are uniform for equal frequencies and decrease with frequency") {
  const auto u = action_weights(std::vector<double>{0.25, 0.25, 0.25, 0.25});
  for (double w : u) CHECK(w == doctest::Approx(0.25));
  const auto w = action_weights(std::vector<double>{0.5, 0.01, 0.2, 0.29});
  CHECK(std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) < 1e-12);
  CHECK(w[1] > w[2]);
  CHECK(w[2] > w[3]);
  CHECK(w[3] > w[0]);
  CHECK_THROWS_AS(action_weights(std::vector<double>{0.5, 0.0}), ConfigError);
}

TEST_CASE("action weights from a catalog skip absent actions") {
  ActionCatalog cat;
  cat.m = 3;
  cat.frequency = {0.0, 0.75, 0.0, 0.25};
  const auto w = action_weights(cat);
  REQUIRE(w.size() == 4);
  CHECK(w[0] == 0.0);
  CHECK(w[2] == 0.0);
  CHECK(w[1] + w[3] == doctest::Approx(1.0));
  CHECK(w[3] > w[1]);
}

TEST_CASE("action weights with table-one counts rank the rare action above the common one") {
  // A2 = 390 occurrences, A6 = 62,263.
  const auto w = action_weights(std::vector<double>{390.0, 62263.0});
  CHECK(w[0] > w[1]);
}

TEST_CASE("reward weight and effectiveness adjustment") {
  CHECK(reward_weight(0.0) == doctest::Approx(0.0996679946249558171).epsilon(1e-12));
  CHECK(reward_weight(0.9) == doctest::Approx(std::tanh(1.0)));
  CHECK(adjust_effectiveness(0.8, 1) == 0.8);
  CHECK(adjust_effectiveness(0.8, 2) == 0.2);
  CHECK(adjust_effectiveness(1.0, 4) == 0.0625);
  CHECK_THROWS_AS(adjust_effectiveness(0.5, 0), RangeError);
  CHECK_THROWS_AS(adjust_effectiveness(1.5, 1), RangeError);
}

TEST_CASE("client sampling probabilities follow a softmax of the action count") {
  const std::vector<ClientRecord> clients{client_with_length("a", 2), client_with_length("b", 4)};
  const BatchSampler by_len(clients, true);
  CHECK(by_len.client_probabilities()[0] == doctest::Approx(0.119202922022117556).epsilon(1e-12));
  CHECK(by_len.client_probabilities()[1] == doctest::Approx(0.880797077977882444).epsilon(1e-12));
  const BatchSampler uniform(clients, false);
  CHECK(uniform.client_probabilities()[0] == doctest::Approx(2.0 / 6.0));
}

TEST_CASE("equal lengths give uniform client sampling") {
  std::vector<ClientRecord> clients;
  for (int i = 0; i < 5; ++i) clients.push_back(client_with_length("c" + std::to_string(i), 1));
  const BatchSampler s(clients, true);
  for (double p : s.client_probabilities()) CHECK(p == doctest::Approx(0.2));
}

TEST_CASE("empirical client frequencies are within three binomial deviations") {
  const std::vector<ClientRecord> clients{client_with_length("a", 1), client_with_length("b", 2),
                                          client_with_length("c", 3), client_with_length("d", 5)};
  const BatchSampler s(clients, true);
  Rng rng(42);
  const int n = 100000;
  std::vector<int> counts(4, 0);
  std::map<std::pair<std::size_t, int>, int> step_counts;
  for (int drawn = 0; drawn < n; drawn += 1000) {
    for (const auto& st : s.sample(rng, 1000)) {
      ++counts[st.client];
      ++step_counts[{st.client, st.step}];
    }
  }
  for (std::size_t c = 0; c < 4; ++c) {
    const double p = s.client_probabilities()[c];
    const double sd = std::sqrt(n * p * (1 - p));
    CHECK(std::abs(counts[c] - n * p) < 3 * sd);
  }
  // Steps within client d are uniform over its five labeled steps.
  const double pd = s.client_probabilities()[3] / 5.0;
  for (int step = 1; step <= 5; ++step) {
    CHECK(std::abs(step_counts[{3, step}] - n * pd) < 3 * std::sqrt(n * pd * (1 - pd)));
  }
}

TEST_CASE("sampling without labeled steps is a data error") {
  const std::vector<ClientRecord> clients{client_with_length("a", 0)};
  CHECK_THROWS_AS(BatchSampler(clients, true), DataError);
  CHECK_THROWS_AS(BatchSampler({}, false), DataError);
}

TEST_CASE("compute_loss reduces to mean squared error with no strategies") {
  const auto r = compute_loss(vec({0.8}), vec({0.3}), vec({1.0}), ImbalanceConfig::none());
  CHECK(r.loss == doctest::Approx(0.25));
  const auto z = compute_loss(vec({0.1, 0.7}), vec({0.1, 0.7}), vec({1, 1}), ImbalanceConfig::none());
  CHECK(z.loss == 0.0);
  CHECK(z.grad.isZero(0.0));
}

TEST_CASE("reward weighting multiplies the squared error by tanh(label + 0.1)") {
  ImbalanceConfig c;
  c.reward_weighting = true;
  const auto r = compute_loss(vec({0.6}), vec({0.0}), vec({1.0}), c);
  CHECK(r.loss == doctest::Approx(0.36 * 0.0996679946249558171).epsilon(1e-12));
}

TEST_CASE("weights multiply and top-k selection keeps the largest losses") {
  ImbalanceConfig c = ImbalanceConfig::all();
  c.k_loss = 3;
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 8;
    Vector p(n), y(n), w(n);
    for (int i = 0; i < n; ++i) {
      p[i] = rng.uniform();
      y[i] = i % 3 == 0 ? 0.0 : rng.uniform();
      w[i] = rng.uniform(0.1, 1.0);
    }
    // Force ties on some trials.
    if (trial % 5 == 0) {
      p[2] = p[5];
      y[2] = y[5];
      w[2] = w[5];
    }
    const auto r = compute_loss(p, y, w, c);
    std::vector<double> per(n);
    for (int i = 0; i < n; ++i) per[i] = w[i] * std::tanh(y[i] + 0.1) * (p[i] - y[i]) * (p[i] - y[i]);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return per[a] != per[b] ? per[a] > per[b] : a < b; });
    idx.resize(3);
    std::sort(idx.begin(), idx.end());
    CHECK(r.selected == idx);
    double mean = 0.0;
    for (int i : idx) mean += per[i] / 3.0;
    CHECK(r.loss == doctest::Approx(mean).epsilon(1e-12));
    for (int i = 0; i < n; ++i) {
      const bool chosen = std::find(idx.begin(), idx.end(), i) != idx.end();
      if (!chosen) CHECK(r.grad[i] == 0.0);
    }
  }
}

TEST_CASE("compute_loss gradient matches finite differences") {
  ImbalanceConfig c = ImbalanceConfig::all();
  Vector p = vec({0.2, 0.9, 0.4, 0.55}), y = vec({0.3, 0.1, 0.0, 1.0}), w = vec({0.5, 0.2, 0.9, 0.4});
  const auto r = compute_loss(p, y, w, c);
  for (int i = 0; i < 4; ++i) {
    Vector hi = p, lo = p;
    hi[i] += 1e-6;
    lo[i] -= 1e-6;
    const double fd = (compute_loss(hi, y, w, c).loss - compute_loss(lo, y, w, c).loss) / 2e-6;
    CHECK(r.grad[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("compute_loss rejects mismatched or empty input") {
  CHECK_THROWS_AS(compute_loss(vec({0.1, 0.2}), vec({0.1}), vec({1, 1}), ImbalanceConfig::none()), DimensionError);
  CHECK_THROWS_AS(compute_loss(Vector(), Vector(), Vector(), ImbalanceConfig::none()), DimensionError);
}

TEST_CASE("k_loss defaults to half the batch and is bounded") {
  ImbalanceConfig c;
  CHECK(c.resolved_k(128) == 64);
  CHECK(c.resolved_k(1) == 1);
  c.k_loss = 129;
  CHECK_THROWS_AS(c.resolved_k(128), ConfigError);
}

TEST_CASE("imbalance config parsing") {
  CHECK(ImbalanceConfig::parse("none").to_string() == "none");
  CHECK(ImbalanceConfig::parse("all").to_string() == "all");
  const auto c = ImbalanceConfig::parse("reward,action");
  CHECK(c.action_weighting);
  CHECK(c.reward_weighting);
  CHECK_FALSE(c.client_sampling);
  CHECK(c.to_string() == "action,reward");
  CHECK_THROWS_AS(ImbalanceConfig::parse("action,bogus"), ConfigError);
}

TEST_CASE("client split is disjoint, complete and seeded") {
  const auto s = split_clients(1000, 3, 0.1, 0.2);
  CHECK(s.train.size() == 700);
  CHECK(s.validation.size() == 100);
  CHECK(s.test.size() == 200);
  std::vector<std::size_t> all;
  for (const auto* part : {&s.train, &s.validation, &s.test}) all.insert(all.end(), part->begin(), part->end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
  CHECK(split_clients(1000, 3, 0.1, 0.2).test == s.test);
  CHECK(split_clients(1000, 4, 0.1, 0.2).test != s.test);
}

TEST_CASE("training config validation") {
  TrainConfig t;
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = {};
  t.epochs = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("training on a small synthetic world lowers validation loss and is deterministic") {
  SynthProfile p = make_profile("table1", 5);
  p.clients = 50;
  const Dataset d = generate_dataset(p);
  TrainConfig t;
  t.epochs = 20;
  t.batch_size = 32;
  t.dims = {8, 8, 8, 4, 4};
  t.seed = 2;
  const auto a = train(d, t, ImbalanceConfig::none());
  REQUIRE(a.history.val_loss.size() == 20);
  CHECK(a.history.train_loss.size() == 20);
  CHECK(a.history.seconds.size() == 20);
  CHECK(a.history.val_loss.back() < a.history.val_loss.front());
  const auto b = train(d, t, ImbalanceConfig::none());
  CHECK(checkpoint_to_string(a.model) == checkpoint_to_string(b.model));
  t.seed = 3;
  const auto c = train(d, t, ImbalanceConfig::none());
  CHECK(checkpoint_to_string(a.model) != checkpoint_to_string(c.model));
}

TEST_CASE("training with every strategy enabled runs and stays finite") {
  SynthProfile p = make_profile("skewed", 1);
  p.clients = 200;
  const Dataset d = generate_dataset(p);
  TrainConfig t;
  t.epochs = 2;
  t.dims = {4, 4, 4, 4, 4};
  const auto r = train(d, t, ImbalanceConfig::all());
  for (double v : r.history.train_loss) CHECK(std::isfinite(v));
}

TEST_CASE("training without labeled steps fails before any epoch") {
  Dataset d;
  d.schema = gradcheck_schema();
  ClientRecord r;
  r.id = "only";
  r.demographics = {{0, 0}, {0.0, 0.0}};
  InteractionStep s;
  s.candidates = {1};
  s.explicit_features = {0, 0, 0};
  r.steps.push_back(s);
  d.clients.assign(10, r);
  int epochs_seen = 0;
  CHECK_THROWS_AS(train(d, TrainConfig{}, ImbalanceConfig::none(), [&](int, double, double, double) { ++epochs_seen; }),
                  DataError);
  CHECK(epochs_seen == 0);
}

TEST_CASE("a non-finite loss aborts with a diagnostic") {
  SynthProfile p = make_profile("table1", 6);
  p.clients = 30;
  const Dataset d = generate_dataset(p);
  TrainConfig t;
  t.epochs = 3;
  t.dims = {4, 4, 4, 4, 4};
  t.adam.learning_rate = 1e300;
  t.batch_size = 8;
  try {
    train(d, t, ImbalanceConfig::none());
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("at epoch 1 batch 1") != std::string::npos);
  }
}
