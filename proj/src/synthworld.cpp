#include "crn/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crn/errors.hpp"
#include "crn/numerics.hpp"
#include "crn/rng.hpp"

namespace crn {

namespace {

// Calibration aims for this share of sub-0.5 labels to fall below kLowLabel.
constexpr double kLowLabel = 0.1;
constexpr double kLowLabelShare = 0.8;

constexpr std::uint64_t kWorldStream = 0x3041D;
constexpr std::uint64_t kPoolStream = 0x9001;
constexpr std::uint64_t kClientStream = 0xC11E47;

// Pilot table: count, mean, std, high-reward proportion.
struct TableRow {
  double count, mean, stddev, high;
};
constexpr TableRow kTable1[] = {
    {1225, 0.065, 0.145, 0.0242},  {390, 0.132, 0.259, 0.1175},   {13592, 0.125, 0.221, 0.0753},
    {1020, 0.229, 0.340, 0.2750},  {1384, 0.057, 0.158, 0.0328},  {62263, 0.223, 0.333, 0.2585},
    {15403, 0.186, 0.294, 0.1767}, {3289, 0.097, 0.205, 0.0665},  {904, 0.311, 0.355, 0.4059},
    {12044, 0.159, 0.262, 0.1201},
};

struct ResponseModel {
  std::vector<double> base;                // per code
  std::vector<std::vector<double>> by_prev;  // [code][prev action 0..m]
  std::vector<double> latent;              // per code
};

struct World {
  OracleSpec oracle;
  ResponseModel responses;
};

World draw_world(const SynthProfile& p) {
  Rng rng(p.seed, kWorldStream);
  const int m = static_cast<int>(p.actions.size());
  World w;
  auto& o = w.oracle;
  o.m = m;
  o.lag = p.lag;
  o.lag_weight = p.lag > 0 ? p.lag_weight : 0.0;
  o.debt_weight = p.debt_weight;
  o.noise = p.noise;
  o.bias.assign(static_cast<std::size_t>(m) + 1, 0.0);
  o.beta.assign(static_cast<std::size_t>(m) + 1, 0.0);
  o.delta.assign(static_cast<std::size_t>(m) + 1, 0.0);
  o.decay.assign(static_cast<std::size_t>(m) + 1, 1.0);
  o.shape.assign(static_cast<std::size_t>(m) + 1, 1.0);
  for (int a = 1; a <= m; ++a) {
    o.beta[static_cast<std::size_t>(a)] = p.latent_scale * rng.uniform(-1.0, 1.0);
    o.delta[static_cast<std::size_t>(a)] = p.response_scale * rng.uniform(-1.0, 1.0);
  }
  auto& r = w.responses;
  for (int code = 0; code < p.n_responses; ++code) {
    r.base.push_back(rng.uniform(-1.0, 0.0));
    r.latent.push_back(rng.uniform(-0.8, 0.8));
    std::vector<double> row;
    for (int a = 0; a <= m; ++a) row.push_back(rng.uniform(-1.5, 1.5));
    r.by_prev.push_back(std::move(row));
  }
  return w;
}

/// Largest-remainder allocation of `total` slots to the normalised shares.
std::vector<long> allocate(const std::vector<double>& shares, long total) {
  const double sum = std::accumulate(shares.begin(), shares.end(), 0.0);
  std::vector<long> counts(shares.size());
  std::vector<std::pair<double, std::size_t>> remainder;
  long used = 0;
  for (std::size_t i = 0; i < shares.size(); ++i) {
    const double exact = shares[i] / sum * static_cast<double>(total);
    counts[i] = static_cast<long>(std::floor(exact));
    used += counts[i];
    remainder.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& x, const auto& y) { return x.first > y.first; });
  for (long k = 0; k < total - used; ++k) ++counts[remainder[static_cast<std::size_t>(k)].second];
  return counts;
}

OracleContext context_at(const ClientRecord& rec, int step, double latent) {
  OracleContext c;
  c.latent = latent;
  for (int i = 2; i <= step; ++i) c.history.push_back(rec.steps[static_cast<std::size_t>(i - 1)].prev_action);
  const auto& s = rec.steps[static_cast<std::size_t>(step - 1)];
  c.response_count = static_cast<int>(s.responses.size());
  c.debt = s.explicit_features.at(0);
  return c;
}

// Low-branch labels 0.5 * exp(-decay * d) with d = (-x)^shape; the high branch is fixed.
struct LabelShape {
  std::vector<double> depth;
  double high_sum = 0.0;
  std::size_t n = 0;

  double scale = 1.0;  // depth is measured in units of the median low logit

  LabelShape(const std::vector<double>& shifted, double shape) : n(shifted.size()) {
    std::vector<double> low;
    for (double x : shifted) {
      if (x >= 0.0) {
        high_sum += sigmoid(x);
      } else {
        low.push_back(-x);
      }
    }
    if (!low.empty()) {
      std::vector<double> sorted = low;
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
      scale = std::max(sorted[sorted.size() / 2], 1e-12);
    }
    for (double v : low) depth.push_back(std::pow(v / scale, shape));
  }

  // Decay in units of the raw logit, as reward_transform uses it.
  double raw_decay(double decay, double shape) const { return decay / std::pow(scale, shape); }

  double mean(double decay) const {
    double total = high_sum;
    for (double d : depth) total += 0.5 * std::exp(-decay * d);
    return total / static_cast<double>(n);
  }

  // Decay that matches `target` mean, by bisection on log decay.
  double fit_decay(double target) const {
    double lo = std::log(1e-6), hi = std::log(1e6);
    for (int iter = 0; iter < 60; ++iter) {
      const double mid = 0.5 * (lo + hi);
      (mean(std::exp(mid)) > target ? lo : hi) = mid;
    }
    return std::exp(0.5 * (lo + hi));
  }

  double share_below(double decay, double cut) const {
    if (depth.empty()) return 1.0;
    const double limit = std::log(0.5 / cut) / decay;
    const auto below = std::count_if(depth.begin(), depth.end(), [&](double d) { return d > limit; });
    return static_cast<double>(below) / static_cast<double>(depth.size());
  }
};

}  // namespace

void SynthProfile::validate() const {
  if (actions.empty()) throw ProfileError("profile needs at least one action");
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const auto& a = actions[i];
    const std::string id = "action " + std::to_string(i + 1);
    if (!(a.frequency > 0) || !std::isfinite(a.frequency)) throw ProfileError(id + ": frequency must be positive");
    if (!(a.mean >= 0 && a.mean <= 1)) throw ProfileError(id + ": mean reward outside [0, 1]");
    if (!(a.high_share >= 0 && a.high_share <= 1)) throw ProfileError(id + ": high-reward share outside [0, 1]");
    if (!(a.stddev >= 0)) throw ProfileError(id + ": negative stddev");
  }
  if (lag < 0) throw ProfileError("lag must be >= 0");
  if (clients < 1) throw ProfileError("clients must be >= 1");
  if (n_responses < 1) throw ProfileError("n_responses must be >= 1");
  if (!(median_actions >= 1) || max_actions < 1 || !(length_sigma >= 0)) {
    throw ProfileError("invalid sequence-length distribution");
  }
  if (!(noise >= 0)) throw ProfileError("noise must be >= 0");
}

DatasetSchema SynthProfile::schema() const {
  DatasetSchema s;
  s.demographics.categorical_cardinalities = {3, 2};
  s.demographics.numeric_count = 2;
  s.n_responses = n_responses;
  s.n_actions = static_cast<int>(actions.size());
  s.explicit_width = 3;
  return s;
}

std::vector<std::string> profile_names() { return {"table1", "markov", "skewed"}; }

SynthProfile make_profile(const std::string& name, std::uint64_t seed) {
  SynthProfile p;
  p.name = name;
  p.seed = seed;
  if (name == "table1" || name == "markov") {
    for (const auto& row : kTable1) p.actions.push_back({row.count, row.mean, row.stddev, row.high});
    p.lag = name == "table1" ? 3 : 0;
  } else if (name == "skewed") {
    p.actions = {{0.01, 0.30, 0.35, 0.40},
                 {0.09, 0.15, 0.25, 0.15},
                 {0.20, 0.20, 0.30, 0.22},
                 {0.30, 0.12, 0.22, 0.10},
                 {0.40, 0.10, 0.20, 0.08}};
    p.clients = 20000;
    p.median_actions = 2.0;
    p.length_sigma = 0.6;
    p.max_actions = 10;
  } else {
    throw ProfileError("unknown profile '" + name + "'");
  }
  return p;
}

double reward_transform(double x, double decay, double shape) {
  if (x >= 0.0) return sigmoid(x);
  // Strictly below 0.5 even when the exponent underflows.
  return std::min(0.5 * std::exp(-decay * std::pow(-x, shape)), std::nextafter(0.5, 0.0));
}

double oracle_logit(const OracleSpec& spec, const OracleContext& ctx, ActionId action) {
  if (action < 1 || action > spec.m) throw RangeError("oracle action " + std::to_string(action) + " out of range");
  const auto a = static_cast<std::size_t>(action);
  double ell = spec.bias[a] + spec.beta[a] * ctx.latent +
               spec.delta[a] * (ctx.response_count - spec.response_mean) + spec.debt_weight * ctx.debt;
  if (spec.lag > 0) {
    // a_{i-L} is history[i-L-1]; history holds a_1..a_{i-1}.
    const int i = static_cast<int>(ctx.history.size()) + 1;
    const int back = i - spec.lag;
    const ActionId past = back >= 1 ? ctx.history[static_cast<std::size_t>(back - 1)] : kNoAction;
    ell += spec.lag_weight * ((action + past) % 2 == 0 ? 1.0 : -1.0);
  }
  return ell;
}

double oracle_reward(const OracleSpec& spec, const OracleContext& ctx, ActionId action,
                     double epsilon) {
  return reward_transform(oracle_logit(spec, ctx, action) + spec.noise * epsilon,
                          spec.decay[static_cast<std::size_t>(action)],
                          spec.shape[static_cast<std::size_t>(action)]);
}

SynthWorld generate_world(const SynthProfile& profile) {
  profile.validate();
  const int m = static_cast<int>(profile.actions.size());
  World world = draw_world(profile);
  SynthWorld out;
  out.dataset.schema = profile.schema();
  auto& clients = out.dataset.clients;

  // Sequence lengths and demographics first, so the action pool can be sized.
  std::vector<int> n_actions(static_cast<std::size_t>(profile.clients));
  std::vector<Rng> streams;
  streams.reserve(n_actions.size());
  long total = 0;
  for (int c = 0; c < profile.clients; ++c) {
    streams.emplace_back(profile.seed, Rng::mix(kClientStream, static_cast<std::uint64_t>(c)));
    Rng& rng = streams.back();
    const double u = rng.normal();
    out.latent.push_back(u);
    ClientRecord rec;
    rec.id = "client-" + std::to_string(c + 1);
    const int tercile = u < -0.43 ? 0 : (u < 0.43 ? 1 : 2);
    rec.demographics.categorical = {rng.bernoulli(0.8) ? tercile : static_cast<int>(rng.index(3)),
                                    static_cast<int>(rng.index(2))};
    rec.demographics.numeric = {0.8 * u + 0.6 * rng.normal(), rng.normal()};
    const double draw = std::exp(std::log(profile.median_actions) + profile.length_sigma * rng.normal());
    const int n = std::clamp(static_cast<int>(std::lround(draw)), 1, profile.max_actions);
    n_actions[static_cast<std::size_t>(c)] = n;
    total += n;
    clients.push_back(std::move(rec));
  }

  std::vector<double> shares;
  for (const auto& a : profile.actions) shares.push_back(a.frequency);
  const auto counts = allocate(shares, total);
  std::vector<ActionId> pool;
  pool.reserve(static_cast<std::size_t>(total));
  for (int a = 1; a <= m; ++a) pool.insert(pool.end(), static_cast<std::size_t>(counts[static_cast<std::size_t>(a - 1)]), a);
  Rng pool_rng(profile.seed, kPoolStream);
  pool_rng.shuffle(pool);

  // Steps: responses depend on the previous action and the latent.
  std::size_t next = 0;
  std::vector<std::vector<double>> epsilon(clients.size());
  long response_total = 0;
  long step_total = 0;
  for (std::size_t c = 0; c < clients.size(); ++c) {
    Rng& rng = streams[c];
    auto& rec = clients[c];
    const double u = out.latent[c];
    const int n = n_actions[c];
    const double debt0 = sigmoid(0.5 * u + 0.5 * rng.normal());
    ActionId prev = kNoAction;
    for (int i = 1; i <= n + 1; ++i) {
      InteractionStep s;
      s.index = i;
      s.prev_action = prev;
      for (int code = 0; code < profile.n_responses; ++code) {
        const auto k = static_cast<std::size_t>(code);
        const double logit = world.responses.base[k] +
                             world.responses.by_prev[k][static_cast<std::size_t>(prev)] +
                             world.responses.latent[k] * u;
        if (rng.bernoulli(sigmoid(logit))) s.responses.push_back(code);
      }
      s.explicit_features = {debt0 * std::exp(-0.25 * (i - 1)), (i - 1) / 10.0, rng.uniform()};
      const ActionId taken = i <= n ? pool[next++] : kNoAction;
      for (int a = 1; a <= m; ++a) {
        if (a == taken || rng.bernoulli(0.5)) s.candidates.push_back(a);
      }
      if (s.candidates.empty()) s.candidates.push_back(1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(m))));
      if (i <= n) {
        epsilon[c].push_back(rng.normal());
        response_total += static_cast<long>(s.responses.size());
        ++step_total;
      }
      rec.steps.push_back(std::move(s));
      prev = taken;
    }
  }
  auto& oracle = world.oracle;
  oracle.response_mean = step_total > 0 ? static_cast<double>(response_total) / static_cast<double>(step_total) : 0.0;

  // Per-action calibration on the realised samples: the bias places exactly
  // the quota of noisy logits at or above 0, the low branch matches the mean.
  std::vector<std::vector<double>> shifted(static_cast<std::size_t>(m) + 1);
  for (std::size_t c = 0; c < clients.size(); ++c) {
    const auto& rec = clients[c];
    for (int i = 1; i < rec.length(); ++i) {
      const ActionId a = action_at(rec, i);
      const auto ctx = context_at(rec, i, out.latent[c]);
      shifted[static_cast<std::size_t>(a)].push_back(oracle_logit(oracle, ctx, a) +
                                                     oracle.noise * epsilon[c][static_cast<std::size_t>(i - 1)]);
    }
  }
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 1);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return profile.actions[static_cast<std::size_t>(x - 1)].high_share >
           profile.actions[static_cast<std::size_t>(y - 1)].high_share;
  });
  double ceiling = 2.0;
  double ceiling_target = 2.0;
  for (int a : order) {
    const auto& target = profile.actions[static_cast<std::size_t>(a - 1)];
    auto& xs = shifted[static_cast<std::size_t>(a)];
    if (xs.empty()) continue;
    const auto n = static_cast<long>(xs.size());
    long q = std::lround(target.high_share * static_cast<double>(n));
    // Keep realised shares strictly ordered wherever the targets are.
    if (target.high_share < ceiling_target) {
      while (q > 0 && static_cast<double>(q) / static_cast<double>(n) >= ceiling) --q;
    }
    std::vector<double> sorted = xs;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double bias;
    if (q == 0) {
      bias = -sorted.front() - 0.5;
    } else if (q == n) {
      bias = -sorted.back() + 0.5;
    } else {
      bias = -0.5 * (sorted[static_cast<std::size_t>(q - 1)] + sorted[static_cast<std::size_t>(q)]);
    }
    oracle.bias[static_cast<std::size_t>(a)] = bias;
    ceiling = static_cast<double>(q) / static_cast<double>(n);
    ceiling_target = target.high_share;

    for (double& x : xs) x += bias;
    // Shape sets how many low labels sit near zero; decay then matches the mean.
    double lo = std::log(0.25), hi = std::log(16.0);
    for (int iter = 0; iter < 30; ++iter) {
      const double mid = 0.5 * (lo + hi);
      const LabelShape fit(xs, std::exp(mid));
      (fit.share_below(fit.fit_decay(target.mean), kLowLabel) < kLowLabelShare ? lo : hi) = mid;
    }
    const double shape = std::exp(hi);
    const LabelShape fit(xs, shape);
    oracle.shape[static_cast<std::size_t>(a)] = shape;
    oracle.decay[static_cast<std::size_t>(a)] = fit.raw_decay(fit.fit_decay(target.mean), shape);
  }

  for (std::size_t c = 0; c < clients.size(); ++c) {
    auto& rec = clients[c];
    for (int i = 1; i <= rec.length(); ++i) {
      auto& s = rec.steps[static_cast<std::size_t>(i - 1)];
      const auto ctx = context_at(rec, i, out.latent[c]);
      for (ActionId a : s.candidates) s.candidate_rewards.push_back(oracle_reward(oracle, ctx, a));
      if (i < rec.length()) {
        const ActionId a = action_at(rec, i);
        s.true_reward = oracle_reward(oracle, ctx, a);
        s.reward = oracle_reward(oracle, ctx, a, epsilon[c][static_cast<std::size_t>(i - 1)]);
      }
    }
  }
  out.oracle = std::move(oracle);
  return out;
}

Dataset generate_dataset(const SynthProfile& profile) { return generate_world(profile).dataset; }

}  // namespace crn
