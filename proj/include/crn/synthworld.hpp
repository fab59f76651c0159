#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crn/domain.hpp"

namespace crn {

struct ActionTarget {
  double frequency = 0.0;  // share of all assigned actions (normalised on use)
  double mean = 0.0;       // target mean reward label
  double stddev = 0.0;     // informational; not calibrated
  double high_share = 0.0; // target share of labels >= 0.5
};

struct SynthProfile {
  std::string name = "custom";
  std::vector<ActionTarget> actions;
  int n_responses = 6;
  int lag = 3;
  int clients = 5000;
  // Actions per client ~ round(lognormal(log(median), sigma)), clamped to
  // [1, max_actions].
  double median_actions = 4.0;
  double length_sigma = 1.3;
  int max_actions = 40;
  // Logit weights of the oracle.
  double lag_weight = 1.5;
  double debt_weight = 0.8;
  double latent_scale = 1.0;
  double response_scale = 0.5;
  double noise = 0.15;
  std::uint64_t seed = 1;

  void validate() const;
  DatasetSchema schema() const;
};

/// Named presets:
///  - "table1": the ten actions of the pilot table (frequency, mean, std,
///    high-reward share), lag 3.
///  - "markov": "table1" with lag 0, so history carries no reward signal.
///  - "skewed": five actions, the rarest at 1%, short sequences.
/// ProfileError for an unknown name.
SynthProfile make_profile(const std::string& name, std::uint64_t seed);
std::vector<std::string> profile_names();

/// The reward process. ell(a) = bias_a + beta_a * u + delta_a * (k - k_mean)
///   + debt_weight * debt + lag_weight * (-1)^(a + a_{i-L})   (last term only if L > 0;
/// a_{i-L} is 0 before the first action), reward = T_a(ell + noise * eps) with
/// T_a(x) = sigmoid(x) for x >= 0 and 0.5 * exp(-decay_a * (-x)^shape_a) below.
struct OracleSpec {
  int m = 0;
  int lag = 0;
  double lag_weight = 0.0;
  double debt_weight = 0.0;
  double noise = 0.0;
  double response_mean = 0.0;
  std::vector<double> bias;   // indexed by action, entry 0 unused
  std::vector<double> beta;
  std::vector<double> delta;
  std::vector<double> decay;
  std::vector<double> shape;
};

struct OracleContext {
  double latent = 0.0;
  std::vector<ActionId> history;  // a_1 .. a_{i-1}
  int response_count = 0;
  double debt = 0.0;
};

double oracle_logit(const OracleSpec& spec, const OracleContext& context, ActionId action);
double reward_transform(double x, double decay, double shape);
/// `epsilon` is a standard-normal draw, scaled by spec.noise.
double oracle_reward(const OracleSpec& spec, const OracleContext& context, ActionId action,
                     double epsilon = 0.0);

struct SynthWorld {
  Dataset dataset;
  OracleSpec oracle;
  std::vector<double> latent;  // per client
};

/// Deterministic per profile seed. Labels are calibrated per action so the
/// high-reward share and mean match the targets on the generated data.
SynthWorld generate_world(const SynthProfile& profile);
Dataset generate_dataset(const SynthProfile& profile);

}  // namespace crn
