#include "crn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "crn/errors.hpp"

namespace crn {

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string fmt(const std::optional<double>& v, const char* spec = "%.6f") {
  return v ? fmt(*v, spec) : std::string("nan");
}

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

double top_decile_mean(std::span<const double> predictions, std::span<const double> labels) {
  const std::size_t n = predictions.size();
  if (n == 0 || labels.size() != n) throw DataError("top_decile_mean: empty or misaligned input");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return predictions[a] > predictions[b]; });
  const double budget = 0.1 * static_cast<double>(n);
  double taken = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n && taken < budget;) {
    std::size_t j = i;
    double group = 0.0;
    while (j < n && predictions[idx[j]] == predictions[idx[i]]) group += labels[idx[j++]];
    const double size = static_cast<double>(j - i);
    const double share = std::min(size, budget - taken);
    total += group / size * share;
    taken += share;
    i = j;
  }
  return total / taken;
}

MetricsReport compute_metrics(std::span<const double> predictions, std::span<const double> labels,
                              std::span<const ActionId> actions, int m,
                              std::span<const double> model_rewards,
                              std::span<const double> logged_rewards) {
  const std::size_t n = predictions.size();
  if (n == 0) throw DataError("compute_metrics: no samples");
  if (labels.size() != n || actions.size() != n) {
    throw DataError("compute_metrics: predictions, labels and actions differ in length");
  }
  if (model_rewards.size() != logged_rewards.size()) {
    throw DataError("compute_metrics: model and logged reward lists differ in length");
  }

  MetricsReport r;
  r.samples = static_cast<long>(n);
  r.per_action.resize(static_cast<std::size_t>(m));
  for (int a = 1; a <= m; ++a) r.per_action[static_cast<std::size_t>(a - 1)].action = a;
  long positives = 0;
  long hits = 0;
  double sq_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const ActionId a = actions[i];
    if (a < 1 || a > m) throw RangeError("compute_metrics: action " + std::to_string(a) + " out of range");
    const double y = labels[i];
    if (!(y >= 0.0 && y <= 1.0)) throw RangeError("compute_metrics: label outside [0, 1]");
    auto& am = r.per_action[static_cast<std::size_t>(a - 1)];
    const double d = predictions[i] - y;
    ++am.count;
    am.mse += d * d;
    sq_total += d * d;
    if (y >= kHighReward) {
      ++am.positives;
      ++positives;
      if (predictions[i] >= kHighReward) {
        ++am.true_positives;
        ++hits;
      }
    }
  }
  int present = 0;
  for (auto& am : r.per_action) {
    if (am.count == 0) continue;
    am.mse /= static_cast<double>(am.count);
    if (am.positives > 0) am.precision = static_cast<double>(am.true_positives) / static_cast<double>(am.positives);
    r.action_avg += am.mse;
    ++present;
  }
  r.action_avg /= present;
  r.total_avg = sq_total / static_cast<double>(n);
  if (positives > 0) r.precision = static_cast<double>(hits) / static_cast<double>(positives);
  r.mean_reward = mean_of(labels);
  r.top_decile_reward = top_decile_mean(predictions, labels);
  if (!model_rewards.empty()) {
    r.model_reward = mean_of(model_rewards);
    r.logged_reward = mean_of(logged_rewards);
    if (*r.logged_reward > 0) r.reward_lift = *r.model_reward / *r.logged_reward;
  }
  return r;
}

std::string metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["samples"] = r.samples;
  j["total_avg"] = r.total_avg;
  j["action_avg"] = r.action_avg;
  j["precision"] = opt(r.precision);
  j["mean_reward"] = r.mean_reward;
  j["top_decile_reward"] = r.top_decile_reward;
  j["model_reward"] = opt(r.model_reward);
  j["logged_reward"] = opt(r.logged_reward);
  j["reward_lift"] = opt(r.reward_lift);
  auto& rows = j["per_action"] = nlohmann::json::array();
  for (const auto& am : r.per_action) {
    rows.push_back({{"action", am.action},
                    {"count", am.count},
                    {"mse", am.count > 0 ? nlohmann::json(am.mse) : nlohmann::json(nullptr)},
                    {"positives", am.positives},
                    {"precision", opt(am.precision)}});
  }
  return j.dump();
}

std::string metrics_to_csv(const MetricsReport& r) {
  std::ostringstream out;
  out << "action,count,mse,positives,precision\n";
  for (const auto& am : r.per_action) {
    out << "A" << am.action << ',' << am.count << ',' << (am.count ? fmt(am.mse, "%.17g") : "nan") << ','
        << am.positives << ',' << fmt(am.precision, "%.17g") << '\n';
  }
  out << "total_avg," << r.samples << ',' << fmt(r.total_avg, "%.17g") << ",,"
      << fmt(r.precision, "%.17g") << '\n';
  out << "action_avg,," << fmt(r.action_avg, "%.17g") << ",,\n";
  out << "top_decile_reward,," << fmt(r.top_decile_reward, "%.17g") << ",,\n";
  out << "reward_lift,," << fmt(r.reward_lift, "%.17g") << ",,\n";
  return out.str();
}

std::string metrics_to_table(const MetricsReport& r) {
  std::ostringstream out;
  out << "action      count        mse  positives  precision\n";
  for (const auto& am : r.per_action) {
    char line[128];
    std::snprintf(line, sizeof line, "A%-6d %9ld %10s %10ld %10s\n", am.action, am.count,
                  am.count ? fmt(am.mse).c_str() : "-", am.positives,
                  am.precision ? fmt(*am.precision, "%.4f").c_str() : "-");
    out << line;
  }
  out << "total_avg    " << fmt(r.total_avg) << "   action_avg " << fmt(r.action_avg) << '\n';
  out << "precision    " << fmt(r.precision, "%.4f") << "   top-decile reward "
      << fmt(r.top_decile_reward, "%.4f") << " (mean " << fmt(r.mean_reward, "%.4f") << ")\n";
  if (r.reward_lift) {
    out << "reward lift  " << fmt(*r.reward_lift, "%.4f") << "   (model " << fmt(r.model_reward, "%.4f")
        << " vs logged " << fmt(r.logged_reward, "%.4f") << ")\n";
  }
  return out.str();
}

}  // namespace crn
