#include "crn/model_check.hpp"

#include "crn/errors.hpp"
#include "crn/rng.hpp"
#include "model_internal.hpp"

#include <cmath>

namespace crn {

DatasetSchema gradcheck_schema() {
  DatasetSchema s;
  s.demographics.categorical_cardinalities = {3, 2};
  s.demographics.numeric_count = 2;
  s.n_responses = 4;
  s.n_actions = 5;
  s.explicit_width = 3;
  return s;
}

std::vector<ClientRecord> random_clients(const DatasetSchema& schema, int count, int length,
                                         std::uint64_t seed) {
  Rng rng(seed, 0xC11E);
  std::vector<ClientRecord> out;
  for (int c = 0; c < count; ++c) {
    ClientRecord rec;
    rec.id = "c" + std::to_string(c);
    for (int card : schema.demographics.categorical_cardinalities) {
      rec.demographics.categorical.push_back(static_cast<int>(rng.index(static_cast<std::uint64_t>(card))));
    }
    for (int f = 0; f < schema.demographics.numeric_count; ++f) {
      rec.demographics.numeric.push_back(rng.normal());
    }
    for (int i = 1; i <= length; ++i) {
      InteractionStep step;
      step.index = i;
      step.prev_action =
          i == 1 ? kNoAction : 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(schema.n_actions)));
      for (int r = 0; r < schema.n_responses; ++r) {
        if (rng.bernoulli(0.5)) step.responses.push_back(r);
      }
      if (i < length) step.reward = rng.uniform();
      for (int a = 1; a <= schema.n_actions; ++a) {
        if (rng.bernoulli(0.6)) step.candidates.push_back(a);
      }
      if (step.candidates.empty()) step.candidates.push_back(1);
      for (int f = 0; f < schema.explicit_width; ++f) step.explicit_features.push_back(rng.normal());
      rec.steps.push_back(std::move(step));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void randomize_normalization(CrnModel& model, std::uint64_t seed) {
  Rng rng(seed, 0xB0B);
  auto touch = [&](BatchNorm& bn) {
    for (Eigen::Index k = 0; k < bn.gamma.size(); ++k) {
      bn.gamma(k, 0) = rng.uniform(0.5, 1.5);
      bn.beta(k, 0) = rng.uniform(-0.5, 0.5);
      bn.running_mean[k] = rng.uniform(0.0, 0.5);
      bn.running_var[k] = rng.uniform(0.2, 1.5);
    }
  };
  touch(model.encoder.demographic.bn1);
  touch(model.encoder.demographic.bn2);
  touch(model.encoder.fusion.bn1);
  touch(model.encoder.fusion.bn2);
  for (auto& bn : model.head.norms) touch(bn);
  for (auto* affine : {&model.encoder.demographic.l1, &model.encoder.demographic.l2,
                       &model.encoder.demographic.l3, &model.encoder.implicit_proj,
                       &model.encoder.explicit_proj, &model.encoder.fusion.l1,
                       &model.encoder.fusion.l2, &model.encoder.fusion.l3, &model.head.blocks[0],
                       &model.head.blocks[1], &model.head.blocks[2], &model.head.output}) {
    for (Eigen::Index k = 0; k < affine->bias.size(); ++k) affine->bias(k, 0) = rng.uniform(-0.2, 0.2);
  }
  for (Eigen::Index k = 0; k < model.encoder.embedding.size(); ++k) {
    model.encoder.embedding.data()[k] = rng.uniform(-0.8, 0.8);
  }
}

void widen_weights(CrnModel& model, std::uint64_t seed, double scale) {
  Rng rng(seed, 0x5CA1E);
  for (const auto& p : model.parameters()) {
    const auto& name = p.name;
    const bool weight = name.ends_with("weight") || name.starts_with("cru.") ||
                        name.starts_with("gru.") || name == "encoder.response_projection";
    if (!weight) continue;
    const double bound = scale / std::sqrt(static_cast<double>(p.value->cols()));
    for (Eigen::Index k = 0; k < p.value->size(); ++k) p.value->data()[k] = rng.uniform(-bound, bound);
  }
}

namespace {

double min_abs(const Matrix& m) { return m.size() == 0 ? 1e300 : m.cwiseAbs().minCoeff(); }

/// Smallest |pre-activation| over every ReLU in the pass.
double kink_distance(const BatchPass& pass) {
  const auto& e = *pass.encode;
  double d = std::min({min_abs(e.demographic.pre1), min_abs(e.demographic.pre2),
                       min_abs(e.fusion.pre1), min_abs(e.fusion.pre2)});
  for (const auto& pre : pass.head->pre) d = std::min(d, min_abs(pre));
  return d;
}

}  // namespace

GradCheckReport model_gradcheck(const ModelGradCheckOptions& opt) {
  ModelConfig config;
  config.kind = opt.kind;
  config.dims = opt.dims;
  config.schema = gradcheck_schema();

  // ReLU is not differentiable at 0; draw configurations until every
  // pre-activation is at least kink_margin away from a kink so the
  // central difference never straddles one.
  constexpr int kMaxDraws = 512;
  for (int draw = 0; draw < kMaxDraws; ++draw) {
    const std::uint64_t seed = Rng::mix(opt.seed, static_cast<std::uint64_t>(draw));
    Rng rng(seed, 1);
    CrnModel model = CrnModel::create(config, rng);
    randomize_normalization(model, seed);
    widen_weights(model, seed, opt.weight_scale);

    const auto clients = random_clients(config.schema, opt.batch, opt.sequence_length, seed);
    std::vector<BatchItem> items;
    std::vector<double> targets;
    for (const auto& rec : clients) {
      BatchItem item;
      item.tuple = build_client_tuple(rec, rec.length());
      item.action =
          1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(config.schema.n_actions)));
      items.push_back(std::move(item));
      targets.push_back(rng.uniform());
    }

    const BatchPass pass = forward_batch(model, items, opt.mode);
    if (kink_distance(pass) < opt.kink_margin) continue;

    auto loss = [&]() {
      const BatchPass p = forward_batch(model, items, opt.mode);
      double total = 0.0;
      for (Eigen::Index b = 0; b < p.predictions.size(); ++b) {
        const double d = p.predictions[b] - targets[static_cast<std::size_t>(b)];
        total += d * d;
      }
      return total;
    };

    Vector d_pred(pass.predictions.size());
    for (Eigen::Index b = 0; b < d_pred.size(); ++b) {
      d_pred[b] = 2.0 * (pass.predictions[b] - targets[static_cast<std::size_t>(b)]);
    }
    CrnModel grad = model.zeros_like();
    backward_batch(model, pass, d_pred, grad);

    auto values = model.parameters();
    auto grads = grad.parameters();
    std::vector<GradCheckParam> params;
    for (std::size_t i = 0; i < values.size(); ++i) {
      params.push_back({values[i].name, values[i].value, grads[i].value});
    }
    return finite_diff_check(loss, params, opt.h, opt.tolerance);
  }
  throw NumericError("model_gradcheck: no kink-free configuration found");
}

}  // namespace crn
