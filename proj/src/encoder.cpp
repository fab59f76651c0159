#include "crn/encoder.hpp"

#include "crn/errors.hpp"
#include "model_internal.hpp"

namespace crn {

Vector embed_action(const EncoderParams& params, ActionId action) {
  if (action < 0 || action >= params.embedding.rows()) {
    throw RangeError("action id " + std::to_string(action) + " outside [0, " +
                     std::to_string(params.embedding.rows() - 1) + "]");
  }
  return params.embedding.row(action).transpose();
}

Vector multi_hot(const std::vector<int>& responses, int n_r) {
  Vector v = Vector::Zero(n_r);
  for (int code : responses) {
    if (code < 0 || code >= n_r) {
      throw RangeError("response code " + std::to_string(code) + " outside [0, " +
                       std::to_string(n_r) + ")");
    }
    v[code] = 1.0;
  }
  return v;
}

Vector encode_responses(const EncoderParams& params, const std::vector<int>& responses) {
  return params.response_projection *
         multi_hot(responses, static_cast<int>(params.response_projection.cols()));
}

Vector init_memory(const CrnModel& model, const Demographics& demographics) {
  ClientTuple tuple;
  tuple.demographics = demographics;
  const ClientTuple* ptr = &tuple;
  MlpCache cache;
  return mlp_forward(model.encoder.demographic,
                     demographics_matrix(model, std::span<const ClientTuple* const>(&ptr, 1)),
                     Mode::Infer, cache)
      .col(0);
}

StateVector encode_client(const CrnModel& model, const ClientTuple& tuple,
                          const std::string& client_id) {
  const ClientTuple* ptr = &tuple;
  EncodeCache cache;
  Matrix s = encode_forward(model, std::span<const ClientTuple* const>(&ptr, 1), Mode::Infer, cache);
  return {s.col(0), client_id, tuple.t()};
}

std::vector<Vector> encode_all_steps(const CrnModel& model, const ClientRecord& record) {
  const int len = record.length();
  std::vector<Vector> out;
  if (len == 0) return out;
  out.reserve(static_cast<std::size_t>(len));

  ClientTuple demo_only;
  demo_only.demographics = record.demographics;
  const ClientTuple* ptr = &demo_only;
  MlpCache demo_cache;
  const Matrix initial =
      mlp_forward(model.encoder.demographic,
                  demographics_matrix(model, std::span<const ClientTuple* const>(&ptr, 1)),
                  Mode::Infer, demo_cache);

  // Same primitives, shapes and order as run_memories on a batch of one, so
  // each prefix reproduces encode_client exactly.
  const auto& e = model.encoder;
  const int n_a = model.dims().n_a;
  const int n_o = model.dims().n_o;
  const int n_r = model.config.schema.n_responses;
  const int xw = std::max(1, model.config.schema.explicit_width);

  CruBatchState cru_state{Matrix::Zero(n_a, 1), initial};
  Matrix hidden(n_a + n_o, 1);
  hidden << Matrix::Zero(n_a, 1), initial;

  for (int i = 0; i < len; ++i) {
    const auto& step = record.steps[static_cast<std::size_t>(i)];
    const ActionId prev[1] = {i == 0 ? kNoAction : step.prev_action};
    const std::vector<int>* sets[1] = {&step.responses};
    const Matrix mh = multi_hot_matrix(sets, n_r);
    Matrix memory(model.memory_width(), 1);
    switch (model.kind()) {
      case ModelKind::MarkovMlp:
        memory << initial, e.response_projection * mh;
        break;
      case ModelKind::Crn: {
        const Matrix x_a = gather_embeddings(e, prev);
        const Matrix x_o = e.response_projection * mh;
        cru_state = cru_step_batch(model.cru, x_a, x_o, cru_state, nullptr);
        memory << cru_state.action, cru_state.response;
        break;
      }
      case ModelKind::Gru: {
        const Matrix x_a = gather_embeddings(e, prev);
        const Matrix x_o = e.response_projection * mh;
        Matrix x(n_a + n_o, 1);
        x << x_a, x_o;
        hidden = gru_step_batch(model.gru, x, hidden, nullptr);
        memory = hidden;
        break;
      }
    }
    if (static_cast<int>(step.explicit_features.size()) != model.config.schema.explicit_width) {
      throw SchemaError("client '" + record.id + "': explicit feature width differs from schema");
    }
    Matrix explicit_in = Matrix::Zero(xw, 1);
    for (std::size_t f = 0; f < step.explicit_features.size(); ++f) {
      explicit_in(static_cast<Eigen::Index>(f), 0) = step.explicit_features[f];
    }
    EncodeCache cache;
    out.push_back(fuse_states(model, memory, explicit_in, Mode::Infer, cache).col(0));
  }
  return out;
}

}  // namespace crn
