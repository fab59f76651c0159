#include "crn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crn/encoder.hpp"
#include "crn/errors.hpp"
#include "crn/rng.hpp"
#include "model_internal.hpp"

namespace crn {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Crn: return "crn";
    case ModelKind::Gru: return "gru";
    case ModelKind::MarkovMlp: return "markov_mlp";
  }
  return "crn";
}

ModelKind parse_model_kind(const std::string& text) {
  if (text == "crn") return ModelKind::Crn;
  if (text == "gru") return ModelKind::Gru;
  if (text == "markov_mlp" || text == "markov") return ModelKind::MarkovMlp;
  throw ConfigError("unknown model kind '" + text + "' (expected crn, gru or markov_mlp)");
}

// ---------------------------------------------------------------------------
// Demographic scaling

DemographicScaler DemographicScaler::identity(const DemographicSchema& schema) {
  const auto n = static_cast<std::size_t>(schema.numeric_count);
  return {std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
}

DemographicScaler DemographicScaler::fit(const std::vector<ClientRecord>& clients,
                                         const DemographicSchema& schema) {
  auto s = identity(schema);
  if (clients.empty()) return s;
  const auto n = static_cast<std::size_t>(schema.numeric_count);
  std::vector<double> sum(n, 0.0), sq(n, 0.0);
  for (const auto& c : clients) {
    if (c.demographics.numeric.size() != n) {
      throw SchemaError("client '" + c.id + "': numeric demographic count differs from schema");
    }
    for (std::size_t f = 0; f < n; ++f) sum[f] += c.demographics.numeric[f];
  }
  const double count = static_cast<double>(clients.size());
  for (std::size_t f = 0; f < n; ++f) s.mean[f] = sum[f] / count;
  for (const auto& c : clients) {
    for (std::size_t f = 0; f < n; ++f) {
      const double d = c.demographics.numeric[f] - s.mean[f];
      sq[f] += d * d;
    }
  }
  for (std::size_t f = 0; f < n; ++f) {
    const double sd = std::sqrt(sq[f] / count);
    s.stddev[f] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

Vector DemographicScaler::encode(const Demographics& d, const DemographicSchema& schema) const {
  if (d.categorical.size() != schema.categorical_cardinalities.size() ||
      static_cast<int>(d.numeric.size()) != schema.numeric_count ||
      mean.size() != d.numeric.size()) {
    throw SchemaError("demographics do not match the declared schema");
  }
  Vector out = Vector::Zero(schema.encoded_width());
  Eigen::Index offset = 0;
  for (std::size_t f = 0; f < d.categorical.size(); ++f) {
    const int card = schema.categorical_cardinalities[f];
    const int v = d.categorical[f];
    if (v < 0 || v >= card) {
      throw SchemaError("categorical demographic field " + std::to_string(f) + " value " +
                        std::to_string(v) + " outside [0, " + std::to_string(card) + ")");
    }
    out[offset + v] = 1.0;
    offset += card;
  }
  for (std::size_t f = 0; f < d.numeric.size(); ++f) {
    out[offset + static_cast<Eigen::Index>(f)] = (d.numeric[f] - mean[f]) / stddev[f];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Construction and parameter enumeration

int CrnModel::memory_width() const {
  return kind() == ModelKind::MarkovMlp ? 2 * dims().n_o : dims().n_a + dims().n_o;
}

CrnModel CrnModel::create(const ModelConfig& config, Rng& rng) {
  const auto& d = config.dims;
  const auto& schema = config.schema;
  if (d.n_a < 1 || d.n_o < 1 || d.n_s < 1 || d.n_imp < 1 || d.n_exp < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  if (schema.n_actions < 1 || schema.n_responses < 1 || schema.explicit_width < 0) {
    throw ConfigError("dataset schema needs m >= 1 and n_r >= 1");
  }
  CrnModel m;
  m.config = config;
  m.scaler = DemographicScaler::identity(schema.demographics);

  auto& e = m.encoder;
  e.embedding = Matrix(schema.n_actions + 1, d.n_a);
  for (Eigen::Index k = 0; k < e.embedding.size(); ++k) {
    e.embedding.data()[k] = rng.uniform(-0.05, 0.05);
  }
  e.response_projection = Matrix(d.n_o, schema.n_responses);
  const double rb = std::sqrt(1.0 / schema.n_responses);
  for (Eigen::Index k = 0; k < e.response_projection.size(); ++k) {
    e.response_projection.data()[k] = rng.uniform(-rb, rb);
  }
  const int demo_in = std::max(1, schema.demographics.encoded_width());
  e.demographic = Mlp::random(demo_in, d.n_o, d.n_o, OutputActivation::Tanh, rng);

  if (config.kind == ModelKind::Crn) {
    m.cru = CruCell::random(d.n_a, d.n_o, rng);
  } else if (config.kind == ModelKind::Gru) {
    m.gru = GruCell::random(d.n_a + d.n_o, d.n_a + d.n_o, rng);
  }

  e.implicit_proj = Affine::random(m.memory_width(), d.n_imp, rng);
  e.explicit_proj = Affine::random(std::max(1, schema.explicit_width), d.n_exp, rng);
  e.fusion = Mlp::random(d.n_imp + d.n_exp, d.n_s, d.n_s, OutputActivation::Identity, rng);

  const int w = m.head_width();
  for (int k = 0; k < 3; ++k) {
    m.head.blocks[k] = Affine::random(w, w, rng);
    m.head.norms[k] = BatchNorm::identity(w);
  }
  m.head.output = Affine::random(w, 1, rng);
  return m;
}

CrnModel CrnModel::zeros_like() const {
  CrnModel g = *this;
  for (auto& p : g.parameters()) p.value->setZero();
  return g;
}

std::vector<ParamRef> CrnModel::parameters() {
  std::vector<ParamRef> out;
  out.push_back({"encoder.embedding", &encoder.embedding});
  out.push_back({"encoder.response_projection", &encoder.response_projection});
  encoder.demographic.collect("encoder.demographic.", out);
  if (kind() == ModelKind::Crn) {
    for (auto& p : cru.parameters("cru.")) out.push_back(p);
  } else if (kind() == ModelKind::Gru) {
    for (auto& p : gru.parameters("gru.")) out.push_back(p);
  }
  encoder.implicit_proj.collect("encoder.implicit.", out);
  encoder.explicit_proj.collect("encoder.explicit.", out);
  encoder.fusion.collect("encoder.fusion.", out);
  for (int k = 0; k < 3; ++k) {
    head.blocks[k].collect("head.block" + std::to_string(k) + ".", out);
    head.norms[k].collect("head.norm" + std::to_string(k) + ".", out);
  }
  head.output.collect("head.output.", out);
  return out;
}

std::vector<ConstParamRef> CrnModel::parameters() const {
  std::vector<ConstParamRef> out;
  for (auto& p : const_cast<CrnModel*>(this)->parameters()) out.push_back({p.name, p.value});
  return out;
}

std::vector<BufferRef> CrnModel::buffers() {
  std::vector<BufferRef> out;
  encoder.demographic.collect_buffers("encoder.demographic.", out);
  encoder.fusion.collect_buffers("encoder.fusion.", out);
  for (int k = 0; k < 3; ++k) head.norms[k].collect_buffers("head.norm" + std::to_string(k) + ".", out);
  return out;
}

// ---------------------------------------------------------------------------
// Encoder pass

Matrix demographics_matrix(const CrnModel& model, std::span<const ClientTuple* const> tuples) {
  const auto& schema = model.config.schema.demographics;
  const int width = std::max(1, schema.encoded_width());
  Matrix x = Matrix::Zero(width, static_cast<Eigen::Index>(tuples.size()));
  for (std::size_t b = 0; b < tuples.size(); ++b) {
    if (schema.encoded_width() > 0) {
      x.col(static_cast<Eigen::Index>(b)) = model.scaler.encode(tuples[b]->demographics, schema);
    }
  }
  return x;
}

Matrix gather_embeddings(const EncoderParams& e, std::span<const ActionId> ids) {
  Matrix x(e.embedding.cols(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t c = 0; c < ids.size(); ++c) {
    const ActionId id = ids[c];
    if (id < 0 || id >= e.embedding.rows()) {
      throw RangeError("action id " + std::to_string(id) + " outside [0, " +
                       std::to_string(e.embedding.rows() - 1) + "]");
    }
    x.col(static_cast<Eigen::Index>(c)) = e.embedding.row(id).transpose();
  }
  return x;
}

Matrix multi_hot_matrix(std::span<const std::vector<int>* const> sets, int n_r) {
  Matrix x = Matrix::Zero(n_r, static_cast<Eigen::Index>(sets.size()));
  for (std::size_t c = 0; c < sets.size(); ++c) {
    for (int code : *sets[c]) {
      if (code < 0 || code >= n_r) {
        throw RangeError("response code " + std::to_string(code) + " outside [0, " +
                         std::to_string(n_r) + ")");
      }
      x(code, static_cast<Eigen::Index>(c)) = 1.0;
    }
  }
  return x;
}

Matrix run_memories(const CrnModel& model, std::span<const ClientTuple* const> tuples,
                    const Matrix& initial, MemoryCache& keep) {
  const auto& e = model.encoder;
  const int n_a = model.dims().n_a;
  const int n_o = model.dims().n_o;
  const int n_r = model.config.schema.n_responses;
  const auto B = static_cast<Eigen::Index>(tuples.size());
  for (const ClientTuple* tuple : tuples) {
    if (tuple->t() < 1) throw DataError("client tuple has no response history");
    if (static_cast<int>(tuple->action_history.size()) != tuple->t() - 1) {
      throw ConsistencyError("client tuple action history must have t-1 entries");
    }
  }
  keep = MemoryCache{};
  Matrix memory(model.memory_width(), B);

  if (model.kind() == ModelKind::MarkovMlp) {
    std::vector<const std::vector<int>*> sets;
    for (const ClientTuple* tuple : tuples) sets.push_back(&tuple->response_history.back());
    keep.multi_hot.push_back(multi_hot_matrix(sets, n_r));
    memory << initial, e.response_projection * keep.multi_hot.back();
    return memory;
  }

  // Longest sequences first: at step j the still-running samples are the
  // leading k_j columns.
  keep.order.resize(tuples.size());
  std::iota(keep.order.begin(), keep.order.end(), Eigen::Index{0});
  std::stable_sort(keep.order.begin(), keep.order.end(), [&](Eigen::Index x, Eigen::Index y) {
    return tuples[static_cast<std::size_t>(x)]->t() > tuples[static_cast<std::size_t>(y)]->t();
  });
  auto sorted = [&](Eigen::Index p) -> const ClientTuple& {
    return *tuples[static_cast<std::size_t>(keep.order[static_cast<std::size_t>(p)])];
  };
  Matrix action_mem = Matrix::Zero(n_a, B);
  Matrix response_mem(n_o, B);
  for (Eigen::Index p = 0; p < B; ++p) response_mem.col(p) = initial.col(keep.order[static_cast<std::size_t>(p)]);
  Matrix hidden;
  if (model.kind() == ModelKind::Gru) {
    hidden.resize(n_a + n_o, B);
    hidden << action_mem, response_mem;
  }

  const int steps = sorted(0).t();
  Eigen::Index k = B;
  for (int j = 0; j < steps; ++j) {
    while (k > 0 && sorted(k - 1).t() <= j) --k;
    std::vector<ActionId> prev(static_cast<std::size_t>(k));
    std::vector<const std::vector<int>*> sets(static_cast<std::size_t>(k));
    for (Eigen::Index p = 0; p < k; ++p) {
      const auto& tuple = sorted(p);
      prev[static_cast<std::size_t>(p)] = j == 0 ? kNoAction : tuple.action_history[static_cast<std::size_t>(j - 1)];
      sets[static_cast<std::size_t>(p)] = &tuple.response_history[static_cast<std::size_t>(j)];
    }
    const Matrix x_a = gather_embeddings(e, prev);
    Matrix mh = multi_hot_matrix(sets, n_r);
    const Matrix x_o = e.response_projection * mh;
    if (model.kind() == ModelKind::Crn) {
      keep.cru.emplace_back();
      const CruBatchState state{action_mem.leftCols(k), response_mem.leftCols(k)};
      const CruBatchState next = cru_step_batch(model.cru, x_a, x_o, state, &keep.cru.back());
      action_mem.leftCols(k) = next.action;
      response_mem.leftCols(k) = next.response;
    } else {
      keep.gru.emplace_back();
      Matrix x(n_a + n_o, k);
      x << x_a, x_o;
      hidden.leftCols(k) = gru_step_batch(model.gru, x, hidden.leftCols(k), &keep.gru.back());
    }
    keep.active.push_back(k);
    keep.prev.push_back(std::move(prev));
    keep.multi_hot.push_back(std::move(mh));
  }

  for (Eigen::Index p = 0; p < B; ++p) {
    const Eigen::Index b = keep.order[static_cast<std::size_t>(p)];
    if (model.kind() == ModelKind::Crn) {
      memory.col(b) << action_mem.col(p), response_mem.col(p);
    } else {
      memory.col(b) = hidden.col(p);
    }
  }
  return memory;
}

Matrix backward_memories(const CrnModel& model, const MemoryCache& c, const Matrix& d_memory,
                         CrnModel& g) {
  auto& ge = g.encoder;
  const int n_a = model.dims().n_a;
  const int n_o = model.dims().n_o;
  const auto B = d_memory.cols();

  if (model.kind() == ModelKind::MarkovMlp) {
    ge.response_projection.noalias() += d_memory.bottomRows(n_o) * c.multi_hot.back().transpose();
    return d_memory.topRows(n_o);
  }

  Matrix d_sorted(d_memory.rows(), B);
  for (Eigen::Index p = 0; p < B; ++p) d_sorted.col(p) = d_memory.col(c.order[static_cast<std::size_t>(p)]);
  Matrix d_action = d_sorted.topRows(n_a);
  Matrix d_response = d_sorted.bottomRows(n_o);
  Matrix d_hidden = d_sorted;

  for (std::size_t j = c.active.size(); j-- > 0;) {
    const Eigen::Index k = c.active[j];
    Matrix d_xa;
    Matrix d_xo;
    if (model.kind() == ModelKind::Crn) {
      const CruBatchState grad_next{d_action.leftCols(k), d_response.leftCols(k)};
      auto step = cru_backward_batch(model.cru, c.cru[j], grad_next, g.cru);
      d_action.leftCols(k) = step.prev.action;
      d_response.leftCols(k) = step.prev.response;
      d_xa = std::move(step.action_in);
      d_xo = std::move(step.response_in);
    } else {
      auto step = gru_backward_batch(model.gru, c.gru[j], d_hidden.leftCols(k), g.gru);
      d_hidden.leftCols(k) = step.prev;
      d_xa = step.input.topRows(n_a);
      d_xo = step.input.bottomRows(n_o);
    }
    for (Eigen::Index p = 0; p < k; ++p) {
      ge.embedding.row(c.prev[j][static_cast<std::size_t>(p)]) += d_xa.col(p).transpose();
    }
    ge.response_projection.noalias() += d_xo * c.multi_hot[j].transpose();
  }

  Matrix d_initial(n_o, B);
  for (Eigen::Index p = 0; p < B; ++p) {
    const Eigen::Index b = c.order[static_cast<std::size_t>(p)];
    d_initial.col(b) = model.kind() == ModelKind::Crn ? Matrix(d_response.col(p)) : Matrix(d_hidden.col(p).tail(n_o));
  }
  return d_initial;
}

Matrix fuse_states(const CrnModel& model, const Matrix& memory, const Matrix& explicit_in,
                   Mode mode, EncodeCache& c) {
  const auto& e = model.encoder;
  c.memory = memory;
  c.explicit_in = explicit_in;
  const Matrix s_imp = e.implicit_proj.forward(memory);
  const Matrix s_exp = e.explicit_proj.forward(explicit_in);
  c.fusion_in.resize(s_imp.rows() + s_exp.rows(), memory.cols());
  c.fusion_in << s_imp, s_exp;
  c.states = mlp_forward(e.fusion, c.fusion_in, mode, c.fusion);
  return c.states;
}

Matrix encode_forward(const CrnModel& model, std::span<const ClientTuple* const> tuples, Mode mode,
                      EncodeCache& c) {
  const auto B = static_cast<Eigen::Index>(tuples.size());
  if (B == 0) throw DataError("empty batch");
  c.mode = mode;
  c.tuples.assign(tuples.begin(), tuples.end());
  c.initial = mlp_forward(model.encoder.demographic, demographics_matrix(model, tuples), mode,
                          c.demographic);

  const int xw = std::max(1, model.config.schema.explicit_width);
  const Matrix memory = run_memories(model, tuples, c.initial, c.unroll);
  Matrix explicit_in = Matrix::Zero(xw, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& x = tuples[static_cast<std::size_t>(b)]->explicit_features;
    if (static_cast<int>(x.size()) != model.config.schema.explicit_width) {
      throw SchemaError("explicit feature width " + std::to_string(x.size()) +
                        " differs from schema width " +
                        std::to_string(model.config.schema.explicit_width));
    }
    for (std::size_t f = 0; f < x.size(); ++f) explicit_in(static_cast<Eigen::Index>(f), b) = x[f];
  }
  return fuse_states(model, memory, explicit_in, mode, c);
}

void encode_backward(const CrnModel& model, const EncodeCache& c, const Matrix& d_states,
                     CrnModel& g) {
  const auto& e = model.encoder;
  auto& ge = g.encoder;
  const int n_imp = model.dims().n_imp;

  const Matrix d_fusion_in = mlp_backward(e.fusion, c.fusion, d_states, ge.fusion);
  const Matrix d_imp = d_fusion_in.topRows(n_imp);
  const Matrix d_exp = d_fusion_in.bottomRows(d_fusion_in.rows() - n_imp);
  e.explicit_proj.backward(c.explicit_in, d_exp, ge.explicit_proj);
  const Matrix d_memory = e.implicit_proj.backward(c.memory, d_imp, ge.implicit_proj);

  const Matrix d_initial = backward_memories(model, c.unroll, d_memory, g);
  mlp_backward(e.demographic, c.demographic, d_initial, ge.demographic);
}

// ---------------------------------------------------------------------------
// Reward head pass

Matrix head_forward(const CrnModel& model, const Matrix& states, std::span<const ActionId> actions,
                    Mode mode, HeadCache& c) {
  const auto B = states.cols();
  if (static_cast<std::size_t>(B) != actions.size()) {
    throw DimensionError("reward head: state count differs from action count");
  }
  const int n_s = model.dims().n_s;
  const int n_a = model.dims().n_a;
  c.mode = mode;
  c.actions.assign(actions.begin(), actions.end());
  c.z[0].resize(n_s + n_a, B);
  c.z[0].topRows(n_s) = states;
  for (Eigen::Index b = 0; b < B; ++b) {
    const ActionId a = actions[static_cast<std::size_t>(b)];
    if (a < 1 || a > model.config.schema.n_actions) {
      throw RangeError("reward head: action " + std::to_string(a) + " outside [1, " +
                       std::to_string(model.config.schema.n_actions) + "]");
    }
    c.z[0].block(n_s, b, n_a, 1) = model.encoder.embedding.row(a).transpose();
  }
  for (int k = 0; k < 3; ++k) {
    c.pre[k] = model.head.blocks[k].forward(c.z[k]);
    c.act[k] = relu(c.pre[k]);
    c.z[k + 1] = c.z[k] + batchnorm_forward(model.head.norms[k], c.act[k], mode, c.norm[k]);
  }
  c.probs = model.head.output.forward(c.z[3]).unaryExpr([](double v) { return sigmoid(v); });
  return c.probs;
}

Matrix head_backward(const CrnModel& model, const HeadCache& c, const Vector& d_predictions,
                     CrnModel& g) {
  const int n_s = model.dims().n_s;
  const int n_a = model.dims().n_a;
  const Matrix d_logit = d_predictions.transpose().cwiseProduct(
      c.probs.cwiseProduct((1.0 - c.probs.array()).matrix()));
  Matrix dz = model.head.output.backward(c.z[3], d_logit, g.head.output);
  for (int k = 2; k >= 0; --k) {
    Matrix d = batchnorm_backward(model.head.norms[k], c.norm[k], dz, g.head.norms[k]);
    d = relu_backward(c.pre[k], d);
    dz += model.head.blocks[k].backward(c.z[k], d, g.head.blocks[k]);
  }
  for (Eigen::Index b = 0; b < dz.cols(); ++b) {
    g.encoder.embedding.row(c.actions[static_cast<std::size_t>(b)]) +=
        dz.block(n_s, b, n_a, 1).transpose();
  }
  return dz.topRows(n_s);
}

// ---------------------------------------------------------------------------
// Whole-model pass

BatchPass forward_batch(const CrnModel& model, std::span<const BatchItem> items, Mode mode) {
  BatchPass pass;
  pass.mode = mode;
  std::vector<const ClientTuple*> tuples;
  std::vector<ActionId> actions;
  for (const auto& item : items) {
    pass.items.push_back(&item);
    tuples.push_back(&item.tuple);
    actions.push_back(item.action);
  }
  pass.encode = std::make_shared<EncodeCache>();
  pass.head = std::make_shared<HeadCache>();
  pass.states = encode_forward(model, tuples, mode, *pass.encode);
  const Matrix probs = head_forward(model, pass.states, actions, mode, *pass.head);
  pass.predictions = probs.row(0).transpose();
  return pass;
}

void backward_batch(const CrnModel& model, const BatchPass& pass, const Vector& d_predictions,
                    CrnModel& grad, const Matrix* d_states) {
  if (d_predictions.size() != pass.predictions.size()) {
    throw DimensionError("backward_batch: gradient length differs from batch size");
  }
  Matrix ds = head_backward(model, *pass.head, d_predictions, grad);
  if (d_states) {
    if (d_states->rows() != ds.rows() || d_states->cols() != ds.cols()) {
      throw DimensionError("backward_batch: state gradient has the wrong shape");
    }
    ds += *d_states;
  }
  encode_backward(model, *pass.encode, ds, grad);
}

void commit_batch_statistics(CrnModel& model, const BatchPass& pass) {
  if (pass.mode != Mode::Train) return;
  update_running_stats(model.encoder.demographic, pass.encode->demographic);
  update_running_stats(model.encoder.fusion, pass.encode->fusion);
  const auto B = pass.predictions.size();
  for (int k = 0; k < 3; ++k) update_running_stats(model.head.norms[k], pass.head->norm[k], B);
}

}  // namespace crn
