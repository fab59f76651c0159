#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "crn/cru.hpp"
#include "crn/domain.hpp"
#include "crn/gru.hpp"
#include "crn/layers.hpp"
#include "crn/numerics.hpp"

namespace crn {

class Rng;

/// Which client encoder feeds the shared fusion layers and reward head.
///  - Crn: demographic-initialised CRU over (action, response) pairs.
///  - Gru: one bias-free GRU over concatenated (action embedding, response
///    encoding) inputs, hidden width n_a + n_o.
///  - MarkovMlp: no history; demographics and the current response set only.
enum class ModelKind { Crn, Gru, MarkovMlp };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

struct ModelDims {
  int n_a = 16;
  int n_o = 32;
  int n_s = 32;
  int n_imp = 16;
  int n_exp = 16;
  bool operator==(const ModelDims&) const = default;
};

struct ModelConfig {
  ModelKind kind = ModelKind::Crn;
  ModelDims dims;
  DatasetSchema schema;
};

/// One-hot categoricals followed by standardised numerics. Mean and std are
/// fitted on the training clients and stored with the model.
struct DemographicScaler {
  std::vector<double> mean;
  std::vector<double> stddev;

  static DemographicScaler fit(const std::vector<ClientRecord>& clients,
                               const DemographicSchema& schema);
  static DemographicScaler identity(const DemographicSchema& schema);
  Vector encode(const Demographics& d, const DemographicSchema& schema) const;
};

struct EncoderParams {
  Matrix embedding;            // (m + 1) x n_a, row 0 = no-action token
  Matrix response_projection;  // n_o x n_r, bias-free
  Mlp demographic;             // encoded demographics -> n_o, tanh output
  Affine implicit_proj;        // terminal memories -> n_imp
  Affine explicit_proj;        // explicit features -> n_exp
  Mlp fusion;                  // n_imp + n_exp -> n_s
};

/// Three residual blocks x <- x + BN(ReLU(W x + b)) of width n_s + n_a,
/// then affine -> sigmoid.
struct RewardHead {
  std::array<Affine, 3> blocks;
  std::array<BatchNorm, 3> norms;
  Affine output;
};

struct CrnModel {
  ModelConfig config;
  DemographicScaler scaler;
  EncoderParams encoder;
  CruCell cru;  // used when kind == Crn
  GruCell gru;  // used when kind == Gru
  RewardHead head;

  static CrnModel create(const ModelConfig& config, Rng& rng);
  /// Same shapes, every parameter zero. Used as a gradient accumulator.
  CrnModel zeros_like() const;

  ModelKind kind() const { return config.kind; }
  const ModelDims& dims() const { return config.dims; }
  /// Width of the terminal memory fed to the implicit projection.
  int memory_width() const;
  int head_width() const { return dims().n_s + dims().n_a; }

  /// All learnable parameters in the fixed checkpoint order.
  std::vector<ParamRef> parameters();
  std::vector<ConstParamRef> parameters() const;
  std::vector<BufferRef> buffers();
};

/// One scoring request: the tuple C_t and the action whose reward is wanted.
struct BatchItem {
  ClientTuple tuple;
  ActionId action = kNoAction;
};

struct EncodeCache;
struct HeadCache;

/// Opaque record of a batched forward pass.
struct BatchPass {
  Mode mode = Mode::Infer;
  std::vector<const BatchItem*> items;
  Matrix states;       // n_s x B
  Vector predictions;  // B
  std::shared_ptr<EncodeCache> encode;
  std::shared_ptr<HeadCache> head;
};

BatchPass forward_batch(const CrnModel& model, std::span<const BatchItem> items, Mode mode);

/// Backpropagates d loss / d prediction (and optionally d loss / d state,
/// n_s x B) through the whole model, accumulating into `grad`.
void backward_batch(const CrnModel& model, const BatchPass& pass, const Vector& d_predictions,
                    CrnModel& grad, const Matrix* d_states = nullptr);

/// Folds the batch-norm statistics of a training pass into the model.
void commit_batch_statistics(CrnModel& model, const BatchPass& pass);

}  // namespace crn
