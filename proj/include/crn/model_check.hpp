#pragma once

#include <cstdint>
#include <vector>

#include "crn/domain.hpp"
#include "crn/layers.hpp"
#include "crn/model.hpp"
#include "crn/numerics.hpp"

namespace crn {

struct ModelGradCheckOptions {
  ModelKind kind = ModelKind::Crn;
  ModelDims dims{4, 4, 8, 4, 4};
  int sequence_length = 5;
  int batch = 3;
  std::uint64_t seed = 7;
  double h = 1e-5;
  double tolerance = 1e-4;
  Mode mode = Mode::Infer;
  // Weight matrices are redrawn from U(-scale/sqrt(fan_in), scale/sqrt(fan_in)).
  // Default-sized weights attenuate the encoder path so much that some
  // coordinates carry gradients below the finite-difference roundoff floor.
  double weight_scale = 2.0;
  // Draws with any ReLU pre-activation closer than this to zero are rejected.
  double kink_margin = 1e-2;
};

/// Small random dataset schema and clients used by gradient checks.
DatasetSchema gradcheck_schema();
std::vector<ClientRecord> random_clients(const DatasetSchema& schema, int count, int length,
                                         std::uint64_t seed);

/// Randomises batch-norm scale/shift and running statistics so gradient
/// checks exercise non-trivial normalisation.
void randomize_normalization(CrnModel& model, std::uint64_t seed);
void widen_weights(CrnModel& model, std::uint64_t seed, double scale);

/// Central-difference check of every parameter family of a randomly
/// initialised model under a squared-error loss over a small batch.
GradCheckReport model_gradcheck(const ModelGradCheckOptions& options);

}  // namespace crn
