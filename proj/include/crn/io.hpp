#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "crn/domain.hpp"
#include "crn/model.hpp"
#include "crn/training.hpp"

namespace crn {

// Dataset files are JSONL: a header object
//   {"format":"crn-dataset","version":1,"demographics":{"categorical":[..],"numeric":n},
//    "n_responses":n_r,"n_actions":m,"explicit_width":n_x}
// then one ClientRecord object per line. Doubles are written in shortest
// round-trip form, so parse -> serialize -> parse is a fixed point.

std::string dataset_header_line(const DatasetSchema& schema);
std::string record_line(const ClientRecord& record);

void write_dataset(std::ostream& out, const Dataset& dataset);
/// DataError on malformed JSON, a missing or bad header, or a record that
/// fails validation against the header; the message names the line and the
/// record id.
Dataset read_dataset(std::istream& in);

void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

// Checkpoints are one JSON document:
//   format, version, config {kind, dims, schema}, training (optional echo),
//   scaler {mean, stddev}, buffers [{name, values}],
//   parameters [{name, rows, cols, values}] with values row-major.
// Parameters and buffers follow CrnModel::parameters() / buffers() order;
// loading checks every name and shape.

struct TrainingEcho {
  TrainConfig train;
  ImbalanceConfig imbalance;
};

std::string checkpoint_to_string(const CrnModel& model, const TrainingEcho* echo = nullptr);
CrnModel checkpoint_from_string(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const CrnModel& model,
                     const TrainingEcho* echo = nullptr);
CrnModel load_checkpoint(const std::filesystem::path& path);

/// Flat JSON object mirroring TrainConfig and ImbalanceConfig. Keys: kind,
/// n_a, n_o, n_s, n_imp, n_exp, batch_size, epochs, seed, learning_rate,
/// beta1, beta2, epsilon, validation_fraction, test_fraction, imbalance,
/// k_loss. ConfigError on an unknown key or a wrongly typed value.
void apply_config(const std::string& json_text, TrainConfig& train, ImbalanceConfig& imbalance);
void load_config(const std::filesystem::path& path, TrainConfig& train, ImbalanceConfig& imbalance);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace crn
