#include "crn/io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "crn/errors.hpp"
#include "crn/rng.hpp"

namespace crn {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kDatasetFormat = "crn-dataset";
constexpr const char* kCheckpointFormat = "crn-checkpoint";
constexpr int kDatasetVersion = 1;
constexpr int kCheckpointVersion = 1;

ojson schema_json(const DatasetSchema& s) {
  ojson j;
  j["demographics"] = {{"categorical", s.demographics.categorical_cardinalities},
                       {"numeric", s.demographics.numeric_count}};
  j["n_responses"] = s.n_responses;
  j["n_actions"] = s.n_actions;
  j["explicit_width"] = s.explicit_width;
  return j;
}

DatasetSchema schema_from(const json& j) {
  DatasetSchema s;
  s.demographics.categorical_cardinalities =
      j.at("demographics").at("categorical").get<std::vector<int>>();
  s.demographics.numeric_count = j.at("demographics").at("numeric").get<int>();
  s.n_responses = j.at("n_responses").get<int>();
  s.n_actions = j.at("n_actions").get<int>();
  s.explicit_width = j.at("explicit_width").get<int>();
  if (s.n_responses < 1 || s.n_actions < 1 || s.explicit_width < 0 || s.demographics.numeric_count < 0) {
    throw DataError("schema sizes must be positive");
  }
  for (int c : s.demographics.categorical_cardinalities) {
    if (c < 1) throw DataError("categorical cardinalities must be positive");
  }
  return s;
}

ojson record_json(const ClientRecord& r) {
  ojson j;
  j["id"] = r.id;
  j["demographics"] = {{"categorical", r.demographics.categorical}, {"numeric", r.demographics.numeric}};
  ojson steps = ojson::array();
  for (const auto& s : r.steps) {
    ojson o;
    o["index"] = s.index;
    o["prev_action"] = s.prev_action;
    o["responses"] = s.responses;
    o["reward"] = s.reward ? ojson(*s.reward) : ojson(nullptr);
    o["candidates"] = s.candidates;
    o["explicit"] = s.explicit_features;
    if (!s.candidate_rewards.empty()) o["candidate_rewards"] = s.candidate_rewards;
    if (s.true_reward) o["true_reward"] = *s.true_reward;
    steps.push_back(std::move(o));
  }
  j["steps"] = std::move(steps);
  return j;
}

ClientRecord record_from(const json& j) {
  ClientRecord r;
  r.id = j.at("id").get<std::string>();
  r.demographics.categorical = j.at("demographics").at("categorical").get<std::vector<int>>();
  r.demographics.numeric = j.at("demographics").at("numeric").get<std::vector<double>>();
  for (const auto& o : j.at("steps")) {
    InteractionStep s;
    s.index = o.at("index").get<int>();
    s.prev_action = o.at("prev_action").get<int>();
    s.responses = o.at("responses").get<std::vector<int>>();
    if (o.contains("reward") && !o["reward"].is_null()) s.reward = o["reward"].get<double>();
    s.candidates = o.at("candidates").get<std::vector<int>>();
    s.explicit_features = o.at("explicit").get<std::vector<double>>();
    if (o.contains("candidate_rewards")) {
      s.candidate_rewards = o["candidate_rewards"].get<std::vector<double>>();
    }
    if (o.contains("true_reward") && !o["true_reward"].is_null()) s.true_reward = o["true_reward"].get<double>();
    r.steps.push_back(std::move(s));
  }
  return r;
}

std::vector<double> flatten(const Matrix& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) v[static_cast<std::size_t>(i * m.cols() + k)] = m(i, k);
  }
  return v;
}

ojson dims_json(const ModelDims& d) {
  return {{"n_a", d.n_a}, {"n_o", d.n_o}, {"n_s", d.n_s}, {"n_imp", d.n_imp}, {"n_exp", d.n_exp}};
}

ojson train_json(const TrainingEcho& e) {
  const auto& t = e.train;
  return {{"kind", to_string(t.kind)},
          {"dims", dims_json(t.dims)},
          {"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"seed", t.seed},
          {"learning_rate", t.adam.learning_rate},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"epsilon", t.adam.epsilon},
          {"validation_fraction", t.validation_fraction},
          {"test_fraction", t.test_fraction},
          {"imbalance", e.imbalance.to_string()},
          {"k_loss", e.imbalance.k_loss}};
}

}  // namespace

std::string dataset_header_line(const DatasetSchema& schema) {
  ojson j;
  j["format"] = kDatasetFormat;
  j["version"] = kDatasetVersion;
  const ojson body = schema_json(schema);
  for (const auto& [k, v] : body.items()) j[k] = v;
  return j.dump();
}

std::string record_line(const ClientRecord& record) { return record_json(record).dump(); }

void write_dataset(std::ostream& out, const Dataset& dataset) {
  out << dataset_header_line(dataset.schema) << '\n';
  for (const auto& r : dataset.clients) out << record_line(r) << '\n';
}

Dataset read_dataset(std::istream& in) {
  Dataset d;
  std::string line;
  long line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    if (!have_header) {
      if (!j.is_object() || j.value("format", "") != kDatasetFormat) {
        throw DataError("line " + std::to_string(line_no) + ": expected a crn-dataset header");
      }
      if (j.value("version", 0) != kDatasetVersion) {
        throw DataError("unsupported dataset version " + j.value("version", json(nullptr)).dump());
      }
      try {
        d.schema = schema_from(j);
      } catch (const json::exception& e) {
        throw DataError("header: " + std::string(e.what()));
      }
      d.schema.version = kDatasetVersion;
      have_header = true;
      continue;
    }
    const std::string where = "line " + std::to_string(line_no) + " (record " +
                              std::to_string(d.clients.size() + 1) + ")";
    ClientRecord r;
    try {
      r = record_from(j);
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    const auto problems = validate_record(r, d.schema);
    if (!problems.empty()) throw DataError(where + ": " + problems.front());
    d.clients.push_back(std::move(r));
  }
  if (!have_header) throw DataError("dataset is empty: no header line");
  return d;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ostringstream out;
  write_dataset(out, dataset);
  write_text_file(path, out.str());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return read_dataset(in);
}

std::string checkpoint_to_string(const CrnModel& model, const TrainingEcho* echo) {
  CrnModel copy = model;
  ojson j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = {{"kind", to_string(model.kind())},
                 {"dims", dims_json(model.dims())},
                 {"schema", schema_json(model.config.schema)}};
  if (echo) j["training"] = train_json(*echo);
  j["scaler"] = {{"mean", model.scaler.mean}, {"stddev", model.scaler.stddev}};
  ojson buffers = ojson::array();
  for (const auto& b : copy.buffers()) {
    buffers.push_back({{"name", b.name}, {"values", std::vector<double>(b.value->data(), b.value->data() + b.value->size())}});
  }
  j["buffers"] = std::move(buffers);
  ojson params = ojson::array();
  for (const auto& p : model.parameters()) {
    params.push_back({{"name", p.name},
                      {"rows", p.value->rows()},
                      {"cols", p.value->cols()},
                      {"values", flatten(*p.value)}});
  }
  j["parameters"] = std::move(params);
  return j.dump();
}

CrnModel checkpoint_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError("checkpoint: malformed JSON: " + std::string(e.what()));
  }
  try {
    if (j.value("format", "") != kCheckpointFormat) throw DataError("checkpoint: not a crn-checkpoint document");
    if (j.value("version", 0) != kCheckpointVersion) throw DataError("checkpoint: unsupported version");
    const auto& c = j.at("config");
    ModelConfig config;
    try {
      config.kind = parse_model_kind(c.at("kind").get<std::string>());
    } catch (const ConfigError& e) {
      throw DataError(std::string("checkpoint: ") + e.what());
    }
    const auto& d = c.at("dims");
    config.dims = {d.at("n_a").get<int>(), d.at("n_o").get<int>(), d.at("n_s").get<int>(),
                   d.at("n_imp").get<int>(), d.at("n_exp").get<int>()};
    config.schema = schema_from(c.at("schema"));
    Rng rng(0);
    CrnModel model = CrnModel::create(config, rng);
    model.scaler.mean = j.at("scaler").at("mean").get<std::vector<double>>();
    model.scaler.stddev = j.at("scaler").at("stddev").get<std::vector<double>>();
    if (model.scaler.mean.size() != model.scaler.stddev.size() ||
        static_cast<int>(model.scaler.mean.size()) != config.schema.demographics.numeric_count) {
      throw DataError("checkpoint: scaler width does not match the schema");
    }

    auto buffers = model.buffers();
    const auto& jb = j.at("buffers");
    if (jb.size() != buffers.size()) throw DataError("checkpoint: buffer count mismatch");
    for (std::size_t i = 0; i < buffers.size(); ++i) {
      if (jb[i].at("name").get<std::string>() != buffers[i].name) {
        throw DataError("checkpoint: expected buffer " + buffers[i].name);
      }
      const auto v = jb[i].at("values").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(v.size()) != buffers[i].value->size()) {
        throw DataError("checkpoint: buffer " + buffers[i].name + " has the wrong size");
      }
      for (std::size_t k = 0; k < v.size(); ++k) (*buffers[i].value)(static_cast<Eigen::Index>(k)) = v[k];
    }

    auto params = model.parameters();
    const auto& jp = j.at("parameters");
    if (jp.size() != params.size()) throw DataError("checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      Matrix& m = *params[i].value;
      if (jp[i].at("name").get<std::string>() != params[i].name) {
        throw DataError("checkpoint: expected parameter " + params[i].name);
      }
      if (jp[i].at("rows").get<Eigen::Index>() != m.rows() || jp[i].at("cols").get<Eigen::Index>() != m.cols()) {
        throw DataError("checkpoint: parameter " + params[i].name + " has the wrong shape");
      }
      const auto v = jp[i].at("values").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(v.size()) != m.size()) {
        throw DataError("checkpoint: parameter " + params[i].name + " has the wrong size");
      }
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index k = 0; k < m.cols(); ++k) m(r, k) = v[static_cast<std::size_t>(r * m.cols() + k)];
      }
    }
    return model;
  } catch (const json::exception& e) {
    throw DataError("checkpoint: " + std::string(e.what()));
  }
}

void save_checkpoint(const std::filesystem::path& path, const CrnModel& model, const TrainingEcho* echo) {
  write_text_file(path, checkpoint_to_string(model, echo) + "\n");
}

CrnModel load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_string(read_text_file(path));
}

void apply_config(const std::string& json_text, TrainConfig& t, ImbalanceConfig& imb) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError("config: malformed JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ConfigError("config: expected a flat JSON object");
  int k_loss = imb.k_loss;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "kind") t.kind = parse_model_kind(v.get<std::string>());
      else if (key == "n_a") t.dims.n_a = v.get<int>();
      else if (key == "n_o") t.dims.n_o = v.get<int>();
      else if (key == "n_s") t.dims.n_s = v.get<int>();
      else if (key == "n_imp") t.dims.n_imp = v.get<int>();
      else if (key == "n_exp") t.dims.n_exp = v.get<int>();
      else if (key == "batch_size") t.batch_size = v.get<int>();
      else if (key == "epochs") t.epochs = v.get<int>();
      else if (key == "seed") t.seed = v.get<std::uint64_t>();
      else if (key == "learning_rate") t.adam.learning_rate = v.get<double>();
      else if (key == "beta1") t.adam.beta1 = v.get<double>();
      else if (key == "beta2") t.adam.beta2 = v.get<double>();
      else if (key == "epsilon") t.adam.epsilon = v.get<double>();
      else if (key == "validation_fraction") t.validation_fraction = v.get<double>();
      else if (key == "test_fraction") t.test_fraction = v.get<double>();
      else if (key == "imbalance") imb = ImbalanceConfig::parse(v.get<std::string>());
      else if (key == "k_loss") k_loss = v.get<int>();
      else throw ConfigError("config: unknown key '" + key + "'");
    } catch (const json::exception&) {
      throw ConfigError("config: key '" + key + "' has the wrong type");
    }
  }
  if (k_loss < 0) throw ConfigError("config: k_loss must be >= 0");
  imb.k_loss = k_loss;
  t.validate();
}

void load_config(const std::filesystem::path& path, TrainConfig& train, ImbalanceConfig& imbalance) {
  apply_config(read_text_file(path), train, imbalance);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace crn
