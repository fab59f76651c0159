#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crn/errors.hpp"
#include "crn/experiment.hpp"
#include "crn/io.hpp"
#include "crn/metrics.hpp"
#include "crn/model_check.hpp"
#include "crn/recommend.hpp"
#include "crn/synthworld.hpp"
#include "crn/training.hpp"

namespace {

using namespace crn;

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
}

struct TrainFlags {
  std::string data;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> kind;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<std::string> imbalance;

  void add(CLI::App* app, bool with_kind) {
    app->add_option("--data", data, "dataset (JSONL)")->required();
    app->add_option("--config", config, "flat JSON config mirroring the training options");
    app->add_option("--seed", seed, "run seed (split, init, batches)");
    if (with_kind) app->add_option("--kind", kind, "crn | gru | markov_mlp");
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--imbalance", imbalance, "none | all | comma list of action,sampling,reward,effectiveness");
  }

  // Config file first, then explicit flags on top.
  void resolve(TrainConfig& t, ImbalanceConfig& imb) const {
    if (!config.empty()) load_config(config, t, imb);
    if (seed) t.seed = *seed;
    if (kind) t.kind = parse_model_kind(*kind);
    if (epochs) t.epochs = *epochs;
    if (batch_size) t.batch_size = *batch_size;
    if (imbalance) {
      const int k = imb.k_loss;
      imb = ImbalanceConfig::parse(*imbalance);
      imb.k_loss = k;
    }
    t.validate();
  }
};

std::vector<ClientRecord> split_part(const Dataset& d, const std::string& part, const TrainConfig& t) {
  if (part == "all") return d.clients;
  const ClientSplit s = split_clients(d.clients.size(), t.seed, t.validation_fraction, t.test_fraction);
  if (part == "train") return select_clients(d.clients, s.train);
  if (part == "validation") return select_clients(d.clients, s.validation);
  return select_clients(d.clients, s.test);
}

void emit_metrics(const MetricsReport& m, const std::string& format, const std::string& csv_path) {
  if (format == "json") {
    std::cout << metrics_to_json(m) << '\n';
  } else if (format == "csv") {
    std::cout << metrics_to_csv(m);
  } else {
    std::cout << metrics_to_table(m);
  }
  if (!csv_path.empty()) write_text_file(csv_path, metrics_to_csv(m));
}

EpochCallback epoch_printer() {
  std::printf("epoch  train_loss    val_mse   seconds\n");
  return [](int epoch, double train_loss, double val, double seconds) {
    std::printf("%5d  %10.6f %10.6f %9.2f\n", epoch, train_loss, val, seconds);
    std::fflush(stdout);
  };
}

std::string history_csv(const TrainHistory& h) {
  std::ostringstream out;
  out << "epoch,train_loss,val_mse,seconds\n";
  char line[128];
  for (std::size_t i = 0; i < h.train_loss.size(); ++i) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.3f\n", i + 1, h.train_loss[i], h.val_loss[i], h.seconds[i]);
    out << line;
  }
  return out.str();
}

std::vector<ActionId> parse_action_list(const std::string& text) {
  std::vector<ActionId> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--candidates: '" + item + "' is not an action id");
    }
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Coupled recurrent network next-best-action toolkit"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  std::string profile = "table1";
  std::uint64_t sim_seed = 1;
  std::optional<int> sim_clients;
  std::string sim_out;
  sim->add_option("--profile", profile, "table1 | markov | skewed");
  sim->add_option("--seed", sim_seed);
  sim->add_option("--clients", sim_clients);
  sim->add_option("--out", sim_out, "output JSONL")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
  TrainFlags train_flags;
  train_flags.add(tr, true);
  std::string tr_out;
  std::string tr_history;
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--history", tr_history, "per-epoch CSV path");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "metrics of a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_out;
  std::string ev_split = "test";
  std::string ev_format = "table";
  std::uint64_t ev_seed = 1;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--split", ev_split, "all | train | validation | test (client split by --seed)")
      ->check(CLI::IsMember({"all", "train", "validation", "test"}));
  ev->add_option("--seed", ev_seed, "seed of the training split");
  ev->add_option("--format", ev_format)->check(CLI::IsMember({"table", "csv", "json"}));
  ev->add_option("--out", ev_out, "also write CSV here");

  // recommend
  auto* rec = app.add_subcommand("recommend", "rank candidate actions for one client");
  std::string rec_ckpt, rec_data, rec_client, rec_candidates;
  std::optional<int> rec_t;
  int rec_k = 1;
  std::string rec_format = "table";
  rec->add_option("--checkpoint", rec_ckpt)->required();
  rec->add_option("--data", rec_data, "dataset holding the client")->required();
  rec->add_option("--client", rec_client, "client id")->required();
  rec->add_option("--t", rec_t, "step (default: the client's last, open step)");
  rec->add_option("--candidates", rec_candidates, "comma list (default: the step's logged candidates)");
  rec->add_option("--k", rec_k);
  rec->add_option("--format", rec_format)->check(CLI::IsMember({"table", "json"}));

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every parameter family");
  ModelGradCheckOptions gopt;
  std::string gc_kind = "crn";
  gc->add_option("--seed", gopt.seed);
  gc->add_option("--kind", gc_kind);
  gc->add_option("--n-a", gopt.dims.n_a);
  gc->add_option("--n-o", gopt.dims.n_o);
  gc->add_option("--n-s", gopt.dims.n_s);
  gc->add_option("--length", gopt.sequence_length);
  gc->add_option("--tolerance", gopt.tolerance);

  // baseline
  auto* bl = app.add_subcommand("baseline", "train and evaluate a reduced baseline");
  TrainFlags bl_flags;
  bl_flags.add(bl, false);
  std::string bl_kind;
  std::string bl_ckpt, bl_out;
  std::string bl_format = "table";
  bl->add_option("--kind", bl_kind, "gru | markov_mlp")->required()->check(CLI::IsMember({"gru", "markov_mlp"}));
  bl->add_option("--checkpoint", bl_ckpt, "also save the trained baseline");
  bl->add_option("--format", bl_format)->check(CLI::IsMember({"table", "csv", "json"}));
  bl->add_option("--out", bl_out, "also write CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return kExitUsage;
  }

  if (*sim) {
    SynthProfile p = make_profile(profile, sim_seed);
    if (sim_clients) p.clients = *sim_clients;
    const Dataset d = generate_dataset(p);
    save_dataset(sim_out, d);
    std::size_t steps = labeled_steps(d.clients).size();
    std::printf("profile %s seed %llu: %zu clients, %zu labeled steps -> %s\n", p.name.c_str(),
                static_cast<unsigned long long>(sim_seed), d.clients.size(), steps, sim_out.c_str());
  } else if (*tr) {
    TrainConfig t;
    ImbalanceConfig imb;
    train_flags.resolve(t, imb);
    const Dataset d = load_dataset(train_flags.data);
    const TrainResult r = train(d, t, imb, epoch_printer());
    const TrainingEcho echo{t, imb};
    save_checkpoint(tr_out, r.model, &echo);
    if (!tr_history.empty()) write_text_file(tr_history, history_csv(r.history));
    std::printf("checkpoint -> %s\n", tr_out.c_str());
  } else if (*ev) {
    const CrnModel model = load_checkpoint(ev_ckpt);
    const Dataset d = load_dataset(ev_data);
    if (d.schema != model.config.schema) throw DataError("dataset schema does not match the checkpoint");
    TrainConfig t;
    t.seed = ev_seed;
    emit_metrics(evaluate_model(model, split_part(d, ev_split, t)), ev_format, ev_out);
  } else if (*rec) {
    const CrnModel model = load_checkpoint(rec_ckpt);
    const Dataset d = load_dataset(rec_data);
    if (d.schema != model.config.schema) throw DataError("dataset schema does not match the checkpoint");
    const ClientRecord* client = nullptr;
    for (const auto& c : d.clients) {
      if (c.id == rec_client) client = &c;
    }
    if (!client) throw DataError("client '" + rec_client + "' not found");
    const int t = rec_t.value_or(client->length());
    const ClientTuple tuple = build_client_tuple(*client, t);
    const auto candidates = rec_candidates.empty()
                                ? client->steps[static_cast<std::size_t>(t - 1)].candidates
                                : parse_action_list(rec_candidates);
    const Recommendation r = recommend_top_k(model, tuple, candidates, rec_k, client->id);
    if (rec_format == "json") {
      nlohmann::json j{{"client", r.client_id}, {"t", t}, {"ranked", nlohmann::json::array()}};
      for (const auto& [a, s] : r.ranked) j["ranked"].push_back({{"action", a}, {"score", s}});
      std::cout << j.dump() << '\n';
    } else {
      std::printf("client %s t=%d\nrank  action     score\n", r.client_id.c_str(), t);
      for (std::size_t i = 0; i < r.ranked.size(); ++i) {
        std::printf("%4zu  %6d  %.6f\n", i + 1, r.ranked[i].first, r.ranked[i].second);
      }
    }
  } else if (*gc) {
    gopt.kind = parse_model_kind(gc_kind);
    const GradCheckReport r = model_gradcheck(gopt);
    std::printf("%-40s %12s\n", "parameter", "max_rel_err");
    for (const auto& e : r.entries) std::printf("%-40s %12.3e\n", e.name.c_str(), e.max_rel_error);
    std::cout << nlohmann::json{{"pass", r.pass}, {"max_rel_error", r.max_rel_error}, {"tolerance", r.tolerance}}.dump()
              << '\n';
    return r.pass ? 0 : 1;
  } else if (*bl) {
    TrainConfig t;
    ImbalanceConfig imb;
    bl_flags.resolve(t, imb);
    const Dataset d = load_dataset(bl_flags.data);
    const ExperimentResult r = run_baseline(parse_model_kind(bl_kind), d, t, imb, epoch_printer());
    if (!bl_ckpt.empty()) {
      t.kind = r.model.kind();
      const TrainingEcho echo{t, imb};
      save_checkpoint(bl_ckpt, r.model, &echo);
    }
    emit_metrics(r.test, bl_format, bl_out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const crn::ConfigError& e) {
    print_error(e.kind(), e.what());
    return kExitUsage;
  } catch (const crn::Error& e) {
    print_error(e.kind(), e.what());
    return kExitData;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return kExitData;
  }
}
