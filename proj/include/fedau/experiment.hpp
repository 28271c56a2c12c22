#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedau/baselines.hpp"
#include "fedau/dataset.hpp"
#include "fedau/evaluation.hpp"
#include "fedau/federation.hpp"
#include "fedau/unlearning.hpp"

#include "nlohmann/json.hpp"

namespace fedau {

// Exit-code carriers: 2 for bad configs or inputs, 3 for artifacts a command
// needs but cannot find, 4 for a --strict-bounds refusal.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BoundRefusalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string kind = "synth";  // "synth" or "mnist"
  // synth
  int classes = 5;
  int train_per_class = 1000;
  int test_per_class = 250;
  int rows = 6;
  int cols = 6;
  double spread = 0.16;
  // mnist: directory holding the four idx files; empty means $FEDAU_MNIST_DIR
  std::string dir;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
};

struct BackdoorConfig {
  double proportion = 0.1;
  BackdoorSpec spec;
};

struct UnlearningConfig {
  UnlearningScope scope = UnlearningScope::Samples;
  std::vector<int> clients = {0};
  int target_class = -1;
  AuxMode aux_mode = AuxMode::Private;
  double alpha = 0.9;
  double beta = 1.0;
  double client_mix = 0.3;
  // Class scope: gather every training example of the target class at the
  // unlearning clients so retraining-from-scratch removes the class too.
  bool consolidate_class = true;
};

struct BaselineConfig {
  bool retraining = true;
  bool random_label = false;
  int finetune_epochs = 5;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 42;
  DatasetConfig dataset;
  int clients = 4;
  double gamma = kIidGamma;
  std::vector<std::size_t> hidden = {32, 16};
  int head_layers = 1;
  int rounds = 10;
  int local_epochs = 1;
  SgdConfig sgd;
  int aux_start_round = 1;
  int aux_epochs_per_round = 1;
  bool weight_by_examples = false;
  UnlearningConfig unlearning;
  BackdoorConfig backdoor;
  BaselineConfig baselines;
  std::string output_root = "out";
};

// Parse/serialize the JSON schema documented in the README. Parse errors say
// which field path is wrong ("federation.rounds: expected a positive
// integer"). Unknown keys are rejected so typos do not silently fall back to
// defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config_file(const std::filesystem::path& path);

std::vector<std::string> preset_names();
ExperimentConfig preset_config(const std::string& name);

const char* scope_name(UnlearningScope scope);
UnlearningScope scope_from_name(const std::string& name);

// Everything a training run consumes, assembled from a config: the poisoned /
// flagged client shards, the held-out test set, and the federation wiring.
struct RunData {
  std::vector<ClientDataset> clients;
  Dataset test;
  UnlearningPlan plan;
  FederationConfig fed;
  std::vector<LabeledExample> forget;     // flagged examples, client order
  std::vector<LabeledExample> remaining;  // unflagged training examples
};

RunData build_run_data(const ExperimentConfig& config);

struct MethodMetrics {
  std::string method;  // "fedavg", "fedau", "retraining", "random_label"
  double rm_acc = -1.0;
  double ul_acc = -1.0;
  double mia_acc = -1.0;
  double mia_recall = -1.0;
  double seconds = 0.0;
  std::uint64_t bytes = 0;
};

struct ExperimentResult {
  ExperimentConfig config;
  RunData data;
  TrainedArtifacts trained;
  Model unlearned;
  std::optional<Model> retrained;
  std::optional<Model> finetuned;
  std::vector<int> dropped_clients;
  std::vector<MethodMetrics> rows;
  double alpha_bound_value = 0.0;
  double beta_bound_value = -1.0;  // -1 when no aux head exists to bound
  RequirementReport requirements;
  double train_seconds = 0.0;
  double unlearn_seconds = 0.0;
  std::filesystem::path out_dir;  // empty for in-memory runs
};

// The full pipeline: train, combine, baselines, metrics. `out_dir`, when
// given, receives config.json, checkpoints/, data_cache/, rounds.jsonl,
// report.json, timings.json, and table.csv.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::filesystem::path* out_dir = nullptr);

// Resolves <output_root>/<name>/<timestamp>/ (FEDAU_OUT wins over the config
// root; `override_root` wins over both) and creates it.
std::filesystem::path make_output_dir(const ExperimentConfig& config,
                                      const std::string& override_root = "");

struct SweepRow {
  double value = 0.0;
  double ul_acc = -1.0;
  double rm_acc = -1.0;
};

// alpha/beta sweeps reuse one trained run and recombine; gamma, proportion,
// and aux_position retrain per value (aux_position reinterprets the value as
// the head depth). Baselines are skipped.
std::vector<SweepRow> run_sweep(const ExperimentConfig& config, const std::string& param,
                                const std::vector<double>& values);

// Command-line entry points. They throw the error types above; the binary
// maps them to exit codes.
struct TrainArgs {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out_root;
};
int cmd_train(const TrainArgs& args);

struct UnlearnArgs {
  std::string checkpoint_dir;
  std::string scope;  // empty keeps the trained config's scope
  std::optional<double> alpha;
  std::optional<double> beta;
  bool strict_bounds = false;
  bool verbose_report = false;
};
int cmd_unlearn(const UnlearnArgs& args);

struct EvalArgs {
  std::string checkpoint;  // run directory or .fauw file
  std::string dataset;     // cache stem or run directory (uses its test split)
};
int cmd_eval(const EvalArgs& args);

struct ExperimentArgs {
  std::string preset;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_root;
};
int cmd_experiment(const ExperimentArgs& args);

struct SweepArgs {
  std::string param;
  std::vector<double> values;
  std::string preset;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_root;
};
int cmd_sweep(const SweepArgs& args);

}  // namespace fedau
