#include "fedau/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "fedau/checkpoint.hpp"
#include "fedau/rng.hpp"

namespace fs = std::filesystem;

namespace fedau {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + path + ": " + what);
}

std::string join_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(path.empty() ? "config" : path, "expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) fail(join_path(path, item.key()), "unknown field");
  }
}

const json* find(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return nullptr;
  return &*it;
}

long long get_int(const json& j, const char* key, long long def, const std::string& parent,
                  long long min_v, long long max_v = std::numeric_limits<int>::max()) {
  const json* v = find(j, key);
  if (!v) return def;
  if (!v->is_number_integer() && !v->is_number_unsigned())
    fail(join_path(parent, key), "expected an integer");
  long long x = v->get<long long>();
  if (x < min_v || x > max_v)
    fail(join_path(parent, key),
         "must be in [" + std::to_string(min_v) + ", " + std::to_string(max_v) + "]");
  return x;
}

double get_num(const json& j, const char* key, double def, const std::string& parent) {
  const json* v = find(j, key);
  if (!v) return def;
  if (!v->is_number()) fail(join_path(parent, key), "expected a number");
  return v->get<double>();
}

bool get_bool(const json& j, const char* key, bool def, const std::string& parent) {
  const json* v = find(j, key);
  if (!v) return def;
  if (!v->is_boolean()) fail(join_path(parent, key), "expected true or false");
  return v->get<bool>();
}

std::string get_str(const json& j, const char* key, const std::string& def,
                    const std::string& parent) {
  const json* v = find(j, key);
  if (!v) return def;
  if (!v->is_string()) fail(join_path(parent, key), "expected a string");
  return v->get<std::string>();
}

const char* aux_mode_name(AuxMode mode) {
  return mode == AuxMode::Private ? "private" : "collaborative";
}

AuxMode aux_mode_from_name(const std::string& name) {
  if (name == "private") return AuxMode::Private;
  if (name == "collaborative") return AuxMode::Collaborative;
  throw ConfigError("config: unlearning.aux_mode: expected \"private\" or \"collaborative\", got \"" +
                    name + "\"");
}

int class_count_of(const ExperimentConfig& c) {
  return c.dataset.kind == "mnist" ? 10 : c.dataset.classes;
}

int rows_of(const ExperimentConfig& c) { return c.dataset.kind == "mnist" ? 28 : c.dataset.rows; }
int cols_of(const ExperimentConfig& c) { return c.dataset.kind == "mnist" ? 28 : c.dataset.cols; }

void validate_experiment_config(const ExperimentConfig& c) {
  if (c.name.empty()) fail("name", "must not be empty");
  for (char ch : c.name) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.')
      fail("name", "only letters, digits, '-', '_', '.' are allowed");
  }
  if (c.name[0] == '.') fail("name", "must not start with '.'");

  if (c.dataset.kind != "synth" && c.dataset.kind != "mnist")
    fail("dataset.kind", "expected \"synth\" or \"mnist\"");
  if (c.dataset.kind == "synth") {
    if (c.dataset.classes < 2) fail("dataset.classes", "need at least 2 classes");
    if (c.dataset.train_per_class < 1) fail("dataset.train_per_class", "must be positive");
    if (c.dataset.test_per_class < 1) fail("dataset.test_per_class", "must be positive");
    if (c.dataset.rows < 1 || c.dataset.cols < 1) fail("dataset.rows", "grid must be positive");
    if (!(c.dataset.spread >= 0.0) || !std::isfinite(c.dataset.spread))
      fail("dataset.spread", "must be finite and >= 0");
  }

  if (c.clients < 1) fail("partition.clients", "must be positive");
  if (std::isnan(c.gamma) || c.gamma <= 0.0)
    fail("partition.gamma", "must be positive (or \"iid\")");

  for (std::size_t h : c.hidden)
    if (h == 0) fail("model.hidden", "layer widths must be positive");
  int layer_count = static_cast<int>(c.hidden.size()) + 1;
  if (c.head_layers < 1 || c.head_layers > layer_count)
    fail("model.head_layers",
         "must be in [1, " + std::to_string(layer_count) + "] for this hidden stack");

  if (c.rounds < 1) fail("federation.rounds", "must be positive");
  if (c.local_epochs < 1) fail("federation.local_epochs", "must be positive");
  if (c.sgd.batch_size < 1) fail("federation.batch_size", "must be positive");
  if (!(c.sgd.learning_rate >= 0.0) || !std::isfinite(c.sgd.learning_rate))
    fail("federation.learning_rate", "must be finite and >= 0");
  if (!(c.sgd.weight_decay >= 0.0) || !std::isfinite(c.sgd.weight_decay))
    fail("federation.weight_decay", "must be finite and >= 0");
  if (c.aux_start_round < 1) fail("federation.aux_start_round", "must be positive");
  if (c.aux_epochs_per_round < 1) fail("federation.aux_epochs_per_round", "must be positive");

  const UnlearningConfig& u = c.unlearning;
  if (u.clients.empty()) fail("unlearning.clients", "need at least one unlearning client");
  for (std::size_t i = 0; i < u.clients.size(); ++i) {
    if (u.clients[i] < 0 || u.clients[i] >= c.clients)
      fail("unlearning.clients", "client id " + std::to_string(u.clients[i]) +
                                     " out of range for " + std::to_string(c.clients) + " clients");
    if (i > 0 && u.clients[i] <= u.clients[i - 1])
      fail("unlearning.clients", "ids must be strictly ascending");
  }
  if (!(u.alpha > 0.0) || u.alpha > 1.0) fail("unlearning.alpha", "must be in (0, 1]");
  if (!(u.beta >= 0.0) || !std::isfinite(u.beta)) fail("unlearning.beta", "must be finite and >= 0");
  if (!(u.client_mix >= 0.0) || u.client_mix > 1.0)
    fail("unlearning.client_mix", "must be in [0, 1]");
  if (u.scope == UnlearningScope::Class) {
    if (u.target_class < 0 || u.target_class >= class_count_of(c))
      fail("unlearning.target_class", "must name a class of the dataset");
    if (u.aux_mode == AuxMode::Collaborative)
      fail("unlearning.aux_mode", "collaborative aggregation is undefined for class scope");
  }

  if (u.scope != UnlearningScope::Class) {
    const BackdoorConfig& b = c.backdoor;
    if (!(b.proportion > 0.0) || b.proportion > 1.0)
      fail("backdoor.proportion", "must be in (0, 1]");
    if (b.spec.patch_rows < 1 || b.spec.patch_rows > rows_of(c))
      fail("backdoor.patch_rows", "patch must fit the image rows");
    if (b.spec.patch_cols < 1 || b.spec.patch_cols > cols_of(c))
      fail("backdoor.patch_cols", "patch must fit the image columns");
    if (!(b.spec.patch_value >= 0.0f) || b.spec.patch_value > 1.0f)
      fail("backdoor.patch_value", "must be in [0, 1]");
    if (b.spec.target_label < 0 || b.spec.target_label >= class_count_of(c))
      fail("backdoor.target_label", "must name a class of the dataset");
  }

  if (c.baselines.finetune_epochs < 0) fail("baselines.finetune_epochs", "must be >= 0");
  if (c.output_root.empty()) fail("output_root", "must not be empty");
}

std::uint64_t get_seed(const json& j, const std::string& parent) {
  const json* v = find(j, "seed");
  if (!v) return 42;
  if (v->is_number_unsigned()) return v->get<std::uint64_t>();
  if (v->is_number_integer()) {
    long long x = v->get<long long>();
    if (x >= 0) return static_cast<std::uint64_t>(x);
  }
  fail(join_path(parent, "seed"), "expected a non-negative integer");
}

}  // namespace

const char* scope_name(UnlearningScope scope) {
  switch (scope) {
    case UnlearningScope::Samples: return "samples";
    case UnlearningScope::Class: return "class";
    case UnlearningScope::Client: return "client";
  }
  return "samples";
}

UnlearningScope scope_from_name(const std::string& name) {
  if (name == "samples") return UnlearningScope::Samples;
  if (name == "class") return UnlearningScope::Class;
  if (name == "client") return UnlearningScope::Client;
  throw ConfigError("config: unlearning.scope: expected \"samples\", \"class\", or \"client\", got \"" +
                    name + "\"");
}

ExperimentConfig config_from_json(const json& j) {
  check_keys(j, "", {"schema", "name", "seed", "dataset", "partition", "model", "federation",
                     "unlearning", "backdoor", "baselines", "output_root"});
  if (long long schema = get_int(j, "schema", 1, "", 1, 1); schema != 1)
    fail("schema", "unsupported schema version");

  ExperimentConfig c;
  c.name = get_str(j, "name", c.name, "");
  c.seed = get_seed(j, "");
  c.output_root = get_str(j, "output_root", c.output_root, "");

  if (const json* d = find(j, "dataset")) {
    check_keys(*d, "dataset",
               {"kind", "classes", "train_per_class", "test_per_class", "rows", "cols", "spread",
                "dir", "train_limit", "test_limit"});
    c.dataset.kind = get_str(*d, "kind", c.dataset.kind, "dataset");
    c.dataset.classes = static_cast<int>(get_int(*d, "classes", c.dataset.classes, "dataset", 1));
    c.dataset.train_per_class =
        static_cast<int>(get_int(*d, "train_per_class", c.dataset.train_per_class, "dataset", 1));
    c.dataset.test_per_class =
        static_cast<int>(get_int(*d, "test_per_class", c.dataset.test_per_class, "dataset", 1));
    c.dataset.rows = static_cast<int>(get_int(*d, "rows", c.dataset.rows, "dataset", 1));
    c.dataset.cols = static_cast<int>(get_int(*d, "cols", c.dataset.cols, "dataset", 1));
    c.dataset.spread = get_num(*d, "spread", c.dataset.spread, "dataset");
    c.dataset.dir = get_str(*d, "dir", c.dataset.dir, "dataset");
    c.dataset.train_limit = static_cast<std::size_t>(
        get_int(*d, "train_limit", static_cast<long long>(c.dataset.train_limit), "dataset", 0,
                std::numeric_limits<long long>::max()));
    c.dataset.test_limit = static_cast<std::size_t>(
        get_int(*d, "test_limit", static_cast<long long>(c.dataset.test_limit), "dataset", 0,
                std::numeric_limits<long long>::max()));
  }

  if (const json* p = find(j, "partition")) {
    check_keys(*p, "partition", {"clients", "gamma"});
    c.clients = static_cast<int>(get_int(*p, "clients", c.clients, "partition", 1));
    if (const json* g = find(*p, "gamma")) {
      if (g->is_string()) {
        std::string s = g->get<std::string>();
        if (s != "iid" && s != "inf") fail("partition.gamma", "expected a number or \"iid\"");
        c.gamma = kIidGamma;
      } else if (g->is_number()) {
        c.gamma = g->get<double>();
      } else {
        fail("partition.gamma", "expected a number or \"iid\"");
      }
    }
  }

  if (const json* m = find(j, "model")) {
    check_keys(*m, "model", {"hidden", "head_layers"});
    if (const json* h = find(*m, "hidden")) {
      if (!h->is_array()) fail("model.hidden", "expected an array of layer widths");
      c.hidden.clear();
      for (const auto& w : *h) {
        if (!w.is_number_integer() && !w.is_number_unsigned())
          fail("model.hidden", "layer widths must be integers");
        long long x = w.get<long long>();
        if (x < 1) fail("model.hidden", "layer widths must be positive");
        c.hidden.push_back(static_cast<std::size_t>(x));
      }
    }
    c.head_layers = static_cast<int>(get_int(*m, "head_layers", c.head_layers, "model", 1));
  }

  if (const json* f = find(j, "federation")) {
    check_keys(*f, "federation",
               {"rounds", "local_epochs", "learning_rate", "weight_decay", "batch_size",
                "aux_start_round", "aux_epochs_per_round", "weight_by_examples"});
    c.rounds = static_cast<int>(get_int(*f, "rounds", c.rounds, "federation", 1));
    c.local_epochs =
        static_cast<int>(get_int(*f, "local_epochs", c.local_epochs, "federation", 1));
    c.sgd.learning_rate = get_num(*f, "learning_rate", c.sgd.learning_rate, "federation");
    c.sgd.weight_decay = get_num(*f, "weight_decay", c.sgd.weight_decay, "federation");
    c.sgd.batch_size =
        static_cast<int>(get_int(*f, "batch_size", c.sgd.batch_size, "federation", 1));
    c.aux_start_round =
        static_cast<int>(get_int(*f, "aux_start_round", c.aux_start_round, "federation", 1));
    c.aux_epochs_per_round = static_cast<int>(
        get_int(*f, "aux_epochs_per_round", c.aux_epochs_per_round, "federation", 1));
    c.weight_by_examples =
        get_bool(*f, "weight_by_examples", c.weight_by_examples, "federation");
  }

  if (const json* u = find(j, "unlearning")) {
    check_keys(*u, "unlearning", {"scope", "clients", "target_class", "aux_mode", "alpha", "beta",
                                  "client_mix", "consolidate_class"});
    c.unlearning.scope = scope_from_name(get_str(*u, "scope", "samples", "unlearning"));
    if (const json* ids = find(*u, "clients")) {
      if (!ids->is_array()) fail("unlearning.clients", "expected an array of client ids");
      c.unlearning.clients.clear();
      for (const auto& id : *ids) {
        if (!id.is_number_integer() && !id.is_number_unsigned())
          fail("unlearning.clients", "client ids must be integers");
        c.unlearning.clients.push_back(id.get<int>());
      }
    }
    c.unlearning.target_class =
        static_cast<int>(get_int(*u, "target_class", c.unlearning.target_class, "unlearning",
                                 std::numeric_limits<int>::min()));
    c.unlearning.aux_mode =
        aux_mode_from_name(get_str(*u, "aux_mode", aux_mode_name(c.unlearning.aux_mode), "unlearning"));
    c.unlearning.alpha = get_num(*u, "alpha", c.unlearning.alpha, "unlearning");
    c.unlearning.beta = get_num(*u, "beta", c.unlearning.beta, "unlearning");
    c.unlearning.client_mix = get_num(*u, "client_mix", c.unlearning.client_mix, "unlearning");
    c.unlearning.consolidate_class =
        get_bool(*u, "consolidate_class", c.unlearning.consolidate_class, "unlearning");
  }

  if (const json* b = find(j, "backdoor")) {
    check_keys(*b, "backdoor",
               {"proportion", "patch_rows", "patch_cols", "patch_value", "target_label"});
    c.backdoor.proportion = get_num(*b, "proportion", c.backdoor.proportion, "backdoor");
    c.backdoor.spec.patch_rows =
        static_cast<int>(get_int(*b, "patch_rows", c.backdoor.spec.patch_rows, "backdoor", 1));
    c.backdoor.spec.patch_cols =
        static_cast<int>(get_int(*b, "patch_cols", c.backdoor.spec.patch_cols, "backdoor", 1));
    c.backdoor.spec.patch_value =
        static_cast<float>(get_num(*b, "patch_value", c.backdoor.spec.patch_value, "backdoor"));
    c.backdoor.spec.target_label =
        static_cast<int>(get_int(*b, "target_label", c.backdoor.spec.target_label, "backdoor", 0));
  }

  if (const json* b = find(j, "baselines")) {
    check_keys(*b, "baselines", {"retraining", "random_label", "finetune_epochs"});
    c.baselines.retraining = get_bool(*b, "retraining", c.baselines.retraining, "baselines");
    c.baselines.random_label = get_bool(*b, "random_label", c.baselines.random_label, "baselines");
    c.baselines.finetune_epochs = static_cast<int>(
        get_int(*b, "finetune_epochs", c.baselines.finetune_epochs, "baselines", 0));
  }

  validate_experiment_config(c);
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["schema"] = 1;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["output_root"] = c.output_root;
  json& d = j["dataset"];
  d["kind"] = c.dataset.kind;
  if (c.dataset.kind == "synth") {
    d["classes"] = c.dataset.classes;
    d["train_per_class"] = c.dataset.train_per_class;
    d["test_per_class"] = c.dataset.test_per_class;
    d["rows"] = c.dataset.rows;
    d["cols"] = c.dataset.cols;
    d["spread"] = c.dataset.spread;
  } else {
    d["dir"] = c.dataset.dir;
    d["train_limit"] = c.dataset.train_limit;
    d["test_limit"] = c.dataset.test_limit;
  }
  json& p = j["partition"];
  p["clients"] = c.clients;
  if (std::isinf(c.gamma))
    p["gamma"] = "iid";
  else
    p["gamma"] = c.gamma;
  json& m = j["model"];
  m["hidden"] = c.hidden;
  m["head_layers"] = c.head_layers;
  json& f = j["federation"];
  f["rounds"] = c.rounds;
  f["local_epochs"] = c.local_epochs;
  f["learning_rate"] = c.sgd.learning_rate;
  f["weight_decay"] = c.sgd.weight_decay;
  f["batch_size"] = c.sgd.batch_size;
  f["aux_start_round"] = c.aux_start_round;
  f["aux_epochs_per_round"] = c.aux_epochs_per_round;
  f["weight_by_examples"] = c.weight_by_examples;
  json& u = j["unlearning"];
  u["scope"] = scope_name(c.unlearning.scope);
  u["clients"] = c.unlearning.clients;
  u["target_class"] = c.unlearning.target_class;
  u["aux_mode"] = aux_mode_name(c.unlearning.aux_mode);
  u["alpha"] = c.unlearning.alpha;
  u["beta"] = c.unlearning.beta;
  u["client_mix"] = c.unlearning.client_mix;
  u["consolidate_class"] = c.unlearning.consolidate_class;
  if (c.unlearning.scope != UnlearningScope::Class) {
    json& b = j["backdoor"];
    b["proportion"] = c.backdoor.proportion;
    b["patch_rows"] = c.backdoor.spec.patch_rows;
    b["patch_cols"] = c.backdoor.spec.patch_cols;
    b["patch_value"] = c.backdoor.spec.patch_value;
    b["target_label"] = c.backdoor.spec.target_label;
  }
  json& bl = j["baselines"];
  bl["retraining"] = c.baselines.retraining;
  bl["random_label"] = c.baselines.random_label;
  bl["finetune_epochs"] = c.baselines.finetune_epochs;
  return j;
}

ExperimentConfig load_config_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

namespace {

ExperimentConfig synth_base() {
  ExperimentConfig c;
  c.name = "synth-samples";
  c.seed = 42;
  c.dataset.kind = "synth";
  c.dataset.classes = 5;
  c.dataset.train_per_class = 1000;
  c.dataset.test_per_class = 250;
  c.dataset.rows = 6;
  c.dataset.cols = 6;
  c.dataset.spread = 0.25;
  c.clients = 10;
  c.gamma = kIidGamma;
  c.hidden = {64, 32};
  c.head_layers = 1;
  c.rounds = 60;
  c.local_epochs = 1;
  c.sgd.learning_rate = 0.12;
  c.sgd.weight_decay = 1e-4;
  c.sgd.batch_size = 32;
  c.aux_start_round = 51;
  c.aux_epochs_per_round = 1;
  c.unlearning.scope = UnlearningScope::Samples;
  c.unlearning.clients = {0};
  c.unlearning.alpha = 0.9;
  c.unlearning.beta = 1.0;
  c.backdoor.proportion = 0.1;
  c.backdoor.spec.patch_rows = 1;
  c.backdoor.spec.patch_cols = 2;
  c.backdoor.spec.patch_value = 1.0f;
  c.backdoor.spec.target_label = 0;
  c.baselines.retraining = true;
  c.baselines.random_label = true;
  c.baselines.finetune_epochs = 5;
  return c;
}

ExperimentConfig mnist_base() {
  ExperimentConfig c = synth_base();
  c.name = "mnist-samples";
  c.dataset = DatasetConfig{};
  c.dataset.kind = "mnist";
  c.dataset.train_limit = 12000;
  c.dataset.test_limit = 2000;
  c.hidden = {256, 128};
  c.rounds = 30;
  c.sgd.learning_rate = 0.05;
  c.aux_start_round = 21;
  c.backdoor.spec.patch_rows = 3;
  c.backdoor.spec.patch_cols = 3;
  return c;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"synth-smoke",    "synth-samples",  "synth-class",    "synth-client",
          "multi-client-3", "multi-client-5", "multi-client-8", "multi-client-10",
          "noniid-1",       "noniid-10",      "noniid-inf",     "mnist-samples",
          "mnist-class",    "mnist-client"};
}

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c = synth_base();
  if (name == "synth-smoke") {
    c.name = name;
    c.dataset.classes = 4;
    c.dataset.train_per_class = 150;
    c.dataset.test_per_class = 60;
    c.dataset.rows = 4;
    c.dataset.cols = 4;
    c.dataset.spread = 0.12;
    c.clients = 4;
    c.hidden = {32, 16};
    c.rounds = 10;
    c.sgd.learning_rate = 0.1;
    c.sgd.batch_size = 16;
    c.aux_start_round = 6;
    c.backdoor.spec.patch_rows = 2;
    c.backdoor.spec.patch_cols = 2;
    c.baselines.finetune_epochs = 3;
    return c;
  }
  if (name == "synth-samples") return c;
  if (name == "synth-class") {
    c.name = name;
    c.unlearning.scope = UnlearningScope::Class;
    c.unlearning.target_class = 2;
    // Start the auxiliary head early: a head trained to convergence on the
    // all-labels-c objective subtracts cleanly, an undertrained one drags
    // remaining accuracy down.
    c.aux_start_round = 1;
    return c;
  }
  if (name == "synth-client") {
    c.name = name;
    c.unlearning.scope = UnlearningScope::Client;
    c.backdoor.proportion = 0.3;
    c.backdoor.spec.patch_cols = 1;
    return c;
  }
  if (name.rfind("multi-client-", 0) == 0) {
    std::string tail = name.substr(std::string("multi-client-").size());
    if (tail == "3" || tail == "5" || tail == "8" || tail == "10") {
      c.name = name;
      int n = std::stoi(tail);
      // Spread the federation wider so the union of trigger sets stays a
      // small fraction of the global data even at ten unlearning clients.
      c.clients = 40;
      c.unlearning.clients.clear();
      for (int k = 0; k < n; ++k) c.unlearning.clients.push_back(k);
      c.unlearning.aux_mode = AuxMode::Collaborative;
      c.backdoor.spec.patch_cols = 1;
      c.baselines.random_label = false;
      return c;
    }
  }
  if (name.rfind("noniid-", 0) == 0) {
    std::string tail = name.substr(std::string("noniid-").size());
    if (tail == "1" || tail == "10" || tail == "inf") {
      c.name = name;
      c.gamma = tail == "inf" ? kIidGamma : std::stod(tail);
      // Strong skew leaves stubborn flagged examples at high alpha; weight
      // the auxiliary head more so the flip succeeds across all gammas.
      c.unlearning.alpha = 0.6;
      c.baselines.random_label = false;
      return c;
    }
  }
  if (name == "mnist-samples") return mnist_base();
  if (name == "mnist-class") {
    c = mnist_base();
    c.name = name;
    c.unlearning.scope = UnlearningScope::Class;
    c.unlearning.target_class = 2;
    return c;
  }
  if (name == "mnist-client") {
    c = mnist_base();
    c.name = name;
    c.unlearning.scope = UnlearningScope::Client;
    c.backdoor.proportion = 0.3;
    return c;
  }
  std::string all;
  for (const std::string& p : preset_names()) {
    if (!all.empty()) all += ", ";
    all += p;
  }
  throw ConfigError("config: unknown preset \"" + name + "\" (available: " + all + ")");
}

namespace {

Dataset build_train_set(const ExperimentConfig& c) {
  if (c.dataset.kind == "mnist") {
    std::string dir = c.dataset.dir;
    if (dir.empty()) {
      const char* env = std::getenv("FEDAU_MNIST_DIR");
      if (env && *env) dir = env;
    }
    if (dir.empty())
      throw ConfigError("config: dataset.dir: not set and FEDAU_MNIST_DIR is empty");
    fs::path images = fs::path(dir) / "train-images-idx3-ubyte";
    fs::path labels = fs::path(dir) / "train-labels-idx1-ubyte";
    if (!fs::exists(images) || !fs::exists(labels))
      throw ConfigError("config: dataset.dir: " + images.string() + " or its labels file is missing");
    return load_mnist(images, labels, c.dataset.train_limit);
  }
  SynthSpec spec;
  spec.classes = c.dataset.classes;
  spec.per_class = c.dataset.train_per_class;
  spec.rows = c.dataset.rows;
  spec.cols = c.dataset.cols;
  spec.spread = c.dataset.spread;
  spec.seed = c.seed;
  return synth_blobs(spec);
}

Dataset build_test_set(const ExperimentConfig& c) {
  if (c.dataset.kind == "mnist") {
    std::string dir = c.dataset.dir;
    if (dir.empty()) {
      const char* env = std::getenv("FEDAU_MNIST_DIR");
      if (env && *env) dir = env;
    }
    fs::path images = fs::path(dir) / "t10k-images-idx3-ubyte";
    fs::path labels = fs::path(dir) / "t10k-labels-idx1-ubyte";
    if (!fs::exists(images) || !fs::exists(labels))
      throw ConfigError("config: dataset.dir: " + images.string() + " or its labels file is missing");
    return load_mnist(images, labels, c.dataset.test_limit);
  }
  SynthSpec spec;
  spec.classes = c.dataset.classes;
  spec.per_class = c.dataset.test_per_class;
  spec.rows = c.dataset.rows;
  spec.cols = c.dataset.cols;
  spec.spread = c.dataset.spread;
  // Fresh noise stream; anchors are seed-independent, so the geometry matches.
  spec.seed = derive_key(c.seed, 1001);
  return synth_blobs(spec);
}

// Moves every training example of the target class to the unlearning clients
// (round-robin) so that dropping the forget set removes the class everywhere.
void consolidate_class_at(std::vector<ClientDataset>& clients, const std::vector<int>& owners,
                          int target_class) {
  std::vector<bool> owner_set(clients.size(), false);
  for (int id : owners) owner_set[static_cast<std::size_t>(id)] = true;
  std::vector<LabeledExample> moved;
  for (ClientDataset& client : clients) {
    if (owner_set[static_cast<std::size_t>(client.client_id)]) continue;
    std::vector<LabeledExample> kept;
    kept.reserve(client.examples.size());
    for (LabeledExample& ex : client.examples) {
      if (ex.true_label == target_class)
        moved.push_back(std::move(ex));
      else
        kept.push_back(std::move(ex));
    }
    if (kept.empty())
      throw ConfigError("config: unlearning.consolidate_class: client " +
                        std::to_string(client.client_id) + " would be left without data");
    client.examples = std::move(kept);
  }
  for (std::size_t i = 0; i < moved.size(); ++i) {
    ClientDataset& owner = clients[static_cast<std::size_t>(owners[i % owners.size()])];
    owner.examples.push_back(std::move(moved[i]));
  }
}

}  // namespace

RunData build_run_data(const ExperimentConfig& config) {
  validate_experiment_config(config);
  RunData data;
  Dataset train = build_train_set(config);
  data.test = build_test_set(config);

  PartitionPlan partition;
  partition.gamma = config.gamma;
  partition.client_count = config.clients;
  partition.seed = config.seed;
  data.clients = dirichlet_partition(train, partition);

  const UnlearningConfig& u = config.unlearning;
  data.plan.scope = u.scope;
  data.plan.unlearning_clients = u.clients;
  data.plan.target_class = u.target_class;
  data.plan.aux_mode = u.aux_mode;
  data.plan.client_mix = u.client_mix;

  switch (u.scope) {
    case UnlearningScope::Samples:
    case UnlearningScope::Client:
      // Client scope uses the same trigger construction with a high
      // proportion: forgetting succeeds when the patched examples stop
      // mapping to the trigger label.
      for (int id : u.clients) {
        ClientDataset& shard = data.clients[static_cast<std::size_t>(id)];
        shard = inject_backdoor(shard, config.backdoor.proportion, config.backdoor.spec,
                                config.seed);
      }
      break;
    case UnlearningScope::Class:
      if (u.consolidate_class) consolidate_class_at(data.clients, u.clients, u.target_class);
      for (int id : u.clients)
        mark_class_unlearning(data.clients[static_cast<std::size_t>(id)], u.target_class);
      break;
  }

  for (const ClientDataset& client : data.clients) {
    for (const LabeledExample& ex : client.examples) {
      if (ex.is_unlearning)
        data.forget.push_back(ex);
      else
        data.remaining.push_back(ex);
    }
  }

  data.fed.client_count = config.clients;
  data.fed.rounds = config.rounds;
  data.fed.local_epochs = config.local_epochs;
  data.fed.sgd = config.sgd;
  data.fed.model.input_dim = static_cast<std::size_t>(train.rows) * static_cast<std::size_t>(train.cols);
  data.fed.model.hidden = config.hidden;
  data.fed.model.class_count = train.class_count;
  data.fed.model.head_layers = config.head_layers;
  data.fed.aux_start_round = config.aux_start_round;
  data.fed.aux_epochs_per_round = config.aux_epochs_per_round;
  data.fed.seed = config.seed;
  data.fed.weight_by_examples = config.weight_by_examples;
  return data;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<LabeledExample> ul_eval_set(const RunData& data, const ExperimentConfig& config) {
  if (config.unlearning.scope == UnlearningScope::Class) {
    std::vector<LabeledExample> slice;
    for (const LabeledExample& ex : data.test.examples)
      if (ex.true_label == config.unlearning.target_class) slice.push_back(ex);
    return slice;
  }
  return data.forget;
}

std::vector<LabeledExample> mia_nonmember_pool(const RunData& data,
                                               const ExperimentConfig& config) {
  if (config.unlearning.scope == UnlearningScope::Class) {
    std::vector<LabeledExample> slice;
    for (const LabeledExample& ex : data.test.examples)
      if (ex.true_label == config.unlearning.target_class) slice.push_back(ex);
    return slice;
  }
  return data.test.examples;
}

MethodMetrics measure_method(const std::string& method, const Model& model, double seconds,
                             std::uint64_t bytes, const RunData& data,
                             const ExperimentConfig& config,
                             std::span<const LabeledExample> ul_eval,
                             std::span<const LabeledExample> nonmembers) {
  MethodMetrics row;
  row.method = method;
  row.seconds = seconds;
  row.bytes = bytes;
  row.rm_acc = rm_acc(model, data.test, config.unlearning.scope, config.unlearning.target_class);
  if (!ul_eval.empty()) row.ul_acc = ul_acc(model, ul_eval);
  if (data.forget.size() >= 4 && nonmembers.size() >= 4) {
    MiaResult mia = mia_loss_threshold(model, data.forget, nonmembers, config.seed);
    row.mia_acc = mia.attack_accuracy;
    row.mia_recall = mia.attack_recall;
  }
  return row;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("experiment: cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("experiment: failed writing " + path.string());
}

json round_to_json(const RoundMetrics& m) {
  json j;
  j["round"] = m.round;
  if (m.global_acc >= 0.0)
    j["global_acc"] = m.global_acc;
  else
    j["global_acc"] = nullptr;
  j["client_loss"] = m.client_loss;
  if (m.aux_ul_acc >= 0.0)
    j["aux_ul_acc"] = m.aux_ul_acc;
  else
    j["aux_ul_acc"] = nullptr;
  return j;
}

void write_rounds_log(const fs::path& path, const std::vector<RoundMetrics>& rounds) {
  std::string text;
  for (const RoundMetrics& m : rounds) {
    text += round_to_json(m).dump();
    text += '\n';
  }
  write_text_file(path, text);
}

void write_data_cache(const fs::path& dir, const RunData& data) {
  fs::create_directories(dir);
  for (const ClientDataset& client : data.clients) {
    save_example_cache(dir / ("client_" + std::to_string(client.client_id)), client.examples,
                       client.class_count, client.rows, client.cols, client.client_id);
  }
  save_example_cache(dir / "test", data.test.examples, data.test.class_count, data.test.rows,
                     data.test.cols, -1);
}

void write_train_checkpoints(const fs::path& dir, const TrainedArtifacts& trained) {
  fs::create_directories(dir);
  save_checkpoint(dir / "model.fauw", model_to_tensors(trained.model));
  for (const auto& [id, head] : trained.aux_heads)
    save_checkpoint(dir / ("aux_" + std::to_string(id) + ".fauw"), stack_to_tensors(head, "head"));
  if (trained.aux_aggregate)
    save_checkpoint(dir / "aux_aggregate.fauw", stack_to_tensors(*trained.aux_aggregate, "head"));
}

json bounds_to_json(double alpha_b, double beta_b) {
  json j;
  j["alpha"] = alpha_b;
  if (beta_b < 0.0)
    j["beta"] = nullptr;
  else if (std::isinf(beta_b))
    j["beta"] = "unbounded";
  else
    j["beta"] = beta_b;
  return j;
}

std::string format_fixed(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

void write_report_files(const fs::path& dir, const ExperimentResult& result) {
  json report;
  report["name"] = result.config.name;
  report["seed"] = result.config.seed;
  report["scope"] = scope_name(result.config.unlearning.scope);
  report["coefficients"] = {{"alpha", result.config.unlearning.alpha},
                            {"beta", result.config.unlearning.beta}};
  report["bounds"] = bounds_to_json(result.alpha_bound_value, result.beta_bound_value);
  report["requirements"] = json::parse(requirement_report_json(result.requirements));
  report["dropped_clients"] = result.dropped_clients;
  json methods = json::array();
  for (const MethodMetrics& row : result.rows) {
    json r;
    r["method"] = row.method;
    r["rm_acc"] = row.rm_acc;
    r["ul_acc"] = row.ul_acc;
    if (row.mia_acc >= 0.0) {
      r["mia_acc"] = row.mia_acc;
      r["mia_recall"] = row.mia_recall;
    } else {
      r["mia_acc"] = nullptr;
      r["mia_recall"] = nullptr;
    }
    r["stored_bytes"] = row.bytes;
    methods.push_back(r);
  }
  report["methods"] = methods;
  write_text_file(dir / "report.json", report.dump(2) + "\n");

  json timings;
  for (const MethodMetrics& row : result.rows) {
    if (row.method == "fedavg") timings["train_s"] = row.seconds;
    if (row.method == "fedau") timings["unlearn_s"] = row.seconds;
    if (row.method == "retraining") timings["retrain_s"] = row.seconds;
    if (row.method == "random_label") timings["finetune_s"] = row.seconds;
  }
  write_text_file(dir / "timings.json", timings.dump(2) + "\n");

  std::string csv = "scope,method,rm_acc,ul_acc,mia_acc,time_s,bytes\n";
  for (const MethodMetrics& row : result.rows) {
    csv += scope_name(result.config.unlearning.scope);
    csv += ',';
    csv += row.method;
    csv += ',';
    csv += format_fixed(row.rm_acc);
    csv += ',';
    csv += format_fixed(row.ul_acc);
    csv += ',';
    csv += format_fixed(row.mia_acc);
    csv += ',';
    csv += format_fixed(row.seconds);
    csv += ',';
    csv += std::to_string(row.bytes);
    csv += '\n';
  }
  write_text_file(dir / "table.csv", csv);
}

// The aux head the single-head scopes would combine with; null when several
// private heads exist (diagnostics then skip the per-example guarantees).
const LayerStack* guarantee_head(const TrainedArtifacts& trained, const UnlearningPlan& plan) {
  if (plan.aux_mode == AuxMode::Collaborative && trained.aux_aggregate)
    return &*trained.aux_aggregate;
  if (trained.aux_heads.size() == 1) return &trained.aux_heads.begin()->second;
  return nullptr;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const fs::path* out_dir) {
  ExperimentResult result;
  result.config = config;
  result.data = build_run_data(config);
  RunData& data = result.data;
  Coefficients coeffs{config.unlearning.alpha, config.unlearning.beta};

  auto train_start = std::chrono::steady_clock::now();
  result.trained = run_federation(data.fed, data.clients, &data.plan, coeffs, &data.test);
  result.train_seconds = seconds_since(train_start);

  auto unlearn_start = std::chrono::steady_clock::now();
  LayerStack combined = combine_for_plan(result.trained, data.plan, coeffs);
  result.unlearn_seconds = seconds_since(unlearn_start);
  const Model& trained_model = result.trained.model;
  result.unlearned = Model{trained_model.extractor, combined, trained_model.class_count};

  result.alpha_bound_value = alpha_bound(trained_model, data.remaining);
  result.beta_bound_value = -1.0;
  for (const auto& [id, head] : result.trained.aux_heads) {
    Model aux_model{trained_model.extractor, head, trained_model.class_count};
    double b = beta_bound(trained_model, aux_model, data.remaining);
    if (result.beta_bound_value < 0.0 || b < result.beta_bound_value)
      result.beta_bound_value = b;
  }

  result.requirements = verify_requirements(
      trained_model.extractor, trained_model.head, result.unlearned.head,
      trained_model.class_count, data.remaining, data.forget,
      guarantee_head(result.trained, data.plan), coeffs.beta, false);

  std::vector<LabeledExample> ul_eval = ul_eval_set(data, config);
  std::vector<LabeledExample> nonmembers = mia_nonmember_pool(data, config);

  result.rows.push_back(measure_method("fedavg", trained_model, result.train_seconds, 0, data,
                                       config, ul_eval, nonmembers));
  result.rows.push_back(measure_method("fedau", result.unlearned, result.unlearn_seconds,
                                       stored_aux_bytes(result.trained.aux_heads), data, config,
                                       ul_eval, nonmembers));

  if (config.baselines.retraining) {
    BaselineResult retrained = retrain_from_scratch(data.fed, data.clients, &data.test, &std::cerr);
    result.dropped_clients = retrained.dropped_clients;
    result.rows.push_back(measure_method("retraining", retrained.model, retrained.wall_seconds, 0,
                                         data, config, ul_eval, nonmembers));
    result.retrained = std::move(retrained.model);
  }
  if (config.baselines.random_label) {
    BaselineResult finetuned =
        random_label_finetune(trained_model, data.forget, config.baselines.finetune_epochs,
                              data.fed.sgd, trained_model.class_count, config.seed);
    result.rows.push_back(measure_method("random_label", finetuned.model, finetuned.wall_seconds,
                                         0, data, config, ul_eval, nonmembers));
    result.finetuned = std::move(finetuned.model);
  }

  if (out_dir) {
    result.out_dir = *out_dir;
    fs::create_directories(*out_dir);
    write_text_file(*out_dir / "config.json", config_to_json(config).dump(2) + "\n");
    write_data_cache(*out_dir / "data_cache", data);
    write_train_checkpoints(*out_dir / "checkpoints", result.trained);
    save_checkpoint(*out_dir / "checkpoints" / "unlearned.fauw",
                    model_to_tensors(result.unlearned));
    if (result.retrained)
      save_checkpoint(*out_dir / "checkpoints" / "retrained.fauw",
                      model_to_tensors(*result.retrained));
    if (result.finetuned)
      save_checkpoint(*out_dir / "checkpoints" / "finetuned.fauw",
                      model_to_tensors(*result.finetuned));
    write_rounds_log(*out_dir / "rounds.jsonl", result.trained.rounds);
    write_report_files(*out_dir, result);
  }
  return result;
}

fs::path make_output_dir(const ExperimentConfig& config, const std::string& override_root) {
  std::string root = override_root;
  if (root.empty()) {
    const char* env = std::getenv("FEDAU_OUT");
    if (env && *env) root = env;
  }
  if (root.empty()) root = config.output_root;
  fs::path base = fs::path(root) / config.name;
  fs::create_directories(base);
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  fs::path dir = base / stamp;
  for (int k = 2; fs::exists(dir); ++k) dir = base / (std::string(stamp) + "-" + std::to_string(k));
  fs::create_directory(dir);
  return dir;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& config, const std::string& param,
                                const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());

  std::vector<SweepRow> rows;
  if (param == "alpha" || param == "beta") {
    ExperimentConfig base = config;
    base.baselines.retraining = false;
    base.baselines.random_label = false;
    RunData data = build_run_data(base);
    Coefficients coeffs{base.unlearning.alpha, base.unlearning.beta};
    TrainedArtifacts trained = run_federation(data.fed, data.clients, &data.plan, coeffs, &data.test);
    std::vector<LabeledExample> ul_eval = ul_eval_set(data, base);
    for (double v : sorted) {
      Coefficients point = coeffs;
      if (param == "alpha") {
        if (!(v > 0.0) || v > 1.0) throw ConfigError("sweep: alpha value " + std::to_string(v) +
                                                     " outside (0, 1]");
        point.alpha = v;
      } else {
        if (!(v >= 0.0) || !std::isfinite(v))
          throw ConfigError("sweep: beta value must be finite and >= 0");
        point.beta = v;
      }
      LayerStack combined = combine_for_plan(trained, data.plan, point);
      Model m{trained.model.extractor, combined, trained.model.class_count};
      SweepRow row;
      row.value = v;
      if (!ul_eval.empty()) row.ul_acc = ul_acc(m, ul_eval);
      row.rm_acc = rm_acc(m, data.test, base.unlearning.scope, base.unlearning.target_class);
      rows.push_back(row);
    }
    return rows;
  }

  if (param != "gamma" && param != "proportion" && param != "aux_position")
    throw ConfigError("sweep: unknown parameter \"" + param +
                      "\" (expected alpha, beta, gamma, proportion, or aux_position)");

  for (double v : sorted) {
    ExperimentConfig point = config;
    point.baselines.retraining = false;
    point.baselines.random_label = false;
    if (param == "gamma") {
      point.gamma = v;
    } else if (param == "proportion") {
      point.backdoor.proportion = v;
    } else {
      if (v != std::floor(v) || v < 1.0)
        throw ConfigError("sweep: aux_position values must be positive integers (head depth)");
      point.head_layers = static_cast<int>(v);
    }
    ExperimentResult res = run_experiment(point, nullptr);
    SweepRow row;
    row.value = v;
    for (const MethodMetrics& m : res.rows) {
      if (m.method == "fedau") {
        row.ul_acc = m.ul_acc;
        row.rm_acc = m.rm_acc;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

namespace {

ExperimentConfig resolve_config(const std::string& config_path, const std::string& preset,
                                const std::optional<std::uint64_t>& seed) {
  if (!config_path.empty() && !preset.empty())
    throw ConfigError("config: --config and --preset are mutually exclusive");
  if (config_path.empty() && preset.empty())
    throw ConfigError("config: give --config PATH or --preset NAME");
  ExperimentConfig config =
      preset.empty() ? load_config_file(config_path) : preset_config(preset);
  if (seed) config.seed = *seed;
  return config;
}

void print_method_table(const ExperimentResult& result) {
  std::printf("%-14s %10s %10s %10s %12s %12s\n", "method", "rm_acc", "ul_acc", "mia_acc",
              "time_s", "bytes");
  for (const MethodMetrics& row : result.rows) {
    std::printf("%-14s %10.4f %10.4f %10.4f %12.6f %12llu\n", row.method.c_str(), row.rm_acc,
                row.ul_acc, row.mia_acc, row.seconds,
                static_cast<unsigned long long>(row.bytes));
  }
}

}  // namespace

int cmd_train(const TrainArgs& args) {
  ExperimentConfig config = resolve_config(args.config_path, args.preset, args.seed);
  fs::path out = make_output_dir(config, args.out_root);

  RunData data = build_run_data(config);
  Coefficients coeffs{config.unlearning.alpha, config.unlearning.beta};
  auto start = std::chrono::steady_clock::now();
  TrainedArtifacts trained = run_federation(data.fed, data.clients, &data.plan, coeffs, &data.test);
  double train_seconds = seconds_since(start);

  write_text_file(out / "config.json", config_to_json(config).dump(2) + "\n");
  write_data_cache(out / "data_cache", data);
  write_train_checkpoints(out / "checkpoints", trained);
  write_rounds_log(out / "rounds.jsonl", trained.rounds);
  json timings;
  timings["train_s"] = train_seconds;
  write_text_file(out / "timings.json", timings.dump(2) + "\n");

  double final_acc = trained.rounds.empty() ? -1.0 : trained.rounds.back().global_acc;
  std::printf("run directory: %s\n", out.string().c_str());
  std::printf("rounds: %d  final test accuracy: %.4f  aux heads: %zu\n", config.rounds, final_acc,
              trained.aux_heads.size());
  std::printf("train_time_s %.3f\n", train_seconds);
  return 0;
}

int cmd_unlearn(const UnlearnArgs& args) {
  fs::path dir = args.checkpoint_dir;
  if (!fs::exists(dir / "config.json"))
    throw MissingArtifactError("unlearn: " + dir.string() +
                               " is not a run directory (config.json missing)");
  ExperimentConfig config = load_config_file(dir / "config.json");
  if (!args.scope.empty()) config.unlearning.scope = scope_from_name(args.scope);
  if (args.alpha) config.unlearning.alpha = *args.alpha;
  if (args.beta) config.unlearning.beta = *args.beta;
  if (!(config.unlearning.alpha > 0.0) || config.unlearning.alpha > 1.0)
    throw ConfigError("unlearn: alpha must be in (0, 1]");
  if (!(config.unlearning.beta >= 0.0) || !std::isfinite(config.unlearning.beta))
    throw ConfigError("unlearn: beta must be finite and >= 0");
  if (config.unlearning.scope == UnlearningScope::Class && config.unlearning.target_class < 0)
    throw ConfigError("unlearn: class scope needs unlearning.target_class in the trained config");

  fs::path model_path = dir / "checkpoints" / "model.fauw";
  if (!fs::exists(model_path))
    throw MissingArtifactError("unlearn: trained checkpoint missing: " + model_path.string());
  TrainedArtifacts artifacts;
  artifacts.model = model_from_tensors(load_checkpoint(model_path));

  for (int id : config.unlearning.clients) {
    fs::path aux_path = dir / "checkpoints" / ("aux_" + std::to_string(id) + ".fauw");
    if (!fs::exists(aux_path))
      throw MissingArtifactError("unlearn: aux head checkpoint missing: " + aux_path.string() +
                                 " (train with an unlearning plan first)");
    artifacts.aux_heads[id] = stack_from_tensors(load_checkpoint(aux_path), "head", true);
  }
  if (config.unlearning.aux_mode == AuxMode::Collaborative) {
    fs::path agg_path = dir / "checkpoints" / "aux_aggregate.fauw";
    if (!fs::exists(agg_path))
      throw MissingArtifactError("unlearn: aggregated aux checkpoint missing: " +
                                 agg_path.string());
    artifacts.aux_aggregate = stack_from_tensors(load_checkpoint(agg_path), "head", true);
  }

  std::vector<LabeledExample> remaining;
  std::vector<LabeledExample> forget;
  for (int k = 0; k < config.clients; ++k) {
    fs::path stem = dir / "data_cache" / ("client_" + std::to_string(k));
    if (!fs::exists(fs::path(stem.string() + ".fauw")))
      throw MissingArtifactError("unlearn: data cache missing: " + stem.string() + ".fauw");
    CachedExamples cached = load_example_cache(stem);
    for (LabeledExample& ex : cached.examples) {
      if (ex.is_unlearning)
        forget.push_back(std::move(ex));
      else
        remaining.push_back(std::move(ex));
    }
  }

  const Model& model = artifacts.model;
  double alpha_b = alpha_bound(model, remaining);
  double beta_b = -1.0;
  for (const auto& [id, head] : artifacts.aux_heads) {
    Model aux_model{model.extractor, head, model.class_count};
    double b = beta_bound(model, aux_model, remaining);
    if (beta_b < 0.0 || b < beta_b) beta_b = b;
  }

  if (args.strict_bounds) {
    char msg[160];
    if (config.unlearning.scope == UnlearningScope::Class) {
      if (beta_b >= 0.0 && config.unlearning.beta > beta_b) {
        std::snprintf(msg, sizeof msg,
                      "unlearn: beta %.6g exceeds beta_bound %.6g on the remaining data",
                      config.unlearning.beta, beta_b);
        throw BoundRefusalError(msg);
      }
    } else if (config.unlearning.alpha > alpha_b) {
      std::snprintf(msg, sizeof msg,
                    "unlearn: alpha %.6g exceeds alpha_bound %.6g on the remaining data",
                    config.unlearning.alpha, alpha_b);
      throw BoundRefusalError(msg);
    }
  }

  UnlearningPlan plan;
  plan.scope = config.unlearning.scope;
  plan.unlearning_clients = config.unlearning.clients;
  plan.target_class = config.unlearning.target_class;
  plan.aux_mode = config.unlearning.aux_mode;
  plan.client_mix = config.unlearning.client_mix;
  Coefficients coeffs{config.unlearning.alpha, config.unlearning.beta};

  auto start = std::chrono::steady_clock::now();
  LayerStack combined = combine_for_plan(artifacts, plan, coeffs);
  double unlearn_seconds = seconds_since(start);

  Model unlearned{model.extractor, combined, model.class_count};
  save_checkpoint(dir / "checkpoints" / "unlearned.fauw", model_to_tensors(unlearned));

  RequirementReport report = verify_requirements(
      model.extractor, model.head, combined, model.class_count, remaining, forget,
      guarantee_head(artifacts, plan), coeffs.beta, args.verbose_report);

  json report_json;
  report_json["scope"] = scope_name(plan.scope);
  report_json["alpha"] = coeffs.alpha;
  report_json["beta"] = coeffs.beta;
  report_json["bounds"] = bounds_to_json(alpha_b, beta_b);
  report_json["requirements"] = json::parse(requirement_report_json(report));
  write_text_file(dir / "unlearn_report.json", report_json.dump(2) + "\n");

  std::printf("unlearned checkpoint: %s\n",
              (dir / "checkpoints" / "unlearned.fauw").string().c_str());
  std::printf("r1_rate %.6f  r2_rate %.6f\n", report.r1_rate, report.r2_rate);
  std::printf("alpha_bound %.6g  beta_bound %.6g\n", alpha_b, beta_b);
  std::printf("unlearn_time_s %.9f\n", unlearn_seconds);
  return 0;
}

int cmd_eval(const EvalArgs& args) {
  fs::path ck = args.checkpoint;
  fs::path model_path;
  if (fs::is_directory(ck)) {
    fs::path unlearned = ck / "checkpoints" / "unlearned.fauw";
    fs::path trained = ck / "checkpoints" / "model.fauw";
    if (fs::exists(unlearned))
      model_path = unlearned;
    else if (fs::exists(trained))
      model_path = trained;
    else
      throw MissingArtifactError("eval: no checkpoints under " + ck.string());
  } else if (fs::exists(ck)) {
    model_path = ck;
  } else {
    throw MissingArtifactError("eval: checkpoint not found: " + ck.string());
  }

  fs::path dataset = args.dataset;
  fs::path stem;
  if (fs::is_directory(dataset)) {
    stem = dataset / "data_cache" / "test";
  } else {
    std::string s = dataset.string();
    if (s.size() > 5 && s.substr(s.size() - 5) == ".fauw")
      stem = s.substr(0, s.size() - 5);
    else if (s.size() > 5 && s.substr(s.size() - 5) == ".json")
      stem = s.substr(0, s.size() - 5);
    else
      stem = dataset;
  }
  if (!fs::exists(fs::path(stem.string() + ".fauw")))
    throw ConfigError("eval: dataset cache not found at " + stem.string() + ".fauw");

  Model model = model_from_tensors(load_checkpoint(model_path));
  CachedExamples cached = load_example_cache(stem);
  if (cached.examples.empty()) throw ConfigError("eval: dataset is empty");
  std::size_t dim = cached.examples.front().features.size();
  std::size_t expect = model.extractor.empty() ? model.head.front().in_dim()
                                               : model.extractor.front().in_dim();
  if (dim != expect)
    throw ConfigError("eval: feature width " + std::to_string(dim) +
                      " does not match the model input " + std::to_string(expect));

  json out;
  out["checkpoint"] = model_path.string();
  out["examples"] = cached.examples.size();
  out["accuracy_true"] = evaluate_accuracy(model, cached.examples, LabelSource::TrueLabel);
  out["accuracy_trained"] = evaluate_accuracy(model, cached.examples, LabelSource::TrainedLabel);
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

int cmd_experiment(const ExperimentArgs& args) {
  ExperimentConfig config = resolve_config(args.config_path, args.preset, args.seed);
  fs::path out = make_output_dir(config, args.out_root);
  ExperimentResult result = run_experiment(config, &out);

  std::printf("run directory: %s\n", out.string().c_str());
  print_method_table(result);
  std::printf("alpha_bound %.6g  beta_bound %.6g\n", result.alpha_bound_value,
              result.beta_bound_value);
  std::printf("r1_rate %.6f  r2_rate %.6f\n", result.requirements.r1_rate,
              result.requirements.r2_rate);
  if (!result.dropped_clients.empty()) {
    std::printf("retraining dropped clients:");
    for (int id : result.dropped_clients) std::printf(" %d", id);
    std::printf("\n");
  }
  return 0;
}

int cmd_sweep(const SweepArgs& args) {
  std::string preset = args.preset;
  if (preset.empty() && args.config_path.empty())
    preset = args.param == "beta" ? "synth-class" : "synth-samples";
  ExperimentConfig config = resolve_config(args.config_path, preset, args.seed);
  config.name += "-sweep-" + args.param;

  std::vector<SweepRow> rows = run_sweep(config, args.param, args.values);

  fs::path out = make_output_dir(config, args.out_root);
  write_text_file(out / "config.json", config_to_json(config).dump(2) + "\n");
  std::string csv = "value,ul_acc,rm_acc\n";
  for (const SweepRow& row : rows)
    csv += format_fixed(row.value) + "," + format_fixed(row.ul_acc) + "," +
           format_fixed(row.rm_acc) + "\n";
  write_text_file(out / "sweep.csv", csv);

  std::printf("run directory: %s\n", out.string().c_str());
  std::printf("%10s %10s %10s\n", args.param.c_str(), "ul_acc", "rm_acc");
  for (const SweepRow& row : rows)
    std::printf("%10.4f %10.4f %10.4f\n", row.value, row.ul_acc, row.rm_acc);

  if (rows.size() >= 2) {
    const SweepRow& lo = rows.front();
    const SweepRow& hi = rows.back();
    if (args.param == "alpha") {
      std::printf("trend: ul_acc(%.3g)=%.4f <= ul_acc(%.3g)=%.4f : %s\n", lo.value, lo.ul_acc,
                  hi.value, hi.ul_acc, lo.ul_acc <= hi.ul_acc ? "yes" : "no");
      std::printf("trend: rm_acc(%.3g)=%.4f >= rm_acc(%.3g)=%.4f : %s\n", hi.value, hi.rm_acc,
                  lo.value, lo.rm_acc, hi.rm_acc >= lo.rm_acc ? "yes" : "no");
    } else if (args.param == "beta") {
      bool non_increasing = true;
      for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].ul_acc > rows[i - 1].ul_acc + 0.01) non_increasing = false;
      std::printf("trend: ul_acc non-increasing in beta (1pt noise allowed): %s\n",
                  non_increasing ? "yes" : "no");
    } else {
      std::printf("trend: ul_acc range [%.4f, %.4f]  rm_acc range [%.4f, %.4f]\n",
                  std::min_element(rows.begin(), rows.end(),
                                   [](auto& a, auto& b) { return a.ul_acc < b.ul_acc; })
                      ->ul_acc,
                  std::max_element(rows.begin(), rows.end(),
                                   [](auto& a, auto& b) { return a.ul_acc < b.ul_acc; })
                      ->ul_acc,
                  std::min_element(rows.begin(), rows.end(),
                                   [](auto& a, auto& b) { return a.rm_acc < b.rm_acc; })
                      ->rm_acc,
                  std::max_element(rows.begin(), rows.end(),
                                   [](auto& a, auto& b) { return a.rm_acc < b.rm_acc; })
                      ->rm_acc);
    }
  }
  return 0;
}

}  // namespace fedau
