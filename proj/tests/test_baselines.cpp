#include <chrono>
#include <cstdint>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "fedau/baselines.hpp"
#include "fedau/dataset.hpp"
#include "fedau/evaluation.hpp"
#include "fedau/federation.hpp"
#include "fedau/unlearning.hpp"
#include "helpers.hpp"

using namespace fedau;
using namespace fedau::testhelp;

namespace {

std::vector<ClientDataset> blob_clients(int classes, int per_class, int clients,
                                        std::uint64_t seed, double spread = 0.08) {
  SynthSpec spec;
  spec.classes = classes;
  spec.per_class = per_class;
  spec.rows = 2;
  spec.cols = 2;
  spec.spread = spread;
  spec.seed = seed;
  const Dataset d = synth_blobs(spec);
  PartitionPlan plan;
  plan.gamma = kIidGamma;
  plan.client_count = clients;
  plan.seed = seed;
  return dirichlet_partition(d, plan);
}

FederationConfig small_config(int clients, int rounds, std::uint64_t seed) {
  FederationConfig cfg;
  cfg.client_count = clients;
  cfg.rounds = rounds;
  cfg.local_epochs = 1;
  cfg.sgd.learning_rate = 0.1;
  cfg.sgd.weight_decay = 1e-4;
  cfg.sgd.batch_size = 16;
  cfg.model.input_dim = 4;
  cfg.model.hidden = {16, 8};
  cfg.model.class_count = 3;
  cfg.model.head_layers = 1;
  cfg.aux_start_round = rounds + 1;
  cfg.aux_epochs_per_round = 1;
  cfg.seed = seed;
  return cfg;
}

bool stacks_equal(const LayerStack& a, const LayerStack& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].weights.values() != b[i].weights.values() ||
        a[i].bias.values() != b[i].bias.values())
      return false;
  return true;
}

bool models_equal(const Model& a, const Model& b) {
  return stacks_equal(a.extractor, b.extractor) && stacks_equal(a.head, b.head);
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("retrain with nothing flagged reproduces plain training bit for bit") {
  const auto clients = blob_clients(3, 20, 3, 31);
  const FederationConfig cfg = small_config(3, 5, 31);
  const TrainedArtifacts plain = run_federation(cfg, clients);
  const BaselineResult retrained = retrain_from_scratch(cfg, clients);
  CHECK(models_equal(plain.model, retrained.model));
  CHECK(retrained.dropped_clients.empty());
  CHECK(retrained.rounds.size() == 5);
  CHECK(retrained.wall_seconds > 0.0);
}

TEST_CASE("retrain removes flagged examples and still trains") {
  auto clients = blob_clients(3, 20, 3, 37);
  // Flag half of client 1's shard; retraining must drop those rows only.
  const std::size_t half = clients[1].examples.size() / 2;
  for (std::size_t i = 0; i < half; ++i) clients[1].examples[i].is_unlearning = true;

  const FederationConfig cfg = small_config(3, 5, 37);
  const BaselineResult retrained = retrain_from_scratch(cfg, clients);
  CHECK(retrained.dropped_clients.empty());

  // Same run on hand-filtered clients must agree exactly.
  auto filtered = clients;
  filtered[1].examples.erase(filtered[1].examples.begin(),
                             filtered[1].examples.begin() + (long)half);
  const TrainedArtifacts want = run_federation(cfg, filtered);
  CHECK(models_equal(retrained.model, want.model));
}

TEST_CASE("a client left empty is dropped with a warning") {
  auto clients = blob_clients(3, 20, 3, 41);
  for (auto& e : clients[2].examples) e.is_unlearning = true;

  const FederationConfig cfg = small_config(3, 3, 41);
  std::ostringstream warn;
  const BaselineResult retrained = retrain_from_scratch(cfg, clients, nullptr, &warn);
  CHECK(retrained.dropped_clients == std::vector<int>{2});
  CHECK(warn.str().find("no data left") != std::string::npos);

  // Dropping every client is unrecoverable.
  for (auto& c : clients)
    for (auto& e : c.examples) e.is_unlearning = true;
  CHECK_THROWS_AS((void)retrain_from_scratch(cfg, clients), std::runtime_error);
}

TEST_CASE("retrain is deterministic across repeated calls") {
  auto clients = blob_clients(3, 20, 2, 43);
  clients[0].examples[0].is_unlearning = true;
  const FederationConfig cfg = small_config(2, 4, 43);
  const BaselineResult a = retrain_from_scratch(cfg, clients);
  const BaselineResult b = retrain_from_scratch(cfg, clients);
  CHECK(models_equal(a.model, b.model));
}

TEST_CASE("random-label finetuning: zero epochs and zero rate are identities") {
  const FederationConfig cfg = small_config(1, 1, 47);
  const Model model = init_model(cfg.model, cfg.seed);
  std::mt19937_64 g(47);
  std::vector<LabeledExample> forget;
  for (int i = 0; i < 12; ++i)
    forget.push_back(make_example(random_floats(g, 4, 0.0f, 1.0f), i % 3, i % 3, true));

  const BaselineResult idle = random_label_finetune(model, forget, 0, cfg.sgd, 3, 7);
  CHECK(models_equal(idle.model, model));

  SgdConfig still = cfg.sgd;
  still.learning_rate = 0.0;
  still.weight_decay = 0.0;
  const BaselineResult same = random_label_finetune(model, forget, 3, still, 3, 7);
  CHECK(models_equal(same.model, model));

  const BaselineResult moved = random_label_finetune(model, forget, 3, cfg.sgd, 3, 7);
  CHECK(!models_equal(moved.model, model));

  const std::vector<LabeledExample> empty;
  CHECK_THROWS(random_label_finetune(model, empty, 1, cfg.sgd, 3, 7));
  CHECK_THROWS(random_label_finetune(model, forget, -1, cfg.sgd, 3, 7));
  CHECK_THROWS(random_label_finetune(model, forget, 1, cfg.sgd, 1, 7));
}

TEST_CASE("finetuning pushes the forget set away from its trained labels") {
  // Train briefly on blobs, then finetune on one client's shard with labels
  // resampled; accuracy against the as-trained labels has to fall.
  const auto clients = blob_clients(3, 30, 2, 53, 0.05);
  // Init seed 55: seed 53 draws a dead-ReLU start that never learns the
  // blobs, so there is nothing to push away from.
  const FederationConfig cfg = small_config(2, 20, 55);
  const TrainedArtifacts trained = run_federation(cfg, clients);

  std::vector<LabeledExample> forget(clients[0].examples.begin(),
                                     clients[0].examples.begin() + 20);
  for (auto& e : forget) e.is_unlearning = true;

  const double before = ul_acc(trained.model, forget);
  SgdConfig ft = cfg.sgd;
  ft.learning_rate = 0.2;
  const BaselineResult tuned = random_label_finetune(trained.model, forget, 10, ft, 3, 53);
  const double after = ul_acc(tuned.model, forget);
  CHECK(before > 0.8);
  CHECK(after < before);
}

TEST_CASE("cost ordering: combination, then finetuning, then retraining") {
  const auto clients = blob_clients(3, 40, 3, 59);
  const FederationConfig cfg = small_config(3, 15, 59);
  const TrainedArtifacts trained = run_federation(cfg, clients);
  const BaselineResult retrained = retrain_from_scratch(cfg, clients);

  std::vector<LabeledExample> forget(clients[0].examples.begin(),
                                     clients[0].examples.begin() + 10);
  const BaselineResult tuned =
      random_label_finetune(trained.model, forget, 2, cfg.sgd, 3, 59);

  std::mt19937_64 g(59);
  const LayerStack aux = random_head(g, 3, 8);
  unlearn_samples(trained.model.head, aux, 0.9);  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  const LayerStack combined = unlearn_samples(trained.model.head, aux, 0.9);
  const double combine_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  CHECK(combined.size() == 1);
  CHECK(combine_seconds < tuned.wall_seconds);
  CHECK(tuned.wall_seconds < retrained.wall_seconds);
}

}  // TEST_SUITE
