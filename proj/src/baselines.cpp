#include "fedau/baselines.hpp"

#include <chrono>
#include <ostream>
#include <stdexcept>

#include "fedau/rng.hpp"

namespace fedau {

BaselineResult retrain_from_scratch(const FederationConfig& config,
                                    const std::vector<ClientDataset>& clients,
                                    const Dataset* eval_set, std::ostream* warn) {
  std::vector<ClientDataset> kept;
  std::vector<int> dropped;
  for (const auto& client : clients) {
    ClientDataset filtered;
    filtered.class_count = client.class_count;
    filtered.rows = client.rows;
    filtered.cols = client.cols;
    for (const auto& e : client.examples)
      if (!e.is_unlearning) filtered.examples.push_back(e);
    if (filtered.examples.empty()) {
      dropped.push_back(client.client_id);
      if (warn)
        *warn << "retrain: client " << client.client_id
              << " has no data left after removing the forget set; excluding it\n";
      continue;
    }
    filtered.client_id = static_cast<int>(kept.size());
    kept.push_back(std::move(filtered));
  }
  if (kept.empty()) throw std::runtime_error("retrain: every client lost all of its data");

  FederationConfig retrain_config = config;
  retrain_config.client_count = static_cast<int>(kept.size());

  const auto t0 = std::chrono::steady_clock::now();
  TrainedArtifacts artifacts =
      run_federation(retrain_config, kept, nullptr, Coefficients{}, eval_set);
  const auto t1 = std::chrono::steady_clock::now();

  if (artifacts.flagged_examples_seen != 0)
    throw std::logic_error("retrain: training touched flagged examples");

  BaselineResult out;
  out.model = std::move(artifacts.model);
  out.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  out.dropped_clients = std::move(dropped);
  out.rounds = std::move(artifacts.rounds);
  return out;
}

BaselineResult random_label_finetune(const Model& model,
                                     std::span<const LabeledExample> forget_set, int epochs,
                                     const SgdConfig& cfg, int class_count, std::uint64_t seed) {
  if (forget_set.empty()) throw std::invalid_argument("finetune: empty forget set");
  if (epochs < 0) throw std::invalid_argument("finetune: epochs must be >= 0");
  if (class_count < 2) throw std::invalid_argument("finetune: need at least 2 classes");

  Rng stream = make_stream(seed, StreamTag::Finetune);
  std::vector<LabeledExample> relabeled(forget_set.begin(), forget_set.end());
  for (auto& e : relabeled) {
    const int old = e.trained_label;
    int draw = static_cast<int>(stream.uniform_index(static_cast<std::size_t>(class_count - 1)));
    e.trained_label = draw + (draw >= old ? 1 : 0);
  }

  const auto t0 = std::chrono::steady_clock::now();
  Model current = model;
  std::vector<std::size_t> order(relabeled.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<const LabeledExample*> batch;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    stream.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t n =
          std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
      batch.clear();
      for (std::size_t i = 0; i < n; ++i) batch.push_back(&relabeled[order[start + i]]);
      current = sgd_step(current, std::span<const LabeledExample* const>(batch), cfg,
                         TrainableMask{true, true});
    }
  }
  const auto t1 = std::chrono::steady_clock::now();

  BaselineResult out;
  out.model = std::move(current);
  out.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  return out;
}

}  // namespace fedau
