#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "fedau/dataset.hpp"
#include "fedau/nn.hpp"
#include "fedau/unlearning.hpp"

namespace fedau {

enum class UnlearningScope { Samples, Class, Client };
enum class AuxMode { Private, Collaborative };

// Which clients are forgetting what. Sample scope expects flagged examples at
// each listed client; class scope expects the flagged examples to carry
// `target_class`; client scope treats each listed client's whole shard as the
// forget set.
struct UnlearningPlan {
  UnlearningScope scope = UnlearningScope::Samples;
  std::vector<int> unlearning_clients;
  int target_class = -1;           // class scope only
  AuxMode aux_mode = AuxMode::Private;
  double client_mix = 0.3;         // client scope: weight of the global head per epoch
};

struct FederationConfig {
  int client_count = 0;
  int rounds = 0;
  int local_epochs = 1;
  SgdConfig sgd;
  ModelSpec model;
  int aux_start_round = 1;        // values past `rounds` mean "never"
  int aux_epochs_per_round = 1;
  std::uint64_t seed = 0;
  bool weight_by_examples = false;  // n_k-weighted aggregation instead of 1/K
};

struct RoundMetrics {
  int round = 0;
  double global_acc = -1.0;  // -1 when no eval set was given
  std::vector<double> client_loss;
  double aux_ul_acc = -1.0;  // -1 before aux training starts / without a plan
};

struct LocalUpdate {
  LayerStack extractor;
  LayerStack head;
  double mean_loss = 0.0;
  long long flagged_seen = 0;  // is_unlearning examples consumed by SGD
};

struct TrainedArtifacts {
  Model model;
  std::map<int, LayerStack> aux_heads;       // per unlearning client
  std::optional<LayerStack> aux_aggregate;   // collaborative mode only
  std::vector<RoundMetrics> rounds;
  long long flagged_examples_seen = 0;
};

void validate_federation_config(const FederationConfig& config);

// One client's local pass: `local_epochs` epochs of shuffled minibatch SGD
// over the full model. Minibatch order comes from the stream
// (seed, Shuffle, client_id, round).
LocalUpdate local_train(const ClientDataset& client, const Model& global,
                        const FederationConfig& config, int round);

// Per-parameter mean across structurally identical stacks, accumulated in
// float64 (order-independent for well-scaled weights). `weights`, when given,
// must sum to a positive value and is normalized internally.
LayerStack fedavg_aggregate(const std::vector<const LayerStack*>& parts,
                            const std::vector<double>* weights = nullptr);

// Aux-head epochs against a frozen extractor. Minibatch order comes from
// (seed, AuxShuffle, client_id, round).
LayerStack train_aux_round(const LayerStack& extractor, const LayerStack& aux_head,
                           const ClientDataset& aux_data, const FederationConfig& config,
                           int round, int client_id);

// Client scope keeps the aux head anchored to the trained head: each epoch
// runs SGD on the relabeled shard, then blends (1 - mix) * sgd + mix * W^l.
LayerStack client_scope_aux_update(const LayerStack& extractor, const LayerStack& aux_head,
                                   const LayerStack& global_head, const ClientDataset& aux_data,
                                   const FederationConfig& config, double mix, int round,
                                   int client_id);

// The full loop. With no plan (or no listed clients) this is plain FedAvg and
// produces bit-identical weights to a run that also trains aux heads, since
// aux work never touches the learning path. `coefficients` and `eval_set`
// only feed the per-round metrics log.
TrainedArtifacts run_federation(const FederationConfig& config,
                                const std::vector<ClientDataset>& clients,
                                const UnlearningPlan* plan = nullptr,
                                const Coefficients& coefficients = {},
                                const Dataset* eval_set = nullptr);

// The combination the plan calls for, applied to trained artifacts.
LayerStack combine_for_plan(const TrainedArtifacts& artifacts, const UnlearningPlan& plan,
                            const Coefficients& coefficients);

}  // namespace fedau
