#include "fedau/federation.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fedau/rng.hpp"

namespace fedau {

namespace {

// Shuffled-minibatch epochs shared by local learning and aux training.
// Returns the mean minibatch loss weighted by batch size.
struct EpochResult {
  Model model;
  double mean_loss;
  long long flagged_seen;
};

EpochResult sgd_epochs(Model model, const std::vector<LabeledExample>& examples, int epochs,
                       const SgdConfig& cfg, TrainableMask mask, Rng& order_stream) {
  if (examples.empty()) throw std::invalid_argument("training: empty dataset");
  if (cfg.batch_size < 1) throw std::invalid_argument("training: batch_size must be positive");

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  long long flagged = 0;
  std::vector<const LabeledExample*> batch;
  batch.reserve(static_cast<std::size_t>(cfg.batch_size));

  for (int epoch = 0; epoch < epochs; ++epoch) {
    order_stream.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t n =
          std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
      batch.clear();
      for (std::size_t i = 0; i < n; ++i) {
        const LabeledExample& e = examples[order[start + i]];
        batch.push_back(&e);
        if (e.is_unlearning) ++flagged;
      }
      double loss = 0.0;
      model = sgd_step(model, std::span<const LabeledExample* const>(batch), cfg, mask, &loss);
      loss_sum += loss * static_cast<double>(n);
      loss_count += n;
    }
  }
  return {std::move(model), loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0,
          flagged};
}

std::vector<LabeledExample> collect_flagged(const std::vector<ClientDataset>& clients,
                                            const std::vector<int>& ids) {
  std::vector<LabeledExample> out;
  for (int id : ids)
    for (const auto& e : clients[static_cast<std::size_t>(id)].examples)
      if (e.is_unlearning) out.push_back(e);
  return out;
}

}  // namespace

void validate_federation_config(const FederationConfig& config) {
  if (config.client_count < 1)
    throw std::invalid_argument("federation: client_count must be at least 1");
  if (config.rounds < 1) throw std::invalid_argument("federation: rounds must be at least 1");
  if (config.local_epochs < 1)
    throw std::invalid_argument("federation: local_epochs must be at least 1");
  if (config.aux_start_round < 1)
    throw std::invalid_argument("federation: aux_start_round must be at least 1");
  if (config.aux_epochs_per_round < 1)
    throw std::invalid_argument("federation: aux_epochs_per_round must be at least 1");
  if (config.sgd.batch_size < 1)
    throw std::invalid_argument("federation: batch_size must be positive");
  if (config.sgd.learning_rate < 0.0 || config.sgd.weight_decay < 0.0)
    throw std::invalid_argument("federation: negative sgd hyperparameter");
}

LocalUpdate local_train(const ClientDataset& client, const Model& global,
                        const FederationConfig& config, int round) {
  Rng order = make_stream(config.seed, StreamTag::Shuffle,
                          static_cast<std::uint64_t>(client.client_id),
                          static_cast<std::uint64_t>(round));
  EpochResult r = sgd_epochs(global, client.examples, config.local_epochs, config.sgd,
                             TrainableMask{true, true}, order);
  return {std::move(r.model.extractor), std::move(r.model.head), r.mean_loss, r.flagged_seen};
}

LayerStack fedavg_aggregate(const std::vector<const LayerStack*>& parts,
                            const std::vector<double>* weights) {
  if (parts.empty()) throw std::invalid_argument("aggregate: no parts");
  const LayerStack& first = *parts.front();
  if (first.empty()) throw std::invalid_argument("aggregate: empty stack");
  for (const auto* p : parts) {
    if (p->size() != first.size()) throw std::invalid_argument("aggregate: layer count mismatch");
    for (std::size_t l = 0; l < first.size(); ++l)
      if (!(*p)[l].weights.same_shape(first[l].weights) ||
          !(*p)[l].bias.same_shape(first[l].bias) ||
          (*p)[l].activation != first[l].activation)
        throw std::invalid_argument("aggregate: shape mismatch at layer " + std::to_string(l));
  }

  std::vector<double> w(parts.size(), 1.0 / static_cast<double>(parts.size()));
  if (weights) {
    if (weights->size() != parts.size())
      throw std::invalid_argument("aggregate: weight count mismatch");
    double sum = 0.0;
    for (double v : *weights) {
      if (v < 0.0) throw std::invalid_argument("aggregate: negative weight");
      sum += v;
    }
    if (!(sum > 0.0)) throw std::invalid_argument("aggregate: weights sum to zero");
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = (*weights)[i] / sum;
  }

  LayerStack out = first;
  for (std::size_t l = 0; l < out.size(); ++l) {
    auto average_into = [&](Tensor& dst, bool bias) {
      for (std::size_t i = 0; i < dst.size(); ++i) {
        double acc = 0.0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
          const Tensor& src = bias ? (*parts[p])[l].bias : (*parts[p])[l].weights;
          acc += w[p] * static_cast<double>(src[i]);
        }
        dst[i] = static_cast<float>(acc);
      }
    };
    average_into(out[l].weights, false);
    average_into(out[l].bias, true);
  }
  return out;
}

LayerStack train_aux_round(const LayerStack& extractor, const LayerStack& aux_head,
                           const ClientDataset& aux_data, const FederationConfig& config,
                           int round, int client_id) {
  Rng order = make_stream(config.seed, StreamTag::AuxShuffle,
                          static_cast<std::uint64_t>(client_id),
                          static_cast<std::uint64_t>(round));
  Model aux_model{extractor, aux_head, config.model.class_count};
  EpochResult r = sgd_epochs(std::move(aux_model), aux_data.examples,
                             config.aux_epochs_per_round, config.sgd,
                             TrainableMask{false, true}, order);
  return std::move(r.model.head);
}

LayerStack client_scope_aux_update(const LayerStack& extractor, const LayerStack& aux_head,
                                   const LayerStack& global_head, const ClientDataset& aux_data,
                                   const FederationConfig& config, double mix, int round,
                                   int client_id) {
  if (!(mix >= 0.0) || !(mix <= 1.0))
    throw std::invalid_argument("aux update: mix must be in [0, 1]");
  Rng order = make_stream(config.seed, StreamTag::AuxShuffle,
                          static_cast<std::uint64_t>(client_id),
                          static_cast<std::uint64_t>(round));
  LayerStack current = aux_head;
  for (int epoch = 0; epoch < config.aux_epochs_per_round; ++epoch) {
    Model aux_model{extractor, std::move(current), config.model.class_count};
    EpochResult r =
        sgd_epochs(std::move(aux_model), aux_data.examples, 1, config.sgd,
                   TrainableMask{false, true}, order);
    current = head_linear_combine({{&r.model.head, 1.0 - mix}, {&global_head, mix}});
  }
  return current;
}

LayerStack combine_for_plan(const TrainedArtifacts& artifacts, const UnlearningPlan& plan,
                            const Coefficients& coefficients) {
  if (plan.unlearning_clients.empty()) throw std::invalid_argument("combine: empty plan");
  if (plan.scope == UnlearningScope::Class) {
    std::vector<std::pair<const LayerStack*, double>> parts;
    for (int id : plan.unlearning_clients) {
      auto it = artifacts.aux_heads.find(id);
      if (it == artifacts.aux_heads.end())
        throw std::runtime_error("combine: no aux head for client " + std::to_string(id));
      parts.emplace_back(&it->second, coefficients.beta);
    }
    return unlearn_class_multi(artifacts.model.head, parts);
  }
  // sample/client scopes blend toward one aux head: the collaborative
  // aggregate when present, the client's own otherwise, or the mean of the
  // private heads for a multi-client private plan.
  if (artifacts.aux_aggregate)
    return unlearn_samples_multi(artifacts.model.head, *artifacts.aux_aggregate,
                                 coefficients.alpha);
  if (plan.unlearning_clients.size() == 1) {
    auto it = artifacts.aux_heads.find(plan.unlearning_clients.front());
    if (it == artifacts.aux_heads.end())
      throw std::runtime_error("combine: no aux head for client " +
                               std::to_string(plan.unlearning_clients.front()));
    return unlearn_samples(artifacts.model.head, it->second, coefficients.alpha);
  }
  std::vector<const LayerStack*> parts;
  for (int id : plan.unlearning_clients) {
    auto it = artifacts.aux_heads.find(id);
    if (it == artifacts.aux_heads.end())
      throw std::runtime_error("combine: no aux head for client " + std::to_string(id));
    parts.push_back(&it->second);
  }
  return unlearn_samples_multi(artifacts.model.head, fedavg_aggregate(parts),
                               coefficients.alpha);
}

TrainedArtifacts run_federation(const FederationConfig& config,
                                const std::vector<ClientDataset>& clients,
                                const UnlearningPlan* plan, const Coefficients& coefficients,
                                const Dataset* eval_set) {
  validate_federation_config(config);
  if (clients.size() != static_cast<std::size_t>(config.client_count))
    throw std::invalid_argument("federation: client list does not match client_count");
  for (std::size_t k = 0; k < clients.size(); ++k) {
    if (clients[k].client_id != static_cast<int>(k))
      throw std::invalid_argument("federation: client ids must be 0..K-1 in order");
    if (clients[k].examples.empty())
      throw std::invalid_argument("federation: client " + std::to_string(k) + " has no data");
  }

  const bool aux_planned = plan != nullptr && !plan->unlearning_clients.empty();
  if (aux_planned) {
    for (int id : plan->unlearning_clients) {
      if (id < 0 || id >= config.client_count)
        throw std::invalid_argument("federation: unlearning client id out of range");
      if (plan->scope == UnlearningScope::Class &&
          (plan->target_class < 0 || plan->target_class >= config.model.class_count))
        throw std::invalid_argument("federation: target class out of range");
      if (plan->scope == UnlearningScope::Class && plan->aux_mode == AuxMode::Collaborative)
        throw std::invalid_argument("federation: class scope aux heads are private");
    }
  }

  TrainedArtifacts artifacts;
  artifacts.model = init_model(config.model, config.seed);

  // Class-scope aux data is deterministic and built once. Sample and client
  // scopes redraw the random wrong labels every round (the training algorithm
  // re-sets D^u' inside the loop), so those are rebuilt per round below.
  std::map<int, ClientDataset> aux_data;
  std::vector<LabeledExample> forget_union;
  if (aux_planned) {
    if (plan->scope == UnlearningScope::Class)
      for (int id : plan->unlearning_clients)
        aux_data.emplace(id, build_aux_dataset_class(clients[static_cast<std::size_t>(id)],
                                                     plan->target_class));
    forget_union = collect_flagged(clients, plan->unlearning_clients);
  }

  const bool collaborative = aux_planned && plan->aux_mode == AuxMode::Collaborative;
  bool aux_started = false;
  std::optional<LayerStack> shared_aux;

  for (int t = 1; t <= config.rounds; ++t) {
    std::vector<LocalUpdate> updates(clients.size());
    for (std::size_t k = 0; k < clients.size(); ++k) {
      try {
        updates[k] = local_train(clients[k], artifacts.model, config, t);
      } catch (const std::exception& e) {
        std::ostringstream os;
        os << "federation: round " << t << " client " << k << ": " << e.what();
        throw std::runtime_error(os.str());
      }
      artifacts.flagged_examples_seen += updates[k].flagged_seen;
    }

    if (aux_planned && t >= config.aux_start_round) {
      if (!aux_started) {
        // aux heads start as copies of the head distributed this round
        for (int id : plan->unlearning_clients) artifacts.aux_heads[id] = artifacts.model.head;
        if (collaborative) shared_aux = artifacts.model.head;
        aux_started = true;
      }
      if (plan->scope != UnlearningScope::Class)
        for (int id : plan->unlearning_clients)
          aux_data.insert_or_assign(
              id, build_aux_dataset_sample(clients[static_cast<std::size_t>(id)],
                                           config.model.class_count,
                                           derive_key(config.seed, static_cast<std::uint64_t>(t))));
      for (int id : plan->unlearning_clients) {
        const LayerStack& from = collaborative ? *shared_aux : artifacts.aux_heads[id];
        const LayerStack& client_extractor = updates[static_cast<std::size_t>(id)].extractor;
        try {
          artifacts.aux_heads[id] =
              plan->scope == UnlearningScope::Client
                  ? client_scope_aux_update(client_extractor, from, artifacts.model.head,
                                            aux_data.at(id), config, plan->client_mix, t, id)
                  : train_aux_round(client_extractor, from, aux_data.at(id), config, t, id);
        } catch (const std::exception& e) {
          std::ostringstream os;
          os << "federation: round " << t << " aux client " << id << ": " << e.what();
          throw std::runtime_error(os.str());
        }
      }
      if (collaborative) {
        std::vector<const LayerStack*> parts;
        for (int id : plan->unlearning_clients) parts.push_back(&artifacts.aux_heads.at(id));
        shared_aux = fedavg_aggregate(parts);
      }
    }

    // aggregate in ascending client order
    {
      std::vector<const LayerStack*> ext_parts, head_parts;
      std::vector<double> weights;
      for (std::size_t k = 0; k < updates.size(); ++k) {
        ext_parts.push_back(&updates[k].extractor);
        head_parts.push_back(&updates[k].head);
        weights.push_back(static_cast<double>(clients[k].examples.size()));
      }
      const std::vector<double>* wp = config.weight_by_examples ? &weights : nullptr;
      if (!artifacts.model.extractor.empty())
        artifacts.model.extractor = fedavg_aggregate(ext_parts, wp);
      artifacts.model.head = fedavg_aggregate(head_parts, wp);
    }

    RoundMetrics rm;
    rm.round = t;
    for (const auto& u : updates) rm.client_loss.push_back(u.mean_loss);
    if (eval_set && !eval_set->examples.empty())
      rm.global_acc = evaluate_accuracy(artifacts.model, eval_set->examples,
                                        LabelSource::TrueLabel);
    if (aux_started && !forget_union.empty()) {
      if (collaborative) artifacts.aux_aggregate = shared_aux;
      const LayerStack combined = combine_for_plan(artifacts, *plan, coefficients);
      const Model unlearned{artifacts.model.extractor, combined, config.model.class_count};
      rm.aux_ul_acc = evaluate_accuracy(unlearned, forget_union, LabelSource::TrainedLabel);
    }
    artifacts.rounds.push_back(std::move(rm));
  }

  if (collaborative && shared_aux) artifacts.aux_aggregate = shared_aux;
  return artifacts;
}

}  // namespace fedau
