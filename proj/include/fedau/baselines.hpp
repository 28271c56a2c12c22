#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "fedau/dataset.hpp"
#include "fedau/federation.hpp"

namespace fedau {

struct BaselineResult {
  Model model;
  double wall_seconds = 0.0;
  std::vector<int> dropped_clients;   // clients left empty after the forget set was removed
  std::vector<RoundMetrics> rounds;
};

// Trains a fresh model from the same seed on the clients with every flagged
// example removed. Clients left empty are excluded with a warning on `warn`.
// Asserts the instrumented access counter recorded zero flagged examples.
BaselineResult retrain_from_scratch(const FederationConfig& config,
                                    const std::vector<ClientDataset>& clients,
                                    const Dataset* eval_set = nullptr,
                                    std::ostream* warn = nullptr);

// Whole-model SGD on the forget set with labels resampled uniformly away
// from each example's trained label.
BaselineResult random_label_finetune(const Model& model,
                                     std::span<const LabeledExample> forget_set, int epochs,
                                     const SgdConfig& cfg, int class_count, std::uint64_t seed);

}  // namespace fedau
