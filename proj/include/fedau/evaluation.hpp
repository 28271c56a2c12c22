#pragma once

#include <cstdint>
#include <map>
#include <span>

#include "fedau/dataset.hpp"
#include "fedau/federation.hpp"
#include "fedau/nn.hpp"

namespace fedau {

// Accuracy against true labels on the retained test distribution. Class scope
// removes the forgotten class from the test set first.
double rm_acc(const Model& model, const Dataset& test, UnlearningScope scope,
              int excluded_class = -1);

// Accuracy against as-trained labels on the forget set.
double ul_acc(const Model& model, std::span<const LabeledExample> forget_set);

struct MiaResult {
  double attack_accuracy = 0.0;  // balanced accuracy on the held-out half
  double attack_recall = 0.0;    // member detection rate on the held-out half
  double threshold = 0.0;
  int eval_members = 0;
  int eval_nonmembers = 0;
};

// Loss-threshold membership inference: per-example cross-entropy against
// as-trained labels; the classes are balanced by seeded subsampling, split
// 50/50 into calibration and evaluation halves, and the rule "member iff
// loss <= threshold" takes the threshold maximizing calibration balanced
// accuracy (smallest candidate on ties).
MiaResult mia_loss_threshold(const Model& model, std::span<const LabeledExample> members,
                             std::span<const LabeledExample> nonmembers, std::uint64_t seed);

// Serialized FAUW size of the aux heads a server must retain.
std::uint64_t stored_aux_bytes(const std::map<int, LayerStack>& aux_heads);

}  // namespace fedau
