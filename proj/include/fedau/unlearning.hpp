#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedau/example.hpp"
#include "fedau/nn.hpp"

namespace fedau {

// Coefficients of the unlearning combination. alpha blends toward the aux
// head (sample/client scopes), beta scales the aux subtraction (class scope).
struct Coefficients {
  double alpha = 0.9;
  double beta = 1.0;
};

void validate_alpha(double alpha);
void validate_beta(double beta);

// Sample/client scopes: alpha * W + (1 - alpha) * A.
LayerStack unlearn_samples(const LayerStack& trained_head, const LayerStack& aux_head,
                           double alpha);

// Class scope: W - beta * A.
LayerStack unlearn_class(const LayerStack& trained_head, const LayerStack& aux_head, double beta);

// Multi-client class scope: W - sum_k beta_k * A_k, accumulated in the given
// order (callers pass clients in ascending id). Bit-equal to folding
// unlearn_class pairwise in the same order.
LayerStack unlearn_class_multi(const LayerStack& trained_head,
                               const std::vector<std::pair<const LayerStack*, double>>& aux_heads);

// Multi-client sample scope on an already-aggregated aux head.
LayerStack unlearn_samples_multi(const LayerStack& trained_head, const LayerStack& aggregated_aux,
                                 double alpha);

// Largest guaranteed-safe alpha: delta / (delta + 2 N1) where delta is the
// minimum top-vs-second logit margin of the trained model on the remaining
// data and N1 its largest absolute logit. 0 when delta <= 0.
double alpha_bound(const Model& trained, std::span<const LabeledExample> remaining);

// Largest guaranteed-safe beta: delta / (2 N2) with N2 the aux model's
// largest absolute logit on the remaining data. 0 when delta <= 0; +infinity
// when N2 == 0.
double beta_bound(const Model& trained, const Model& aux, std::span<const LabeledExample> remaining);

// Per-example sufficient conditions for argmax preservation under the
// combination, exact given the logits:
//   sample scope: the two heads already agree on the argmax;
//   class scope:  margin(trained) > 2 * beta * max_i |aux logit_i|.
bool sample_scope_guarantee(const Tensor& trained_logits, const Tensor& aux_logits,
                            std::size_t row);
bool class_scope_guarantee(const Tensor& trained_logits, const Tensor& aux_logits,
                           std::size_t row, double beta);

struct ExampleDiagnostic {
  std::size_t index = 0;
  bool satisfied = false;   // R1: argmax preserved; R2: argmax left the label
  double margin = 0.0;      // trained-model top-vs-second margin
  double aux_abs_max = 0.0; // largest |aux logit| (0 when no aux model given)
  bool guaranteed = false;  // sufficient condition held (remaining side only)
};

struct RequirementReport {
  std::size_t remaining_total = 0;
  std::size_t remaining_preserved = 0;
  std::size_t unlearning_total = 0;
  std::size_t unlearning_flipped = 0;
  double r1_rate = 0.0;  // argmax preservation rate on the remaining data
  double r2_rate = 0.0;  // as-trained-label escape rate on the unlearning data
  std::vector<ExampleDiagnostic> remaining_diagnostics;   // verbose only
  std::vector<ExampleDiagnostic> unlearning_diagnostics;  // verbose only
};

// Measures both requirements for an unlearned head against the trained head
// over shared extractor features. `aux` (optional) feeds the guarantee and
// aux-magnitude diagnostics.
RequirementReport verify_requirements(const LayerStack& extractor, const LayerStack& trained_head,
                                      const LayerStack& unlearned_head, int class_count,
                                      std::span<const LabeledExample> remaining,
                                      std::span<const LabeledExample> unlearning,
                                      const LayerStack* aux_head = nullptr, double beta = 0.0,
                                      bool verbose = false);

std::string requirement_report_json(const RequirementReport& report);

}  // namespace fedau
