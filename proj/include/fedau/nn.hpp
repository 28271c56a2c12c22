#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedau/example.hpp"
#include "fedau/tensor.hpp"

namespace fedau {

enum class Activation { ReLU, Identity };

// weights [out, in], bias [out]
struct DenseLayer {
  Tensor weights;
  Tensor bias;
  Activation activation = Activation::Identity;

  std::size_t in_dim() const { return weights.dim(1); }
  std::size_t out_dim() const { return weights.dim(0); }
};

// An ordered stack of dense layers. The feature extractor and the
// classification head are both stacks; heads end in an Identity layer whose
// output dimension is the class count.
using LayerStack = std::vector<DenseLayer>;

struct Model {
  LayerStack extractor;  // may be empty (identity feature map)
  LayerStack head;       // at least one layer; final output dim == class_count
  int class_count = 0;
};

// Architecture: input -> hidden[0] -> ... -> hidden[n-1] -> class_count,
// one dense layer per arrow, ReLU everywhere except the final Identity
// layer. The trailing `head_layers` layers form the head.
struct ModelSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  int class_count = 0;
  int head_layers = 1;
};

struct SgdConfig {
  double learning_rate = 0.01;
  double weight_decay = 4e-5;
  int batch_size = 32;
};

struct TrainableMask {
  bool extractor = true;
  bool head = true;
};

enum class LabelSource { TrueLabel, TrainedLabel };

struct WeightedHead {
  const LayerStack* head;
  double coefficient;
};

struct LayerGrad {
  Tensor weights;
  Tensor bias;
};

struct ModelGrad {
  std::vector<LayerGrad> extractor;
  std::vector<LayerGrad> head;
  double loss = 0.0;
};

struct CrossEntropyResult {
  double loss;     // mean over the batch
  Tensor dlogits;  // per-row softmax minus one-hot (not batch-scaled)
};

void validate_model(const Model& model);

// Glorot-uniform weights, zero biases, filled layer by layer in architecture
// order from the stream (seed, StreamTag::ModelInit).
Model init_model(const ModelSpec& spec, std::uint64_t seed);

// batch [N, in] -> [N, out]; accumulation in float64, output rounded to
// float32 after the activation.
Tensor forward(const LayerStack& layers, const Tensor& batch);
Tensor forward(const Model& model, const Tensor& batch);

// Lowest index wins ties.
std::size_t argmax_row(const Tensor& logits, std::size_t row);

CrossEntropyResult cross_entropy_with_grad(const Tensor& logits, const std::vector<int>& labels);

// Mean-over-batch gradients of the cross-entropy loss against trained_label.
ModelGrad compute_gradients(const Model& model, std::span<const LabeledExample* const> batch);

// One SGD step with coupled weight decay: w <- w - lr * (grad + decay * w),
// applied only where the mask allows. Update arithmetic runs in float64 and
// rounds once per parameter. `loss_out`, when given, receives the pre-update
// batch loss from the same backward pass.
Model sgd_step(const Model& model, std::span<const LabeledExample* const> batch,
               const SgdConfig& cfg, TrainableMask mask, double* loss_out = nullptr);
Model sgd_step(const Model& model, std::span<const LabeledExample> batch, const SgdConfig& cfg,
               TrainableMask mask, double* loss_out = nullptr);

// Per-parameter weighted sum over structurally identical heads. Each term is
// coefficient * parameter rounded once to float32; terms accumulate left to
// right in float32. That order is part of the contract: combining
// [(W, 1), (A, -b1), (B, -b2)] bit-matches folding pairwise combinations.
LayerStack head_linear_combine(const std::vector<WeightedHead>& parts);

double evaluate_accuracy(const Model& model, std::span<const LabeledExample> examples,
                         LabelSource source);

// Minimum over the examples of (top logit - second logit); 0 on exact ties.
double logit_margin_delta(const Model& model, std::span<const LabeledExample> examples);

// Maximum over examples and classes of |logit|.
double max_abs_logit(const Model& model, std::span<const LabeledExample> examples);

// Batch matrix of example features (rank 2, [n, feature_dim]).
Tensor batch_features(std::span<const LabeledExample* const> examples);
Tensor batch_features(std::span<const LabeledExample> examples);

}  // namespace fedau
