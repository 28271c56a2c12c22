#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fedau/dataset.hpp"
#include "fedau/example.hpp"
#include "fedau/nn.hpp"
#include "fedau/tensor.hpp"

namespace fedau::testhelp {

// Test fixtures draw from std::mt19937_64 so they stay independent of the
// library's own generator.
inline std::vector<float> random_floats(std::mt19937_64& g, std::size_t n, float lo = -1.0f,
                                        float hi = 1.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> out(n);
  for (auto& v : out) v = d(g);
  return out;
}

inline DenseLayer random_dense(std::mt19937_64& g, std::size_t out_dim, std::size_t in_dim,
                               Activation act) {
  DenseLayer layer;
  layer.weights = Tensor({out_dim, in_dim}, random_floats(g, out_dim * in_dim));
  layer.bias = Tensor({out_dim}, random_floats(g, out_dim));
  layer.activation = act;
  return layer;
}

inline LayerStack random_head(std::mt19937_64& g, std::size_t out_dim, std::size_t in_dim) {
  return {random_dense(g, out_dim, in_dim, Activation::Identity)};
}

inline LabeledExample make_example(std::vector<float> features, int true_label,
                                   int trained_label = -1, bool flagged = false) {
  LabeledExample e;
  e.features = std::move(features);
  e.true_label = true_label;
  e.trained_label = trained_label < 0 ? true_label : trained_label;
  e.is_unlearning = flagged;
  return e;
}

inline ClientDataset make_client(int id, std::vector<LabeledExample> examples, int class_count,
                                 int rows, int cols) {
  ClientDataset c;
  c.client_id = id;
  c.examples = std::move(examples);
  c.class_count = class_count;
  c.rows = rows;
  c.cols = cols;
  return c;
}

// Reference forward pass in float64, written directly from the layer
// definition: y = act(W x + b), ReLU or identity.
inline std::vector<double> forward_ref(const LayerStack& layers, const std::vector<float>& input) {
  std::vector<double> x(input.begin(), input.end());
  for (const DenseLayer& layer : layers) {
    const std::size_t out_dim = layer.weights.dim(0);
    const std::size_t in_dim = layer.weights.dim(1);
    std::vector<double> y(out_dim);
    for (std::size_t r = 0; r < out_dim; ++r) {
      double acc = static_cast<double>(layer.bias[r]);
      for (std::size_t c = 0; c < in_dim; ++c)
        acc += static_cast<double>(layer.weights.at(r, c)) * x[c];
      if (layer.activation == Activation::ReLU && acc < 0.0) acc = 0.0;
      y[r] = acc;
    }
    x = std::move(y);
  }
  return x;
}

inline std::size_t argmax_ref(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace fedau::testhelp
