#include "fedau/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "fedau/rng.hpp"

namespace fedau {

namespace {

void validate_stack(const LayerStack& layers, const char* what) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const DenseLayer& l = layers[i];
    if (l.weights.rank() != 2)
      throw std::invalid_argument(std::string(what) + ": weights must be rank 2");
    if (l.bias.rank() != 1 || l.bias.dim(0) != l.weights.dim(0))
      throw std::invalid_argument(std::string(what) + ": bias shape must match weight rows");
    if (i > 0 && layers[i - 1].out_dim() != l.in_dim()) {
      std::ostringstream os;
      os << what << ": layer " << i << " expects " << l.in_dim() << " inputs but layer "
         << i - 1 << " emits " << layers[i - 1].out_dim();
      throw std::invalid_argument(os.str());
    }
  }
}

// Flattened view over extractor + head.
std::vector<const DenseLayer*> all_layers(const Model& model) {
  std::vector<const DenseLayer*> out;
  out.reserve(model.extractor.size() + model.head.size());
  for (const auto& l : model.extractor) out.push_back(&l);
  for (const auto& l : model.head) out.push_back(&l);
  return out;
}

struct DoubleGrads {
  // parallel to the flattened layer list
  std::vector<std::vector<double>> dweights;
  std::vector<std::vector<double>> dbias;
  double loss = 0.0;
};

// Forward + backward in float64 against trained_label; gradients are means
// over the batch. Shared by compute_gradients and sgd_step so the two agree
// bit for bit.
DoubleGrads backward_impl(const Model& model, std::span<const LabeledExample* const> batch) {
  validate_model(model);
  if (batch.empty()) throw std::invalid_argument("gradient: empty batch");

  const auto layers = all_layers(model);
  const std::size_t L = layers.size();
  const std::size_t B = batch.size();
  const std::size_t in_dim = layers.front()->in_dim();
  const int C = model.class_count;

  // activations[0] = inputs, activations[l+1] = output of layer l
  std::vector<std::vector<double>> acts(L + 1);
  std::vector<std::vector<double>> preacts(L);  // pre-activation of layer l

  acts[0].resize(B * in_dim);
  for (std::size_t n = 0; n < B; ++n) {
    const auto& f = batch[n]->features;
    if (f.size() != in_dim) {
      std::ostringstream os;
      os << "gradient: example has " << f.size() << " features, model expects " << in_dim;
      throw std::invalid_argument(os.str());
    }
    for (std::size_t j = 0; j < in_dim; ++j) acts[0][n * in_dim + j] = f[j];
  }

  for (std::size_t l = 0; l < L; ++l) {
    const DenseLayer& layer = *layers[l];
    const std::size_t in = layer.in_dim();
    const std::size_t out = layer.out_dim();
    preacts[l].resize(B * out);
    acts[l + 1].resize(B * out);
    const float* w = layer.weights.data();
    const float* b = layer.bias.data();
    for (std::size_t n = 0; n < B; ++n) {
      const double* x = acts[l].data() + n * in;
      for (std::size_t o = 0; o < out; ++o) {
        double acc = b[o];
        const float* wrow = w + o * in;
        for (std::size_t j = 0; j < in; ++j) acc += static_cast<double>(wrow[j]) * x[j];
        preacts[l][n * out + o] = acc;
        acts[l + 1][n * out + o] =
            (layer.activation == Activation::ReLU && acc < 0.0) ? 0.0 : acc;
      }
    }
  }

  // softmax cross-entropy on the final activations
  const std::size_t out_dim = layers.back()->out_dim();
  std::vector<double> delta(B * out_dim);
  double loss = 0.0;
  for (std::size_t n = 0; n < B; ++n) {
    const double* logits = acts[L].data() + n * out_dim;
    int label = batch[n]->trained_label;
    if (label < 0 || label >= C)
      throw std::invalid_argument("gradient: trained_label out of class range");
    double mx = logits[0];
    for (std::size_t c = 1; c < out_dim; ++c) mx = std::max(mx, logits[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < out_dim; ++c) denom += std::exp(logits[c] - mx);
    loss += std::log(denom) - (logits[label] - mx);
    for (std::size_t c = 0; c < out_dim; ++c) {
      double p = std::exp(logits[c] - mx) / denom;
      delta[n * out_dim + c] =
          (p - (static_cast<int>(c) == label ? 1.0 : 0.0)) / static_cast<double>(B);
    }
  }
  loss /= static_cast<double>(B);

  DoubleGrads grads;
  grads.loss = loss;
  grads.dweights.resize(L);
  grads.dbias.resize(L);

  for (std::size_t l = L; l-- > 0;) {
    const DenseLayer& layer = *layers[l];
    const std::size_t in = layer.in_dim();
    const std::size_t out = layer.out_dim();
    grads.dweights[l].assign(out * in, 0.0);
    grads.dbias[l].assign(out, 0.0);
    for (std::size_t n = 0; n < B; ++n) {
      const double* x = acts[l].data() + n * in;
      const double* d = delta.data() + n * out;
      for (std::size_t o = 0; o < out; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        double* grow = grads.dweights[l].data() + o * in;
        for (std::size_t j = 0; j < in; ++j) grow[j] += dv * x[j];
        grads.dbias[l][o] += dv;
      }
    }
    if (l > 0) {
      const DenseLayer& prev = *layers[l - 1];
      std::vector<double> next(B * in, 0.0);
      const float* w = layer.weights.data();
      for (std::size_t n = 0; n < B; ++n) {
        const double* d = delta.data() + n * out;
        double* nd = next.data() + n * in;
        for (std::size_t o = 0; o < out; ++o) {
          const double dv = d[o];
          if (dv == 0.0) continue;
          const float* wrow = w + o * in;
          for (std::size_t j = 0; j < in; ++j) nd[j] += dv * static_cast<double>(wrow[j]);
        }
        if (prev.activation == Activation::ReLU) {
          const double* z = preacts[l - 1].data() + n * in;
          for (std::size_t j = 0; j < in; ++j)
            if (z[j] <= 0.0) nd[j] = 0.0;
        }
      }
      delta = std::move(next);
    }
  }
  return grads;
}

Tensor to_float_tensor(std::vector<std::size_t> dims, const std::vector<double>& v) {
  std::vector<float> f(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) f[i] = static_cast<float>(v[i]);
  return Tensor(std::move(dims), std::move(f));
}

}  // namespace

void validate_model(const Model& model) {
  if (model.head.empty()) throw std::invalid_argument("model: head must have at least one layer");
  if (model.class_count < 2) throw std::invalid_argument("model: class_count must be at least 2");
  validate_stack(model.extractor, "model extractor");
  validate_stack(model.head, "model head");
  if (!model.extractor.empty() &&
      model.extractor.back().out_dim() != model.head.front().in_dim())
    throw std::invalid_argument("model: extractor output does not match head input");
  if (model.head.back().out_dim() != static_cast<std::size_t>(model.class_count))
    throw std::invalid_argument("model: head output does not match class_count");
  if (model.head.back().activation != Activation::Identity)
    throw std::invalid_argument("model: final head activation must be Identity");
}

Model init_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.input_dim == 0) throw std::invalid_argument("model spec: input_dim must be positive");
  if (spec.class_count < 2)
    throw std::invalid_argument("model spec: class_count must be at least 2");
  const int total = static_cast<int>(spec.hidden.size()) + 1;
  if (spec.head_layers < 1 || spec.head_layers > 3)
    throw std::invalid_argument("model spec: head_layers must be in [1, 3]");
  if (spec.head_layers > total)
    throw std::invalid_argument("model spec: head_layers exceeds layer count");

  std::vector<std::size_t> widths;
  widths.push_back(spec.input_dim);
  widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
  widths.push_back(static_cast<std::size_t>(spec.class_count));

  Rng stream = make_stream(seed, StreamTag::ModelInit);
  Model model;
  model.class_count = spec.class_count;
  for (int l = 0; l < total; ++l) {
    const std::size_t fan_in = widths[l];
    const std::size_t fan_out = widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<float> w(fan_out * fan_in);
    for (auto& v : w) v = static_cast<float>(stream.uniform_real(-limit, limit));
    DenseLayer layer{Tensor({fan_out, fan_in}, std::move(w)), Tensor::zeros({fan_out}),
                     l == total - 1 ? Activation::Identity : Activation::ReLU};
    if (l < total - spec.head_layers)
      model.extractor.push_back(std::move(layer));
    else
      model.head.push_back(std::move(layer));
  }
  validate_model(model);
  return model;
}

Tensor forward(const LayerStack& layers, const Tensor& batch) {
  if (batch.rank() != 2) throw std::invalid_argument("forward: batch must be rank 2");
  validate_stack(layers, "forward");
  if (layers.empty()) return batch;
  if (batch.dim(1) != layers.front().in_dim()) {
    std::ostringstream os;
    os << "forward: batch width " << batch.dim(1) << " does not match layer input "
       << layers.front().in_dim();
    throw std::invalid_argument(os.str());
  }

  const std::size_t B = batch.dim(0);
  std::vector<double> cur(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) cur[i] = batch[i];
  std::size_t width = batch.dim(1);

  for (const DenseLayer& layer : layers) {
    const std::size_t in = layer.in_dim();
    const std::size_t out = layer.out_dim();
    std::vector<double> next(B * out);
    const float* w = layer.weights.data();
    const float* b = layer.bias.data();
    for (std::size_t n = 0; n < B; ++n) {
      const double* x = cur.data() + n * in;
      for (std::size_t o = 0; o < out; ++o) {
        double acc = b[o];
        const float* wrow = w + o * in;
        for (std::size_t j = 0; j < in; ++j) acc += static_cast<double>(wrow[j]) * x[j];
        next[n * out + o] = (layer.activation == Activation::ReLU && acc < 0.0) ? 0.0 : acc;
      }
    }
    cur = std::move(next);
    width = out;
  }

  std::vector<float> out(cur.size());
  for (std::size_t i = 0; i < cur.size(); ++i) out[i] = static_cast<float>(cur[i]);
  return Tensor({B, width}, std::move(out));
}

Tensor forward(const Model& model, const Tensor& batch) {
  validate_model(model);
  return forward(model.head, forward(model.extractor, batch));
}

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t C = logits.dim(1);
  std::size_t best = 0;
  float bv = logits.at(row, 0);
  for (std::size_t c = 1; c < C; ++c) {
    if (logits.at(row, c) > bv) {
      bv = logits.at(row, c);
      best = c;
    }
  }
  return best;
}

CrossEntropyResult cross_entropy_with_grad(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw std::invalid_argument("cross_entropy: logits must be rank 2");
  const std::size_t B = logits.dim(0);
  const std::size_t C = logits.dim(1);
  if (C < 2) throw std::invalid_argument("cross_entropy: needs at least 2 classes");
  if (labels.size() != B)
    throw std::invalid_argument("cross_entropy: label count does not match batch");

  Tensor dlogits = Tensor::zeros({B, C});
  double loss = 0.0;
  for (std::size_t n = 0; n < B; ++n) {
    if (labels[n] < 0 || labels[n] >= static_cast<int>(C))
      throw std::invalid_argument("cross_entropy: label out of range");
    double mx = logits.at(n, 0);
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(logits.at(n, c)));
    double denom = 0.0;
    for (std::size_t c = 0; c < C; ++c) denom += std::exp(static_cast<double>(logits.at(n, c)) - mx);
    loss += std::log(denom) - (static_cast<double>(logits.at(n, labels[n])) - mx);
    for (std::size_t c = 0; c < C; ++c) {
      double p = std::exp(static_cast<double>(logits.at(n, c)) - mx) / denom;
      dlogits.at(n, c) = static_cast<float>(p - (static_cast<int>(c) == labels[n] ? 1.0 : 0.0));
    }
  }
  return {loss / static_cast<double>(B), std::move(dlogits)};
}

ModelGrad compute_gradients(const Model& model, std::span<const LabeledExample* const> batch) {
  DoubleGrads g = backward_impl(model, batch);
  ModelGrad out;
  out.loss = g.loss;
  const std::size_t E = model.extractor.size();
  for (std::size_t l = 0; l < g.dweights.size(); ++l) {
    const DenseLayer& layer = l < E ? model.extractor[l] : model.head[l - E];
    LayerGrad lg{to_float_tensor({layer.out_dim(), layer.in_dim()}, g.dweights[l]),
                 to_float_tensor({layer.out_dim()}, g.dbias[l])};
    if (l < E)
      out.extractor.push_back(std::move(lg));
    else
      out.head.push_back(std::move(lg));
  }
  return out;
}

Model sgd_step(const Model& model, std::span<const LabeledExample* const> batch,
               const SgdConfig& cfg, TrainableMask mask, double* loss_out) {
  if (cfg.learning_rate < 0.0) throw std::invalid_argument("sgd: learning_rate must be >= 0");
  if (cfg.weight_decay < 0.0) throw std::invalid_argument("sgd: weight_decay must be >= 0");
  if (!mask.extractor && !mask.head)
    throw std::invalid_argument("sgd: mask disables every parameter");

  DoubleGrads g = backward_impl(model, batch);
  if (loss_out) *loss_out = g.loss;
  Model out = model;
  const std::size_t E = model.extractor.size();
  const double lr = cfg.learning_rate;
  const double wd = cfg.weight_decay;

  auto apply = [&](DenseLayer& layer, std::size_t flat) {
    float* w = layer.weights.data();
    const std::vector<double>& dw = g.dweights[flat];
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      const double wi = w[i];
      w[i] = static_cast<float>(wi - lr * (dw[i] + wd * wi));
    }
    float* b = layer.bias.data();
    const std::vector<double>& db = g.dbias[flat];
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      const double bi = b[i];
      b[i] = static_cast<float>(bi - lr * (db[i] + wd * bi));
    }
    layer.weights.check_finite("sgd update");
    layer.bias.check_finite("sgd update");
  };

  if (mask.extractor)
    for (std::size_t l = 0; l < E; ++l) apply(out.extractor[l], l);
  if (mask.head)
    for (std::size_t l = 0; l < out.head.size(); ++l) apply(out.head[l], E + l);
  return out;
}

Model sgd_step(const Model& model, std::span<const LabeledExample> batch, const SgdConfig& cfg,
               TrainableMask mask, double* loss_out) {
  std::vector<const LabeledExample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& e : batch) ptrs.push_back(&e);
  return sgd_step(model, std::span<const LabeledExample* const>(ptrs), cfg, mask, loss_out);
}

LayerStack head_linear_combine(const std::vector<WeightedHead>& parts) {
  if (parts.empty()) throw std::invalid_argument("head combine: no parts");
  const LayerStack& first = *parts.front().head;
  if (first.empty()) throw std::invalid_argument("head combine: empty head");
  for (const auto& part : parts) {
    const LayerStack& h = *part.head;
    if (h.size() != first.size())
      throw std::invalid_argument("head combine: layer count mismatch");
    for (std::size_t l = 0; l < h.size(); ++l) {
      if (!h[l].weights.same_shape(first[l].weights) || !h[l].bias.same_shape(first[l].bias))
        throw std::invalid_argument("head combine: shape mismatch");
      if (h[l].activation != first[l].activation)
        throw std::invalid_argument("head combine: activation mismatch");
    }
  }

  LayerStack out = first;
  auto combine_tensor = [&](Tensor& dst, std::size_t layer, bool bias) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      float acc = 0.0f;
      for (std::size_t p = 0; p < parts.size(); ++p) {
        const Tensor& src =
            bias ? (*parts[p].head)[layer].bias : (*parts[p].head)[layer].weights;
        const float term = static_cast<float>(parts[p].coefficient * static_cast<double>(src[i]));
        acc = p == 0 ? term : acc + term;
      }
      dst[i] = acc;
    }
    dst.check_finite("head combine");
  };
  for (std::size_t l = 0; l < out.size(); ++l) {
    combine_tensor(out[l].weights, l, false);
    combine_tensor(out[l].bias, l, true);
  }
  return out;
}

Tensor batch_features(std::span<const LabeledExample* const> examples) {
  if (examples.empty()) throw std::invalid_argument("batch: no examples");
  const std::size_t d = examples.front()->features.size();
  std::vector<float> flat;
  flat.reserve(examples.size() * d);
  for (const auto* e : examples) {
    if (e->features.size() != d)
      throw std::invalid_argument("batch: inconsistent feature widths");
    flat.insert(flat.end(), e->features.begin(), e->features.end());
  }
  return Tensor({examples.size(), d}, std::move(flat));
}

Tensor batch_features(std::span<const LabeledExample> examples) {
  std::vector<const LabeledExample*> ptrs;
  ptrs.reserve(examples.size());
  for (const auto& e : examples) ptrs.push_back(&e);
  return batch_features(std::span<const LabeledExample* const>(ptrs));
}

namespace {

// Shared scan for accuracy/margin/extreme-logit queries; visits logits in
// chunks to bound memory.
template <typename Fn>
void for_each_logit_row(const Model& model, std::span<const LabeledExample> examples, Fn&& fn) {
  validate_model(model);
  if (examples.empty()) throw std::invalid_argument("evaluation: empty example set");
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < examples.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, examples.size() - start);
    Tensor logits = forward(model, batch_features(examples.subspan(start, n)));
    for (std::size_t r = 0; r < n; ++r) fn(examples[start + r], logits, r);
  }
}

}  // namespace

double evaluate_accuracy(const Model& model, std::span<const LabeledExample> examples,
                         LabelSource source) {
  std::size_t correct = 0;
  for_each_logit_row(model, examples, [&](const LabeledExample& e, const Tensor& logits,
                                          std::size_t row) {
    int label = source == LabelSource::TrueLabel ? e.true_label : e.trained_label;
    if (label < 0 || label >= model.class_count)
      throw std::invalid_argument("evaluation: label out of class range");
    if (argmax_row(logits, row) == static_cast<std::size_t>(label)) ++correct;
  });
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

double logit_margin_delta(const Model& model, std::span<const LabeledExample> examples) {
  double delta = std::numeric_limits<double>::infinity();
  for_each_logit_row(model, examples,
                     [&](const LabeledExample&, const Tensor& logits, std::size_t row) {
                       const std::size_t C = logits.dim(1);
                       float top = logits.at(row, 0), second = -std::numeric_limits<float>::infinity();
                       for (std::size_t c = 1; c < C; ++c) {
                         float v = logits.at(row, c);
                         if (v > top) {
                           second = top;
                           top = v;
                         } else if (v > second) {
                           second = v;
                         }
                       }
                       delta = std::min(delta, static_cast<double>(top) - second);
                     });
  return delta;
}

double max_abs_logit(const Model& model, std::span<const LabeledExample> examples) {
  double mx = 0.0;
  for_each_logit_row(model, examples,
                     [&](const LabeledExample&, const Tensor& logits, std::size_t row) {
                       for (std::size_t c = 0; c < logits.dim(1); ++c)
                         mx = std::max(mx, std::abs(static_cast<double>(logits.at(row, c))));
                     });
  return mx;
}

}  // namespace fedau
