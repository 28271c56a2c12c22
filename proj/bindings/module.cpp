#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fedau/experiment.hpp"
#include "fedau/nn.hpp"
#include "fedau/unlearning.hpp"

namespace py = pybind11;
using namespace fedau;

namespace {

// Single dense layer as plain python data: weights row-major [out][in].
struct PyHead {
  std::vector<std::vector<float>> weights;
  std::vector<float> bias;
};

LayerStack head_from_py(const PyHead& h, const char* what) {
  if (h.weights.empty() || h.bias.size() != h.weights.size())
    throw std::invalid_argument(std::string(what) + ": bias length must match weight rows");
  const std::size_t in_dim = h.weights.front().size();
  std::vector<float> flat;
  flat.reserve(h.weights.size() * in_dim);
  for (const auto& row : h.weights) {
    if (row.size() != in_dim)
      throw std::invalid_argument(std::string(what) + ": ragged weight rows");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  DenseLayer layer;
  layer.weights = Tensor({h.weights.size(), in_dim}, std::move(flat));
  layer.bias = Tensor({h.bias.size()}, h.bias);
  layer.activation = Activation::Identity;
  return {layer};
}

py::dict head_to_py(const LayerStack& stack) {
  const DenseLayer& layer = stack.front();
  std::vector<std::vector<float>> weights(layer.out_dim());
  for (std::size_t r = 0; r < layer.out_dim(); ++r) {
    weights[r].resize(layer.in_dim());
    for (std::size_t c = 0; c < layer.in_dim(); ++c) weights[r][c] = layer.weights.at(r, c);
  }
  py::dict out;
  out["weights"] = weights;
  out["bias"] = layer.bias.values();
  return out;
}

py::dict metrics_to_py(const MethodMetrics& row) {
  py::dict d;
  d["method"] = row.method;
  d["rm_acc"] = row.rm_acc;
  d["ul_acc"] = row.ul_acc;
  d["mia_acc"] = row.mia_acc;
  d["mia_recall"] = row.mia_recall;
  d["seconds"] = row.seconds;
  d["bytes"] = row.bytes;
  return d;
}

ExperimentConfig resolve(const std::string& preset, const std::string& config_path,
                         std::optional<std::uint64_t> seed) {
  if (preset.empty() == config_path.empty())
    throw ConfigError("run: give exactly one of preset= or config=");
  ExperimentConfig cfg = preset.empty() ? load_config_file(config_path) : preset_config(preset);
  if (seed) cfg.seed = *seed;
  return cfg;
}

py::dict run_py(const std::string& preset, const std::string& config_path,
                std::optional<std::uint64_t> seed, const std::string& out_dir) {
  const ExperimentConfig cfg = resolve(preset, config_path, seed);
  ExperimentResult result;
  if (out_dir.empty()) {
    result = run_experiment(cfg);
  } else {
    const std::filesystem::path out(out_dir);
    result = run_experiment(cfg, &out);
  }

  py::dict d;
  d["name"] = result.config.name;
  d["seed"] = result.config.seed;
  d["scope"] = scope_name(result.config.unlearning.scope);
  py::list methods;
  for (const MethodMetrics& row : result.rows) methods.append(metrics_to_py(row));
  d["methods"] = methods;
  d["alpha_bound"] = result.alpha_bound_value;
  d["beta_bound"] = result.beta_bound_value;
  d["r1_rate"] = result.requirements.r1_rate;
  d["r2_rate"] = result.requirements.r2_rate;
  d["train_seconds"] = result.train_seconds;
  d["unlearn_seconds"] = result.unlearn_seconds;
  d["dropped_clients"] = result.dropped_clients;
  if (!result.out_dir.empty()) d["out_dir"] = result.out_dir.string();
  return d;
}

py::list sweep_py(const std::string& param, const std::vector<double>& values,
                  const std::string& preset, const std::string& config_path,
                  std::optional<std::uint64_t> seed) {
  const ExperimentConfig cfg = resolve(preset, config_path, seed);
  py::list out;
  for (const SweepRow& row : run_sweep(cfg, param, values)) {
    py::dict d;
    d["value"] = row.value;
    d["ul_acc"] = row.ul_acc;
    d["rm_acc"] = row.rm_acc;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "federated unlearning via auxiliary classifier heads";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<MissingArtifactError>(m, "MissingArtifactError", PyExc_FileNotFoundError);
  py::register_exception<BoundRefusalError>(m, "BoundRefusalError", PyExc_ValueError);

  py::class_<PyHead>(m, "Head")
      .def(py::init<>())
      .def(py::init([](std::vector<std::vector<float>> weights, std::vector<float> bias) {
             PyHead h;
             h.weights = std::move(weights);
             h.bias = std::move(bias);
             return h;
           }),
           py::arg("weights"), py::arg("bias"))
      .def_readwrite("weights", &PyHead::weights)
      .def_readwrite("bias", &PyHead::bias);

  m.def("preset_names", &preset_names, "Built-in experiment preset names.");

  m.def("run", &run_py, py::arg("preset") = "", py::arg("config") = "",
        py::arg("seed") = std::nullopt, py::arg("out_dir") = "",
        "Full pipeline on a preset or config file: train, combine, baselines, metrics.");

  m.def("sweep", &sweep_py, py::arg("param"), py::arg("values"), py::arg("preset") = "",
        py::arg("config") = "", py::arg("seed") = std::nullopt,
        "Vary alpha, beta, gamma, proportion, or aux_position and tabulate ul/rm accuracy.");

  m.def(
      "sample_combine",
      [](const PyHead& trained, const PyHead& aux, double alpha) {
        return head_to_py(
            unlearn_samples(head_from_py(trained, "trained"), head_from_py(aux, "aux"), alpha));
      },
      py::arg("trained"), py::arg("aux"), py::arg("alpha"),
      "Sample/client scope combination: alpha * trained + (1 - alpha) * aux.");

  m.def(
      "class_combine",
      [](const PyHead& trained, const PyHead& aux, double beta) {
        return head_to_py(
            unlearn_class(head_from_py(trained, "trained"), head_from_py(aux, "aux"), beta));
      },
      py::arg("trained"), py::arg("aux"), py::arg("beta"),
      "Class scope combination: trained - beta * aux.");
}
