#include "fedau/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fedau/checkpoint.hpp"
#include "fedau/rng.hpp"
#include "fedau/tensor.hpp"

namespace fedau {

namespace {

std::uint32_t read_be32(std::istream& in, const char* what, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in)
    throw std::runtime_error("idx: truncated " + std::string(what) + " in " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

// Fixed key for anchor streams; anchors are a function of (class, feature
// count) only, so regenerating a dataset with a new seed keeps the geometry.
constexpr std::uint64_t kAnchorKey = 0x665ED4;

}  // namespace

Dataset load_mnist(const std::filesystem::path& images_path,
                   const std::filesystem::path& labels_path, std::size_t limit) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("idx: cannot open " + images_path.string());
  std::ifstream lbl(labels_path, std::ios::binary);
  if (!lbl) throw std::runtime_error("idx: cannot open " + labels_path.string());

  const std::uint32_t img_magic = read_be32(img, "image magic", images_path.string());
  if (img_magic != 0x00000803) {
    std::ostringstream os;
    os << "idx: bad image magic 0x" << std::hex << img_magic << " in " << images_path.string();
    throw std::runtime_error(os.str());
  }
  const std::uint32_t lbl_magic = read_be32(lbl, "label magic", labels_path.string());
  if (lbl_magic != 0x00000801) {
    std::ostringstream os;
    os << "idx: bad label magic 0x" << std::hex << lbl_magic << " in " << labels_path.string();
    throw std::runtime_error(os.str());
  }

  const std::uint32_t img_count = read_be32(img, "image count", images_path.string());
  const std::uint32_t rows = read_be32(img, "row count", images_path.string());
  const std::uint32_t cols = read_be32(img, "column count", images_path.string());
  const std::uint32_t lbl_count = read_be32(lbl, "label count", labels_path.string());
  if (img_count != lbl_count) {
    std::ostringstream os;
    os << "idx: image count " << img_count << " does not match label count " << lbl_count;
    throw std::runtime_error(os.str());
  }
  if (rows == 0 || cols == 0) throw std::runtime_error("idx: zero image dimensions");

  std::size_t take = img_count;
  if (limit > 0) take = std::min<std::size_t>(take, limit);

  Dataset out;
  out.rows = static_cast<int>(rows);
  out.cols = static_cast<int>(cols);
  out.examples.reserve(take);
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> buf(pixels);
  int max_label = 0;
  for (std::size_t i = 0; i < take; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
    if (!img) {
      std::ostringstream os;
      os << "idx: truncated image payload at example " << i << " in " << images_path.string();
      throw std::runtime_error(os.str());
    }
    char lv;
    lbl.read(&lv, 1);
    if (!lbl) {
      std::ostringstream os;
      os << "idx: truncated label payload at example " << i << " in " << labels_path.string();
      throw std::runtime_error(os.str());
    }
    LabeledExample e;
    e.features.resize(pixels);
    for (std::size_t p = 0; p < pixels; ++p) e.features[p] = static_cast<float>(buf[p]) / 255.0f;
    e.true_label = e.trained_label = static_cast<unsigned char>(lv);
    max_label = std::max(max_label, e.true_label);
    out.examples.push_back(std::move(e));
  }
  out.class_count = std::max(10, max_label + 1);
  return out;
}

Dataset synth_blobs(const SynthSpec& spec) {
  if (spec.classes < 2) throw std::invalid_argument("blobs: need at least 2 classes");
  if (spec.per_class < 1) throw std::invalid_argument("blobs: per_class must be positive");
  if (spec.rows < 1 || spec.cols < 1) throw std::invalid_argument("blobs: bad geometry");
  if (spec.spread < 0.0) throw std::invalid_argument("blobs: spread must be >= 0");

  const std::size_t dim = static_cast<std::size_t>(spec.rows) * spec.cols;
  Dataset out;
  out.class_count = spec.classes;
  out.rows = spec.rows;
  out.cols = spec.cols;
  out.examples.reserve(static_cast<std::size_t>(spec.classes) * spec.per_class);

  for (int c = 0; c < spec.classes; ++c) {
    Rng anchor_stream = make_stream(kAnchorKey, StreamTag::BlobAnchor,
                                    static_cast<std::uint64_t>(c), dim);
    std::vector<double> anchor(dim);
    for (auto& v : anchor) v = anchor_stream.uniform_real(0.2, 0.8);

    Rng noise = make_stream(spec.seed, StreamTag::BlobNoise, static_cast<std::uint64_t>(c));
    for (int i = 0; i < spec.per_class; ++i) {
      LabeledExample e;
      e.true_label = e.trained_label = c;
      e.features.resize(dim);
      for (std::size_t j = 0; j < dim; ++j) {
        double v = anchor[j] + spec.spread * noise.normal();
        e.features[j] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      out.examples.push_back(std::move(e));
    }
  }
  return out;
}

namespace {

// Largest-remainder rounding of `total * proportions`; remainder units go to
// the largest fractional parts, client index breaking ties.
std::vector<std::size_t> largest_remainder_counts(const std::vector<double>& proportions,
                                                  std::size_t total) {
  const std::size_t k = proportions.size();
  std::vector<std::size_t> counts(k);
  std::vector<std::pair<double, std::size_t>> fracs(k);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double quota = proportions[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(quota));
    fracs[i] = {quota - std::floor(quota), i};
    assigned += counts[i];
  }
  std::sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) counts[fracs[r % k].second]++;
  return counts;
}

}  // namespace

std::vector<ClientDataset> dirichlet_partition(const Dataset& dataset, const PartitionPlan& plan) {
  if (plan.client_count < 1) throw std::invalid_argument("partition: need at least 1 client");
  if (!(plan.gamma > 0.0)) throw std::invalid_argument("partition: gamma must be positive");
  if (dataset.examples.empty()) throw std::invalid_argument("partition: empty dataset");
  if (dataset.class_count < 1) throw std::invalid_argument("partition: bad class count");

  const std::size_t K = static_cast<std::size_t>(plan.client_count);

  // per-class index lists in original order
  std::vector<std::vector<std::size_t>> by_class(dataset.class_count);
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    const int label = dataset.examples[i].true_label;
    if (label < 0 || label >= dataset.class_count)
      throw std::invalid_argument("partition: example label out of range");
    by_class[label].push_back(i);
  }

  const bool iid = std::isinf(plan.gamma);
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<std::vector<std::size_t>> assignment(K);
    for (int c = 0; c < dataset.class_count; ++c) {
      const auto& idx = by_class[c];
      if (idx.empty()) continue;
      if (iid) {
        for (std::size_t i = 0; i < idx.size(); ++i) assignment[i % K].push_back(idx[i]);
      } else {
        Rng stream = make_stream(plan.seed, StreamTag::Dirichlet,
                                 static_cast<std::uint64_t>(attempt),
                                 static_cast<std::uint64_t>(c));
        const auto counts = largest_remainder_counts(stream.dirichlet(plan.gamma, K), idx.size());
        std::size_t pos = 0;
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t i = 0; i < counts[k]; ++i) assignment[k].push_back(idx[pos++]);
      }
    }

    const bool all_nonempty =
        std::all_of(assignment.begin(), assignment.end(), [](const auto& a) { return !a.empty(); });
    if (!all_nonempty) {
      if (iid) break;  // round-robin never changes between attempts
      continue;
    }

    std::vector<ClientDataset> clients(K);
    for (std::size_t k = 0; k < K; ++k) {
      clients[k].client_id = static_cast<int>(k);
      clients[k].class_count = dataset.class_count;
      clients[k].rows = dataset.rows;
      clients[k].cols = dataset.cols;
      clients[k].examples.reserve(assignment[k].size());
      for (auto i : assignment[k]) clients[k].examples.push_back(dataset.examples[i]);
    }
    return clients;
  }
  throw std::runtime_error(
      "partition: could not produce a split with every client nonempty in 100 attempts");
}

ClientDataset inject_backdoor(const ClientDataset& client, double proportion,
                              const BackdoorSpec& spec, std::uint64_t seed) {
  if (!(proportion > 0.0) || proportion > 1.0)
    throw std::invalid_argument("backdoor: proportion must be in (0, 1]");
  if (spec.target_label < 0 || spec.target_label >= client.class_count)
    throw std::invalid_argument("backdoor: target label out of class range");
  if (spec.patch_rows < 1 || spec.patch_cols < 1 || spec.patch_rows > client.rows ||
      spec.patch_cols > client.cols)
    throw std::invalid_argument("backdoor: patch does not fit the image");
  if (!(spec.patch_value >= 0.0f) || !(spec.patch_value <= 1.0f))
    throw std::invalid_argument("backdoor: patch value must be in [0, 1]");

  const std::size_t n = client.examples.size();
  const std::size_t m = static_cast<std::size_t>(std::floor(proportion * static_cast<double>(n)));
  if (m == 0)
    throw std::invalid_argument("backdoor: proportion selects zero examples");

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < n; ++i)
    if (client.examples[i].true_label != spec.target_label) eligible.push_back(i);
  if (m > eligible.size()) {
    std::ostringstream os;
    os << "backdoor: need " << m << " examples outside class " << spec.target_label
       << " but only " << eligible.size() << " qualify";
    throw std::invalid_argument(os.str());
  }

  Rng stream = make_stream(seed, StreamTag::Backdoor, static_cast<std::uint64_t>(client.client_id));
  stream.shuffle(eligible);

  ClientDataset out = client;
  for (std::size_t s = 0; s < m; ++s) {
    LabeledExample& e = out.examples[eligible[s]];
    for (int r = 0; r < spec.patch_rows; ++r)
      for (int c = 0; c < spec.patch_cols; ++c)
        e.features[static_cast<std::size_t>(r) * client.cols + c] = spec.patch_value;
    e.trained_label = spec.target_label;
    e.is_unlearning = true;
  }
  return out;
}

ClientDataset build_aux_dataset_sample(const ClientDataset& client, int class_count,
                                       std::uint64_t seed) {
  if (class_count < 2) throw std::invalid_argument("aux dataset: need at least 2 classes");
  const bool any = std::any_of(client.examples.begin(), client.examples.end(),
                               [](const LabeledExample& e) { return e.is_unlearning; });
  if (!any) throw std::invalid_argument("aux dataset: client has no unlearning examples");

  Rng stream = make_stream(seed, StreamTag::AuxRelabel,
                           static_cast<std::uint64_t>(client.client_id));
  ClientDataset out = client;
  for (auto& e : out.examples) {
    if (!e.is_unlearning) continue;
    const int old = e.trained_label;
    int draw = static_cast<int>(stream.uniform_index(static_cast<std::size_t>(class_count - 1)));
    e.trained_label = draw + (draw >= old ? 1 : 0);
  }
  return out;
}

ClientDataset build_aux_dataset_class(const ClientDataset& client, int target_class) {
  if (target_class < 0 || target_class >= client.class_count)
    throw std::invalid_argument("aux dataset: target class out of range");
  bool any = false;
  for (const auto& e : client.examples) {
    if (!e.is_unlearning) continue;
    any = true;
    if (e.trained_label != target_class)
      throw std::invalid_argument(
          "aux dataset: unlearning example does not carry the target class label");
  }
  if (!any) throw std::invalid_argument("aux dataset: client has no unlearning examples");

  ClientDataset out = client;
  for (auto& e : out.examples)
    if (!e.is_unlearning) e.trained_label = target_class;
  return out;
}

void mark_class_unlearning(ClientDataset& client, int target_class) {
  if (target_class < 0 || target_class >= client.class_count)
    throw std::invalid_argument("mark class: target class out of range");
  for (auto& e : client.examples)
    if (e.trained_label == target_class) e.is_unlearning = true;
}

void mark_all_unlearning(ClientDataset& client) {
  for (auto& e : client.examples) e.is_unlearning = true;
}

void save_example_cache(const std::filesystem::path& stem,
                        const std::vector<LabeledExample>& examples, int class_count, int rows,
                        int cols, int client_id) {
  if (examples.empty()) throw std::invalid_argument("dataset cache: nothing to save");
  const std::size_t dim = examples.front().features.size();
  std::vector<float> flat;
  flat.reserve(examples.size() * dim);
  nlohmann::json meta;
  meta["class_count"] = class_count;
  meta["rows"] = rows;
  meta["cols"] = cols;
  meta["client_id"] = client_id;
  auto& t = meta["true_labels"] = nlohmann::json::array();
  auto& d = meta["trained_labels"] = nlohmann::json::array();
  auto& u = meta["is_unlearning"] = nlohmann::json::array();
  for (const auto& e : examples) {
    if (e.features.size() != dim)
      throw std::invalid_argument("dataset cache: inconsistent feature widths");
    flat.insert(flat.end(), e.features.begin(), e.features.end());
    t.push_back(e.true_label);
    d.push_back(e.trained_label);
    u.push_back(e.is_unlearning);
  }

  NamedTensors tensors;
  tensors.emplace_back("features", Tensor({examples.size(), dim}, std::move(flat)));
  save_checkpoint(std::filesystem::path(stem).concat(".fauw"), tensors);

  std::ofstream jf(std::filesystem::path(stem).concat(".json"), std::ios::trunc);
  if (!jf) throw std::runtime_error("dataset cache: cannot write sidecar for " + stem.string());
  jf << meta.dump(2) << "\n";
}

CachedExamples load_example_cache(const std::filesystem::path& stem) {
  const auto tensors = load_checkpoint(std::filesystem::path(stem).concat(".fauw"));
  if (tensors.size() != 1 || tensors.front().first != "features" ||
      tensors.front().second.rank() != 2)
    throw std::runtime_error("dataset cache: expected a single rank-2 'features' tensor in " +
                             stem.string() + ".fauw");
  const Tensor& feats = tensors.front().second;

  std::ifstream jf(std::filesystem::path(stem).concat(".json"));
  if (!jf) throw std::runtime_error("dataset cache: missing sidecar " + stem.string() + ".json");
  nlohmann::json meta = nlohmann::json::parse(jf);

  CachedExamples out;
  out.class_count = meta.at("class_count").get<int>();
  out.rows = meta.at("rows").get<int>();
  out.cols = meta.at("cols").get<int>();
  out.client_id = meta.at("client_id").get<int>();
  const auto& t = meta.at("true_labels");
  const auto& d = meta.at("trained_labels");
  const auto& u = meta.at("is_unlearning");
  const std::size_t n = feats.dim(0);
  if (t.size() != n || d.size() != n || u.size() != n)
    throw std::runtime_error("dataset cache: sidecar length does not match feature rows in " +
                             stem.string());
  const std::size_t dim = feats.dim(1);
  out.examples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.examples[i].features.assign(feats.data() + i * dim, feats.data() + (i + 1) * dim);
    out.examples[i].true_label = t[i].get<int>();
    out.examples[i].trained_label = d[i].get<int>();
    out.examples[i].is_unlearning = u[i].get<bool>();
  }
  return out;
}

}  // namespace fedau
