#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "fedau/example.hpp"

namespace fedau {

// Examples plus the geometry needed to place pixel-space triggers.
struct Dataset {
  std::vector<LabeledExample> examples;
  int class_count = 0;
  int rows = 0;
  int cols = 0;
};

struct ClientDataset {
  int client_id = 0;
  std::vector<LabeledExample> examples;
  int class_count = 0;
  int rows = 0;
  int cols = 0;
};

// Gaussian clusters around per-class anchor points. Anchors depend only on
// (class, feature count), never on the seed, so train/test draws with
// different seeds share geometry. Values are clipped to [0, 1].
struct SynthSpec {
  int classes = 0;
  int per_class = 0;
  int rows = 0;
  int cols = 0;
  double spread = 0.1;
  std::uint64_t seed = 0;
};

// Top-left pixel patch forced to `patch_value`; patched examples are
// relabeled to `target_label` and flagged is_unlearning.
struct BackdoorSpec {
  int patch_rows = 3;
  int patch_cols = 3;
  float patch_value = 1.0f;
  int target_label = 0;
};

// gamma == infinity selects the IID split (round-robin per class).
struct PartitionPlan {
  double gamma = std::numeric_limits<double>::infinity();
  int client_count = 0;
  std::uint64_t seed = 0;
};

constexpr double kIidGamma = std::numeric_limits<double>::infinity();

// IDX image/label pair (big-endian headers, magics 0x803 / 0x801); pixels
// scale to [0, 1]. `limit` > 0 keeps only the first `limit` examples.
Dataset load_mnist(const std::filesystem::path& images_path,
                   const std::filesystem::path& labels_path, std::size_t limit = 0);

Dataset synth_blobs(const SynthSpec& spec);

// Splits each class's examples across clients by Dirichlet(gamma) proportions
// drawn per class, rounded by largest remainder. Redraws all proportions (up
// to 100 attempts) until every client is nonempty.
std::vector<ClientDataset> dirichlet_partition(const Dataset& dataset, const PartitionPlan& plan);

// Poisons floor(proportion * n) examples chosen uniformly among those whose
// true label differs from the trigger target.
ClientDataset inject_backdoor(const ClientDataset& client, double proportion,
                              const BackdoorSpec& spec, std::uint64_t seed);

// Flagged examples get a fresh uniform label over the other classes;
// remaining examples are untouched.
ClientDataset build_aux_dataset_sample(const ClientDataset& client, int class_count,
                                       std::uint64_t seed);

// Remaining examples are relabeled to the target class; flagged examples
// (which must already carry it) are untouched.
ClientDataset build_aux_dataset_class(const ClientDataset& client, int target_class);

// Scenario helpers: flag a class or a whole client as the forget set.
void mark_class_unlearning(ClientDataset& client, int target_class);
void mark_all_unlearning(ClientDataset& client);

// Dataset cache: `<stem>.fauw` holds the feature matrix, `<stem>.json` the
// labels, flags, and geometry.
void save_example_cache(const std::filesystem::path& stem,
                        const std::vector<LabeledExample>& examples, int class_count, int rows,
                        int cols, int client_id);
struct CachedExamples {
  std::vector<LabeledExample> examples;
  int class_count = 0;
  int rows = 0;
  int cols = 0;
  int client_id = -1;  // -1 when the cache holds a plain dataset
};
CachedExamples load_example_cache(const std::filesystem::path& stem);

}  // namespace fedau
