#pragma once

#include <vector>

namespace fedau {

// One training or evaluation example. `true_label` is the ground-truth class;
// `trained_label` is what the model was (or will be) fit against, which
// diverges from the truth for poisoned or relabeled examples. `is_unlearning`
// flags membership in the forget set.
struct LabeledExample {
  std::vector<float> features;
  int true_label = 0;
  int trained_label = 0;
  bool is_unlearning = false;
};

}  // namespace fedau
