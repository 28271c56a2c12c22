#include "fedau/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fedau/checkpoint.hpp"
#include "fedau/rng.hpp"

namespace fedau {

double rm_acc(const Model& model, const Dataset& test, UnlearningScope scope,
              int excluded_class) {
  if (scope == UnlearningScope::Class) {
    if (excluded_class < 0 || excluded_class >= test.class_count)
      throw std::invalid_argument("rm_acc: class scope needs a valid excluded class");
    std::vector<LabeledExample> kept;
    for (const auto& e : test.examples)
      if (e.true_label != excluded_class) kept.push_back(e);
    if (kept.empty())
      throw std::invalid_argument("rm_acc: excluding the class empties the test set");
    return evaluate_accuracy(model, kept, LabelSource::TrueLabel);
  }
  if (test.examples.empty()) throw std::invalid_argument("rm_acc: empty test set");
  return evaluate_accuracy(model, test.examples, LabelSource::TrueLabel);
}

double ul_acc(const Model& model, std::span<const LabeledExample> forget_set) {
  if (forget_set.empty()) throw std::invalid_argument("ul_acc: empty forget set");
  return evaluate_accuracy(model, forget_set, LabelSource::TrainedLabel);
}

namespace {

std::vector<double> example_losses(const Model& model,
                                   std::span<const LabeledExample> examples) {
  std::vector<double> losses;
  losses.reserve(examples.size());
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < examples.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, examples.size() - start);
    const auto chunk = examples.subspan(start, n);
    const Tensor logits = forward(model, batch_features(chunk));
    for (std::size_t r = 0; r < n; ++r) {
      const int label = chunk[r].trained_label;
      if (label < 0 || label >= model.class_count)
        throw std::invalid_argument("mia: label out of class range");
      double mx = logits.at(r, 0);
      for (std::size_t c = 1; c < logits.dim(1); ++c)
        mx = std::max(mx, static_cast<double>(logits.at(r, c)));
      double denom = 0.0;
      for (std::size_t c = 0; c < logits.dim(1); ++c)
        denom += std::exp(static_cast<double>(logits.at(r, c)) - mx);
      losses.push_back(std::log(denom) - (static_cast<double>(logits.at(r, label)) - mx));
    }
  }
  return losses;
}

// balanced accuracy of "member iff loss <= threshold"
double balanced_accuracy(const std::vector<double>& member_losses,
                         const std::vector<double>& nonmember_losses, double threshold) {
  std::size_t hit = 0;
  for (double l : member_losses)
    if (l <= threshold) ++hit;
  std::size_t reject = 0;
  for (double l : nonmember_losses)
    if (l > threshold) ++reject;
  return 0.5 * (static_cast<double>(hit) / static_cast<double>(member_losses.size()) +
                static_cast<double>(reject) / static_cast<double>(nonmember_losses.size()));
}

}  // namespace

MiaResult mia_loss_threshold(const Model& model, std::span<const LabeledExample> members,
                             std::span<const LabeledExample> nonmembers, std::uint64_t seed) {
  if (members.size() < 4 || nonmembers.size() < 4)
    throw std::invalid_argument("mia: need at least 4 members and 4 nonmembers");

  std::vector<double> member_losses = example_losses(model, members);
  std::vector<double> nonmember_losses = example_losses(model, nonmembers);

  // balance by subsampling the larger side, then split each side in half
  Rng stream = make_stream(seed, StreamTag::Mia);
  stream.shuffle(member_losses);
  stream.shuffle(nonmember_losses);
  const std::size_t n = std::min(member_losses.size(), nonmember_losses.size());
  member_losses.resize(n);
  nonmember_losses.resize(n);
  const std::size_t half = n / 2;

  const std::vector<double> cal_m(member_losses.begin(), member_losses.begin() + half);
  const std::vector<double> eval_m(member_losses.begin() + half, member_losses.end());
  const std::vector<double> cal_n(nonmember_losses.begin(), nonmember_losses.begin() + half);
  const std::vector<double> eval_n(nonmember_losses.begin() + half, nonmember_losses.end());

  // candidate thresholds: below every calibration loss, between each sorted
  // neighbor pair, above every loss
  std::vector<double> sorted(cal_m);
  sorted.insert(sorted.end(), cal_n.begin(), cal_n.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> candidates;
  candidates.push_back(sorted.front() - 1.0);
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
    if (sorted[i] < sorted[i + 1]) candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  candidates.push_back(sorted.back() + 1.0);

  double best_threshold = candidates.front();
  double best_acc = -1.0;
  for (double t : candidates) {
    const double acc = balanced_accuracy(cal_m, cal_n, t);
    if (acc > best_acc) {  // strict: ties keep the smallest candidate
      best_acc = acc;
      best_threshold = t;
    }
  }

  MiaResult out;
  out.threshold = best_threshold;
  out.eval_members = static_cast<int>(eval_m.size());
  out.eval_nonmembers = static_cast<int>(eval_n.size());
  out.attack_accuracy = balanced_accuracy(eval_m, eval_n, best_threshold);
  std::size_t hit = 0;
  for (double l : eval_m)
    if (l <= best_threshold) ++hit;
  out.attack_recall = static_cast<double>(hit) / static_cast<double>(eval_m.size());
  return out;
}

std::uint64_t stored_aux_bytes(const std::map<int, LayerStack>& aux_heads) {
  std::uint64_t total = 0;
  for (const auto& [id, head] : aux_heads)
    total += serialize_tensors(stack_to_tensors(head, "head")).size();
  return total;
}

}  // namespace fedau
