#include "fedau/unlearning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace fedau {

void validate_alpha(double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0)
    throw std::invalid_argument("unlearn: alpha must be in (0, 1]");
}

void validate_beta(double beta) {
  if (!(beta >= 0.0) || !std::isfinite(beta))
    throw std::invalid_argument("unlearn: beta must be finite and >= 0");
}

LayerStack unlearn_samples(const LayerStack& trained_head, const LayerStack& aux_head,
                           double alpha) {
  validate_alpha(alpha);
  return head_linear_combine({{&trained_head, alpha}, {&aux_head, 1.0 - alpha}});
}

LayerStack unlearn_class(const LayerStack& trained_head, const LayerStack& aux_head, double beta) {
  validate_beta(beta);
  return head_linear_combine({{&trained_head, 1.0}, {&aux_head, -beta}});
}

LayerStack unlearn_class_multi(
    const LayerStack& trained_head,
    const std::vector<std::pair<const LayerStack*, double>>& aux_heads) {
  if (aux_heads.empty()) throw std::invalid_argument("unlearn: no aux heads");
  std::vector<WeightedHead> parts;
  parts.reserve(aux_heads.size() + 1);
  parts.push_back({&trained_head, 1.0});
  for (const auto& [head, beta] : aux_heads) {
    validate_beta(beta);
    parts.push_back({head, -beta});
  }
  return head_linear_combine(parts);
}

LayerStack unlearn_samples_multi(const LayerStack& trained_head, const LayerStack& aggregated_aux,
                                 double alpha) {
  return unlearn_samples(trained_head, aggregated_aux, alpha);
}

double alpha_bound(const Model& trained, std::span<const LabeledExample> remaining) {
  const double delta = logit_margin_delta(trained, remaining);
  if (delta <= 0.0) return 0.0;
  const double n1 = max_abs_logit(trained, remaining);
  return delta / (delta + 2.0 * n1);
}

double beta_bound(const Model& trained, const Model& aux,
                  std::span<const LabeledExample> remaining) {
  const double delta = logit_margin_delta(trained, remaining);
  if (delta <= 0.0) return 0.0;
  const double n2 = max_abs_logit(aux, remaining);
  if (n2 == 0.0) return std::numeric_limits<double>::infinity();
  return delta / (2.0 * n2);
}

namespace {

struct RowStats {
  std::size_t argmax;
  double margin;  // top minus second
};

RowStats row_stats(const Tensor& logits, std::size_t row) {
  const std::size_t C = logits.dim(1);
  std::size_t best = 0;
  double top = logits.at(row, 0);
  double second = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 1; c < C; ++c) {
    const double v = logits.at(row, c);
    if (v > top) {
      second = top;
      top = v;
      best = c;
    } else if (v > second) {
      second = v;
    }
  }
  return {best, top - second};
}

double row_abs_max(const Tensor& logits, std::size_t row) {
  double mx = 0.0;
  for (std::size_t c = 0; c < logits.dim(1); ++c)
    mx = std::max(mx, std::abs(static_cast<double>(logits.at(row, c))));
  return mx;
}

}  // namespace

bool sample_scope_guarantee(const Tensor& trained_logits, const Tensor& aux_logits,
                            std::size_t row) {
  return argmax_row(trained_logits, row) == argmax_row(aux_logits, row);
}

bool class_scope_guarantee(const Tensor& trained_logits, const Tensor& aux_logits,
                           std::size_t row, double beta) {
  return row_stats(trained_logits, row).margin > 2.0 * beta * row_abs_max(aux_logits, row);
}

RequirementReport verify_requirements(const LayerStack& extractor, const LayerStack& trained_head,
                                      const LayerStack& unlearned_head, int class_count,
                                      std::span<const LabeledExample> remaining,
                                      std::span<const LabeledExample> unlearning,
                                      const LayerStack* aux_head, double beta, bool verbose) {
  if (remaining.empty() && unlearning.empty())
    throw std::invalid_argument("verify: both example sets are empty");

  const Model trained{extractor, trained_head, class_count};
  const Model unlearned{extractor, unlearned_head, class_count};
  validate_model(trained);
  validate_model(unlearned);

  RequirementReport report;
  constexpr std::size_t kChunk = 512;

  auto scan = [&](std::span<const LabeledExample> examples, bool remaining_side) {
    for (std::size_t start = 0; start < examples.size(); start += kChunk) {
      const std::size_t n = std::min(kChunk, examples.size() - start);
      const Tensor feats = forward(extractor, batch_features(examples.subspan(start, n)));
      const Tensor lt = forward(trained_head, feats);
      const Tensor lu = forward(unlearned_head, feats);
      Tensor la;
      if (aux_head) la = forward(*aux_head, feats);
      for (std::size_t r = 0; r < n; ++r) {
        const auto st = row_stats(lt, r);
        const std::size_t hat = argmax_row(lu, r);
        ExampleDiagnostic diag;
        diag.index = start + r;
        diag.margin = st.margin;
        diag.aux_abs_max = aux_head ? row_abs_max(la, r) : 0.0;
        if (remaining_side) {
          diag.satisfied = hat == st.argmax;
          diag.guaranteed =
              aux_head != nullptr &&
              (beta > 0.0 ? class_scope_guarantee(lt, la, r, beta)
                          : sample_scope_guarantee(lt, la, r));
          report.remaining_total++;
          if (diag.satisfied) report.remaining_preserved++;
          if (verbose) report.remaining_diagnostics.push_back(diag);
        } else {
          const int label = examples[start + r].trained_label;
          diag.satisfied = hat != static_cast<std::size_t>(label);
          report.unlearning_total++;
          if (diag.satisfied) report.unlearning_flipped++;
          if (verbose) report.unlearning_diagnostics.push_back(diag);
        }
      }
    }
  };

  scan(remaining, true);
  scan(unlearning, false);

  report.r1_rate = report.remaining_total == 0
                       ? 1.0
                       : static_cast<double>(report.remaining_preserved) /
                             static_cast<double>(report.remaining_total);
  report.r2_rate = report.unlearning_total == 0
                       ? 1.0
                       : static_cast<double>(report.unlearning_flipped) /
                             static_cast<double>(report.unlearning_total);
  return report;
}

std::string requirement_report_json(const RequirementReport& report) {
  nlohmann::json j;
  j["r1_rate"] = report.r1_rate;
  j["r2_rate"] = report.r2_rate;
  j["remaining_total"] = report.remaining_total;
  j["remaining_preserved"] = report.remaining_preserved;
  j["unlearning_total"] = report.unlearning_total;
  j["unlearning_flipped"] = report.unlearning_flipped;
  auto dump_diag = [](const std::vector<ExampleDiagnostic>& diags) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& d : diags) {
      arr.push_back({{"index", d.index},
                     {"satisfied", d.satisfied},
                     {"margin", d.margin},
                     {"aux_abs_max", d.aux_abs_max},
                     {"guaranteed", d.guaranteed}});
    }
    return arr;
  };
  if (!report.remaining_diagnostics.empty() || !report.unlearning_diagnostics.empty()) {
    j["remaining_diagnostics"] = dump_diag(report.remaining_diagnostics);
    j["unlearning_diagnostics"] = dump_diag(report.unlearning_diagnostics);
  }
  return j.dump(2);
}

}  // namespace fedau
