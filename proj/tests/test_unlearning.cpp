#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "fedau/nn.hpp"
#include "fedau/unlearning.hpp"
#include "helpers.hpp"

using namespace fedau;
using namespace fedau::testhelp;

namespace {

bool stacks_equal(const LayerStack& a, const LayerStack& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].weights.values() != b[i].weights.values() ||
        a[i].bias.values() != b[i].bias.values())
      return false;
  return true;
}

// Identity-feature model: the head IS the model, logits = W x + b.
Model head_model(const LayerStack& head, int classes) {
  Model m;
  m.head = head;
  m.class_count = classes;
  return m;
}

LayerStack zero_head(std::size_t out, std::size_t in) {
  DenseLayer layer;
  layer.weights = Tensor::zeros({out, in});
  layer.bias = Tensor::zeros({out});
  layer.activation = Activation::Identity;
  return {layer};
}

}  // namespace

TEST_SUITE("unlearning") {

TEST_CASE("unlearn_samples: alpha 1 and equal heads are both identities") {
  std::mt19937_64 g(71);
  const LayerStack trained = random_head(g, 4, 3);
  const LayerStack aux = random_head(g, 4, 3);
  CHECK(stacks_equal(unlearn_samples(trained, aux, 1.0), trained));
  for (double alpha : {0.3, 0.9})
    CHECK(stacks_equal(unlearn_samples(trained, trained, alpha), trained));
}

TEST_CASE("unlearn_samples: random heads match the float64 reference") {
  std::mt19937_64 g(72);
  const LayerStack trained = random_head(g, 4, 3);
  const LayerStack aux = random_head(g, 4, 3);
  const LayerStack got = unlearn_samples(trained, aux, 0.9);
  for (std::size_t i = 0; i < got[0].weights.size(); ++i) {
    // Terms round to float32 individually before the float32 sum.
    const float want = (float)(0.9 * (double)trained[0].weights[i]) +
                       (float)(0.1 * (double)aux[0].weights[i]);
    CHECK(got[0].weights[i] == doctest::Approx(want).epsilon(1e-7));
  }
  const LayerStack odd = random_head(g, 4, 5);
  CHECK_THROWS(unlearn_samples(trained, odd, 0.9));
  CHECK_THROWS(validate_alpha(0.0));
  CHECK_THROWS(validate_alpha(1.5));
  CHECK_NOTHROW(validate_alpha(1.0));
}

TEST_CASE("unlearn_class: beta 0 and a zero aux head are identities") {
  std::mt19937_64 g(73);
  const LayerStack trained = random_head(g, 4, 3);
  CHECK(stacks_equal(unlearn_class(trained, random_head(g, 4, 3), 0.0), trained));
  CHECK(stacks_equal(unlearn_class(trained, zero_head(4, 3), 2.5), trained));
  CHECK_THROWS(validate_beta(-0.5));
}

TEST_CASE("unlearn_class: subtraction matches the float64 reference") {
  std::mt19937_64 g(74);
  const LayerStack trained = random_head(g, 4, 3);
  const LayerStack aux = random_head(g, 4, 3);
  const LayerStack got = unlearn_class(trained, aux, 1.0);
  for (std::size_t i = 0; i < got[0].bias.size(); ++i) {
    const float want =
        (float)((double)trained[0].bias[i]) + (float)(-1.0 * (double)aux[0].bias[i]);
    CHECK(got[0].bias[i] == doctest::Approx(want).epsilon(1e-7));
  }
}

TEST_CASE("unlearn_class_multi: composition equals pairwise folding, bit for bit") {
  std::mt19937_64 g(75);
  const LayerStack trained = random_head(g, 4, 3);
  const LayerStack a1 = random_head(g, 4, 3);
  const LayerStack a2 = random_head(g, 4, 3);
  const LayerStack a3 = random_head(g, 4, 3);

  CHECK(stacks_equal(unlearn_class_multi(trained, {{&a1, 0.7}}), unlearn_class(trained, a1, 0.7)));
  CHECK(stacks_equal(unlearn_class_multi(trained, {{&a1, 0.0}, {&a2, 0.0}}), trained));

  const LayerStack multi =
      unlearn_class_multi(trained, {{&a1, 0.5}, {&a2, 1.0}, {&a3, 0.25}});
  LayerStack folded = unlearn_class(trained, a1, 0.5);
  folded = unlearn_class(folded, a2, 1.0);
  folded = unlearn_class(folded, a3, 0.25);
  CHECK(stacks_equal(multi, folded));

  CHECK_THROWS(unlearn_class_multi(trained, {}));
}

TEST_CASE("unlearn_samples_multi mirrors the single-head arithmetic") {
  std::mt19937_64 g(76);
  const LayerStack trained = random_head(g, 4, 3);
  const LayerStack agg = random_head(g, 4, 3);
  CHECK(stacks_equal(unlearn_samples_multi(trained, agg, 0.8), unlearn_samples(trained, agg, 0.8)));
  CHECK(stacks_equal(unlearn_samples_multi(trained, agg, 1.0), trained));
}

TEST_CASE("alpha_bound: direct substitution and the degenerate guard") {
  // Identity weights: logits mirror features, so one example [1, -1] has
  // margin 2 and max |logit| 1, giving delta/(delta + 2 N1) = 0.5.
  DenseLayer eye;
  eye.weights = Tensor({2, 2}, {1, 0, 0, 1});
  eye.bias = Tensor::zeros({2});
  eye.activation = Activation::Identity;
  const Model m = head_model({eye}, 2);
  const std::vector<LabeledExample> data = {make_example({1.0f, -1.0f}, 0)};
  CHECK(alpha_bound(m, data) == doctest::Approx(0.5));

  // Exact logit tie: no margin, no guarantee.
  const std::vector<LabeledExample> tie = {make_example({0.5f, 0.5f}, 0)};
  CHECK(alpha_bound(m, tie) == 0.0);

  const std::vector<LabeledExample> empty;
  CHECK_THROWS(alpha_bound(m, empty));
}

TEST_CASE("alpha_bound matches a brute-force scan on a random model") {
  std::mt19937_64 g(81);
  const Model m = head_model(random_head(g, 3, 4), 3);
  std::vector<LabeledExample> data;
  for (int i = 0; i < 20; ++i) data.push_back(make_example(random_floats(g, 4, 0.0f, 1.0f), 0));

  double delta = std::numeric_limits<double>::infinity(), n1 = 0.0;
  for (const auto& e : data) {
    auto logits = forward_ref(m.head, e.features);
    for (double& v : logits) v = (double)(float)v;
    std::vector<double> sorted = logits;
    std::sort(sorted.rbegin(), sorted.rend());
    delta = std::min(delta, sorted[0] - sorted[1]);
    for (double v : logits) n1 = std::max(n1, std::abs(v));
  }
  CHECK(alpha_bound(m, data) == doctest::Approx(delta / (delta + 2 * n1)).epsilon(1e-9));
}

TEST_CASE("beta_bound: substitution, the zero-aux sentinel, and brute force") {
  DenseLayer eye;
  eye.weights = Tensor({2, 2}, {1, 0, 0, 1});
  eye.bias = Tensor::zeros({2});
  eye.activation = Activation::Identity;
  const Model trained = head_model({eye}, 2);

  // Aux logits scaled to 0.1: bound = delta / (2 N2) = 2 / 0.2 = 10.
  DenseLayer tiny;
  tiny.weights = Tensor({2, 2}, {0.1f, 0, 0, 0.1f});
  tiny.bias = Tensor::zeros({2});
  tiny.activation = Activation::Identity;
  const Model aux = head_model({tiny}, 2);
  const std::vector<LabeledExample> data = {make_example({1.0f, -1.0f}, 0)};
  CHECK(beta_bound(trained, aux, data) == doctest::Approx(10.0));

  const Model silent = head_model(zero_head(2, 2), 2);
  CHECK(std::isinf(beta_bound(trained, silent, data)));

  std::mt19937_64 g(82);
  const Model rt = head_model(random_head(g, 3, 4), 3);
  const Model ra = head_model(random_head(g, 3, 4), 3);
  std::vector<LabeledExample> many;
  for (int i = 0; i < 20; ++i) many.push_back(make_example(random_floats(g, 4, 0.0f, 1.0f), 0));
  double delta = std::numeric_limits<double>::infinity(), n2 = 0.0;
  for (const auto& e : many) {
    auto lt = forward_ref(rt.head, e.features);
    for (double& v : lt) v = (double)(float)v;
    std::sort(lt.rbegin(), lt.rend());
    delta = std::min(delta, lt[0] - lt[1]);
    for (double v : forward_ref(ra.head, e.features)) n2 = std::max(n2, std::abs((double)(float)v));
  }
  CHECK(beta_bound(rt, ra, many) == doctest::Approx(delta / (2 * n2)).epsilon(1e-9));
}

TEST_CASE("verify_requirements: identity combination preserves every argmax") {
  std::mt19937_64 g(83);
  const LayerStack head = random_head(g, 3, 4);
  std::vector<LabeledExample> remaining, forget;
  for (int i = 0; i < 10; ++i) remaining.push_back(make_example(random_floats(g, 4), 0));
  for (int i = 0; i < 5; ++i) forget.push_back(make_example(random_floats(g, 4), 1, 1, true));
  const RequirementReport rep =
      verify_requirements({}, head, head, 3, remaining, forget);
  CHECK(rep.r1_rate == 1.0);
  CHECK(rep.remaining_total == 10);
  CHECK(rep.remaining_preserved == 10);
}

TEST_CASE("verify_requirements: a constructed full flip scores r2 = 1") {
  // Trained head always answers class 0; unlearned head always answers 1.
  DenseLayer to0, to1;
  to0.weights = Tensor::zeros({2, 1});
  to0.bias = Tensor({2}, {5.0f, 0.0f});
  to1.weights = Tensor::zeros({2, 1});
  to1.bias = Tensor({2}, {0.0f, 5.0f});
  std::vector<LabeledExample> forget;
  for (int i = 0; i < 6; ++i) forget.push_back(make_example({0.5f}, 0, 0, true));
  const RequirementReport rep =
      verify_requirements({}, {to0}, {to1}, 2, {}, forget);
  CHECK(rep.r2_rate == 1.0);
  CHECK(rep.unlearning_flipped == 6);
}

TEST_CASE("verify_requirements: rates equal a brute-force argmax comparison") {
  std::mt19937_64 g(84);
  const LayerStack trained = random_head(g, 4, 3);
  const LayerStack aux = random_head(g, 4, 3);
  const LayerStack unlearned = unlearn_samples(trained, aux, 0.6);
  std::vector<LabeledExample> remaining, forget;
  std::uniform_int_distribution<int> lab(0, 3);
  for (int i = 0; i < 50; ++i) remaining.push_back(make_example(random_floats(g, 3), lab(g)));
  for (int i = 0; i < 25; ++i) {
    const int y = lab(g);
    forget.push_back(make_example(random_floats(g, 3), y, y, true));
  }

  const auto as_f32 = [](std::vector<double> v) {
    for (double& x : v) x = (double)(float)x;
    return v;
  };
  std::size_t preserved = 0, flipped = 0;
  for (const auto& e : remaining) {
    const auto lt = as_f32(forward_ref(trained, e.features));
    const auto lu = as_f32(forward_ref(unlearned, e.features));
    preserved += argmax_ref(lt) == argmax_ref(lu);
  }
  for (const auto& e : forget) {
    const auto lu = as_f32(forward_ref(unlearned, e.features));
    flipped += argmax_ref(lu) != (std::size_t)e.trained_label;
  }

  const RequirementReport rep =
      verify_requirements({}, trained, unlearned, 4, remaining, forget, &aux, 0.0, true);
  CHECK(rep.remaining_preserved == preserved);
  CHECK(rep.unlearning_flipped == flipped);
  CHECK(rep.r1_rate == doctest::Approx(preserved / 50.0));
  CHECK(rep.r2_rate == doctest::Approx(flipped / 25.0));
  CHECK(rep.remaining_diagnostics.size() == 50);
  CHECK(rep.unlearning_diagnostics.size() == 25);

  const std::string json = requirement_report_json(rep);
  CHECK(json.find("r1_rate") != std::string::npos);
  CHECK(json.find("r2_rate") != std::string::npos);
}

TEST_CASE("margin predicates hold on every qualifying example across 100 trials") {
  // Where the sufficient condition fires, the combined head must preserve
  // the argmax, for every alpha (sample) or the given beta (class).
  // Qualifying examples must pass at a 100 percent rate.
  std::mt19937_64 g(2025);
  std::uniform_real_distribution<double> alpha_draw(0.0, 1.0), beta_draw(0.05, 2.0);
  std::size_t sample_qualified = 0, class_qualified = 0;

  for (int trial = 0; trial < 100; ++trial) {
    const LayerStack trained = random_head(g, 4, 3);
    const LayerStack aux = random_head(g, 4, 3);
    std::vector<LabeledExample> data;
    for (int i = 0; i < 20; ++i) data.push_back(make_example(random_floats(g, 3), 0));

    const Tensor tl = forward(trained, batch_features(std::span<const LabeledExample>(data)));
    const Tensor al = forward(aux, batch_features(std::span<const LabeledExample>(data)));

    const double alpha = alpha_draw(g);
    const LayerStack combined_s = unlearn_samples(trained, aux, std::max(alpha, 1e-9));
    const double beta = beta_draw(g);
    const LayerStack combined_c = unlearn_class(trained, aux, beta);
    const Tensor sl = forward(combined_s, batch_features(std::span<const LabeledExample>(data)));
    const Tensor cl = forward(combined_c, batch_features(std::span<const LabeledExample>(data)));

    for (std::size_t r = 0; r < data.size(); ++r) {
      if (sample_scope_guarantee(tl, al, r)) {
        sample_qualified++;
        REQUIRE(argmax_row(sl, r) == argmax_row(tl, r));
      }
      if (class_scope_guarantee(tl, al, r, beta)) {
        class_qualified++;
        REQUIRE(argmax_row(cl, r) == argmax_row(tl, r));
      }
    }
  }
  // The trials must actually exercise both predicates.
  CHECK(sample_qualified > 100);
  CHECK(class_qualified > 100);
}

TEST_CASE("the linear combination runs under 10 ms on a 128x10 head") {
  std::mt19937_64 g(85);
  const LayerStack trained = random_head(g, 10, 128);
  const LayerStack aux = random_head(g, 10, 128);
  unlearn_samples(trained, aux, 0.9);  // warm up allocator and caches
  const auto start = std::chrono::steady_clock::now();
  const LayerStack out = unlearn_samples(trained, aux, 0.9);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(out[0].weights.size() == 1280);
  CHECK(std::chrono::duration<double>(elapsed).count() < 0.01);
}

}  // TEST_SUITE
