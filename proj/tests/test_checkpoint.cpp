#include <cstdint>
#include <cstring>
#include <filesystem>
#include <random>
#include <vector>

#include "doctest.h"
#include "fedau/checkpoint.hpp"
#include "fedau/nn.hpp"
#include "helpers.hpp"

using namespace fedau;
using namespace fedau::testhelp;

namespace {

void push_u16(std::vector<std::uint8_t>& v, std::uint16_t x) {
  v.push_back(x & 0xFF);
  v.push_back((x >> 8) & 0xFF);
}

void push_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back((x >> (8 * i)) & 0xFF);
}

void push_u64(std::vector<std::uint8_t>& v, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) v.push_back((x >> (8 * i)) & 0xFF);
}

void push_f32(std::vector<std::uint8_t>& v, float x) {
  std::uint32_t bits;
  std::memcpy(&bits, &x, 4);
  push_u32(v, bits);
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("serialization matches the byte layout, field by field") {
  const NamedTensors tensors = {{"t", Tensor({2}, {1.0f, -2.5f})}};
  std::vector<std::uint8_t> want = {'F', 'A', 'U', 'W'};
  push_u32(want, 1);  // version
  push_u32(want, 1);  // tensor count
  push_u16(want, 1);  // name length
  want.push_back('t');
  want.push_back(1);  // rank
  push_u64(want, 2);  // dim 0
  push_f32(want, 1.0f);
  push_f32(want, -2.5f);
  CHECK(serialize_tensors(tensors) == want);
}

TEST_CASE("round trip is bit exact") {
  std::mt19937_64 g(11);
  const NamedTensors tensors = {
      {"extractor.0.weight", Tensor({3, 4}, random_floats(g, 12))},
      {"extractor.0.bias", Tensor({3}, random_floats(g, 3))},
      {"head.0.weight", Tensor({2, 3}, random_floats(g, 6))},
  };
  const auto bytes = serialize_tensors(tensors);
  const NamedTensors parsed = parse_tensors(bytes);
  REQUIRE(parsed.size() == tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    CHECK(parsed[i].first == tensors[i].first);
    CHECK(parsed[i].second.dims() == tensors[i].second.dims());
    CHECK(parsed[i].second.values() == tensors[i].second.values());
  }
  CHECK(serialize_tensors(parsed) == bytes);
}

TEST_CASE("parser rejects bad magic, truncation, and version drift") {
  auto bytes = serialize_tensors({{"t", Tensor({2}, {1.0f, 2.0f})}});

  auto corrupt = bytes;
  corrupt[0] = 'X';
  CHECK_THROWS(parse_tensors(corrupt));

  auto versioned = bytes;
  versioned[4] = 9;
  CHECK_THROWS(parse_tensors(versioned));

  for (std::size_t cut : {bytes.size() - 1, bytes.size() - 4, std::size_t{10}, std::size_t{3}}) {
    std::vector<std::uint8_t> shorter(bytes.begin(), bytes.begin() + (std::ptrdiff_t)cut);
    CHECK_THROWS(parse_tensors(shorter));
  }

  std::vector<std::uint8_t> empty;
  CHECK_THROWS(parse_tensors(empty));
}

TEST_CASE("save and load through a file preserve bytes") {
  std::mt19937_64 g(12);
  const NamedTensors tensors = {{"head.0.weight", Tensor({4, 2}, random_floats(g, 8))},
                                {"head.0.bias", Tensor({4}, random_floats(g, 4))}};
  const auto path = temp_file("fedau_ckpt_test.fauw");
  save_checkpoint(path, tensors);
  const NamedTensors loaded = load_checkpoint(path);
  CHECK(serialize_tensors(loaded) == serialize_tensors(tensors));
  std::filesystem::remove(path);
  CHECK_THROWS(load_checkpoint(path));
}

TEST_CASE("model round trips through named tensors") {
  ModelSpec spec;
  spec.input_dim = 5;
  spec.hidden = {4, 3};
  spec.class_count = 2;
  spec.head_layers = 2;
  const Model m = init_model(spec, 7);
  const Model back = model_from_tensors(model_to_tensors(m));
  REQUIRE(back.extractor.size() == m.extractor.size());
  REQUIRE(back.head.size() == m.head.size());
  CHECK(back.class_count == m.class_count);
  for (std::size_t i = 0; i < m.extractor.size(); ++i) {
    CHECK(back.extractor[i].weights.values() == m.extractor[i].weights.values());
    CHECK(back.extractor[i].activation == Activation::ReLU);
  }
  for (std::size_t i = 0; i < m.head.size(); ++i)
    CHECK(back.head[i].weights.values() == m.head[i].weights.values());
  CHECK(back.head.back().activation == Activation::Identity);
}

TEST_CASE("stack tensors honor the prefix and terminal activation") {
  std::mt19937_64 g(13);
  const LayerStack head = {random_dense(g, 3, 4, Activation::ReLU),
                           random_dense(g, 2, 3, Activation::Identity)};
  const NamedTensors named = stack_to_tensors(head, "head");
  CHECK(named[0].first == "head.0.weight");
  CHECK(named[3].first == "head.1.bias");
  const LayerStack back = stack_from_tensors(named, "head", true);
  REQUIRE(back.size() == 2);
  CHECK(back[0].activation == Activation::ReLU);
  CHECK(back[1].activation == Activation::Identity);
  CHECK(back[1].weights.values() == head[1].weights.values());
}

}  // TEST_SUITE
