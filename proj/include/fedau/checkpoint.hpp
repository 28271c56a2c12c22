#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedau/nn.hpp"
#include "fedau/tensor.hpp"

namespace fedau {

// FAUW tensor container, version 1. All integers and floats little-endian:
//
//   'F' 'A' 'U' 'W'
//   u32 version (= 1)
//   u32 tensor count
//   per tensor:
//     u16 name length, then that many UTF-8 bytes
//     u8  rank
//     u64 per dimension
//     float32 payload, row-major
//
// Serialization is bit-exact: save(load(bytes)) == bytes.

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

std::vector<std::uint8_t> serialize_tensors(const NamedTensors& tensors);
// Throws std::runtime_error naming the failing byte offset on malformed input.
NamedTensors parse_tensors(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

// Model <-> tensor-map bridges. Layer tensors are named
// "extractor.<i>.weight" / "extractor.<i>.bias" / "head.<i>.weight" /
// "head.<i>.bias". Activations are positional (ReLU everywhere, Identity on
// the final head layer) and are not stored.
NamedTensors model_to_tensors(const Model& model);
Model model_from_tensors(const NamedTensors& tensors);
NamedTensors stack_to_tensors(const LayerStack& stack, const std::string& prefix);
// Reads layers under `prefix` ("head" for aux-head checkpoints); final layer
// gets Identity activation when `terminal` is true.
LayerStack stack_from_tensors(const NamedTensors& tensors, const std::string& prefix,
                              bool terminal);

}  // namespace fedau
