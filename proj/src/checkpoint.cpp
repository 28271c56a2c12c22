#include "fedau/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fedau {

namespace {

static_assert(std::numeric_limits<float>::is_iec559, "float32 writer assumes IEEE 754");

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

[[noreturn]] void fail_at(std::size_t offset, const std::string& what) {
  std::ostringstream os;
  os << "checkpoint: " << what << " at byte offset " << offset;
  throw std::runtime_error(os.str());
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  bool exhausted() const { return pos_ == bytes_.size(); }

  const std::uint8_t* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) fail_at(pos_, std::string("truncated ") + what);
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint8_t u8(const char* what) { return *take(1, what); }

  std::uint16_t u16(const char* what) {
    const std::uint8_t* p = take(2, what);
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }

  std::uint32_t u32(const char* what) {
    const std::uint8_t* p = take(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }

  std::uint64_t u64(const char* what) {
    const std::uint8_t* p = take(8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_tensors(const NamedTensors& tensors) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'F', 'A', 'U', 'W'});
  put_u32(out, 1);
  if (tensors.size() > std::numeric_limits<std::uint32_t>::max())
    throw std::invalid_argument("checkpoint: too many tensors");
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    if (name.empty() || name.size() > std::numeric_limits<std::uint16_t>::max())
      throw std::invalid_argument("checkpoint: tensor name length out of range");
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    if (tensor.rank() > 255) throw std::invalid_argument("checkpoint: rank exceeds u8");
    out.push_back(static_cast<std::uint8_t>(tensor.rank()));
    for (auto d : tensor.dims()) put_u64(out, d);
    for (std::size_t i = 0; i < tensor.size(); ++i) put_f32(out, tensor[i]);
  }
  return out;
}

NamedTensors parse_tensors(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const std::uint8_t* magic = r.take(4, "magic");
  if (std::memcmp(magic, "FAUW", 4) != 0) fail_at(0, "bad magic");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != 1) fail_at(version_at, "unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32("tensor count");

  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::size_t name_at = r.offset();
    const std::uint16_t name_len = r.u16("name length");
    if (name_len == 0) fail_at(name_at, "empty tensor name");
    const std::uint8_t* name_bytes = r.take(name_len, "tensor name");
    std::string name(reinterpret_cast<const char*>(name_bytes), name_len);

    const std::size_t rank_at = r.offset();
    const std::uint8_t rank = r.u8("rank");
    if (rank == 0) fail_at(rank_at, "zero rank");

    std::vector<std::size_t> dims(rank);
    std::size_t elems = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::size_t dim_at = r.offset();
      const std::uint64_t v = r.u64("dimension");
      if (v == 0) fail_at(dim_at, "zero dimension");
      if (v > std::numeric_limits<std::size_t>::max() / (elems == 0 ? 1 : elems) ||
          elems * v > (std::size_t{1} << 40))
        fail_at(dim_at, "dimension overflow");
      dims[d] = static_cast<std::size_t>(v);
      elems *= dims[d];
    }

    const std::size_t payload_at = r.offset();
    const std::uint8_t* payload = r.take(elems * 4, "tensor payload");
    std::vector<float> values(elems);
    std::memcpy(values.data(), payload, elems * 4);
    if constexpr (std::endian::native == std::endian::big) {
      for (auto& v : values) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        bits = __builtin_bswap32(bits);
        std::memcpy(&v, &bits, 4);
      }
    }
    try {
      out.emplace_back(std::move(name), Tensor(std::move(dims), std::move(values)));
    } catch (const std::invalid_argument& e) {
      fail_at(payload_at, e.what());
    }
  }
  if (!r.exhausted()) fail_at(r.offset(), "trailing bytes after final tensor");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  const auto bytes = serialize_tensors(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed: " + path.string());
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return parse_tensors(bytes);
}

NamedTensors stack_to_tensors(const LayerStack& stack, const std::string& prefix) {
  NamedTensors out;
  for (std::size_t i = 0; i < stack.size(); ++i) {
    out.emplace_back(prefix + "." + std::to_string(i) + ".weight", stack[i].weights);
    out.emplace_back(prefix + "." + std::to_string(i) + ".bias", stack[i].bias);
  }
  return out;
}

NamedTensors model_to_tensors(const Model& model) {
  NamedTensors out = stack_to_tensors(model.extractor, "extractor");
  NamedTensors head = stack_to_tensors(model.head, "head");
  out.insert(out.end(), std::make_move_iterator(head.begin()), std::make_move_iterator(head.end()));
  return out;
}

LayerStack stack_from_tensors(const NamedTensors& tensors, const std::string& prefix,
                              bool terminal) {
  LayerStack stack;
  for (std::size_t i = 0;; ++i) {
    const std::string wname = prefix + "." + std::to_string(i) + ".weight";
    const std::string bname = prefix + "." + std::to_string(i) + ".bias";
    const Tensor* w = nullptr;
    const Tensor* b = nullptr;
    for (const auto& [name, tensor] : tensors) {
      if (name == wname) w = &tensor;
      if (name == bname) b = &tensor;
    }
    if (!w && !b) break;
    if (!w || !b)
      throw std::runtime_error("checkpoint: layer " + prefix + "." + std::to_string(i) +
                               " is missing its weight or bias tensor");
    stack.push_back(DenseLayer{*w, *b, Activation::ReLU});
  }
  if (terminal && !stack.empty()) stack.back().activation = Activation::Identity;
  return stack;
}

Model model_from_tensors(const NamedTensors& tensors) {
  Model model;
  model.extractor = stack_from_tensors(tensors, "extractor", false);
  model.head = stack_from_tensors(tensors, "head", true);
  if (model.head.empty()) throw std::runtime_error("checkpoint: no head tensors found");
  model.class_count = static_cast<int>(model.head.back().out_dim());
  validate_model(model);
  return model;
}

}  // namespace fedau
