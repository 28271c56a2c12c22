#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fedau {

// Dense row-major float32 tensor. Values are validated finite on
// construction; shapes are immutable after construction.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> dims, std::vector<float> values);

  static Tensor zeros(std::vector<std::size_t> dims);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t dim(std::size_t i) const { return dims_[i]; }

  const std::vector<float>& values() const { return values_; }
  float* data() { return values_.data(); }
  const float* data() const { return values_.data(); }

  float operator[](std::size_t i) const { return values_[i]; }
  float& operator[](std::size_t i) { return values_[i]; }

  // rank-2 accessors
  float at(std::size_t r, std::size_t c) const { return values_[r * dims_[1] + c]; }
  float& at(std::size_t r, std::size_t c) { return values_[r * dims_[1] + c]; }

  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

  std::string shape_string() const;

  // Re-checks finiteness (used after in-place mutation of data()).
  void check_finite(const std::string& context) const;

 private:
  std::vector<std::size_t> dims_;
  std::vector<float> values_;
};

}  // namespace fedau
