#include "fedau/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fedau {

namespace {

std::size_t checked_element_count(const std::vector<std::size_t>& dims) {
  if (dims.empty()) throw std::invalid_argument("tensor: rank must be at least 1");
  std::size_t n = 1;
  for (auto d : dims) {
    if (d == 0) throw std::invalid_argument("tensor: zero-sized dimension");
    if (d != 0 && n > SIZE_MAX / d) throw std::invalid_argument("tensor: dimension overflow");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<float> values)
    : dims_(std::move(dims)), values_(std::move(values)) {
  std::size_t expect = checked_element_count(dims_);
  if (expect != values_.size()) {
    std::ostringstream os;
    os << "tensor: " << values_.size() << " values for shape " << shape_string();
    throw std::invalid_argument(os.str());
  }
  check_finite("construction");
}

Tensor Tensor::zeros(std::vector<std::size_t> dims) {
  std::size_t n = checked_element_count(dims);
  return Tensor(std::move(dims), std::vector<float>(n, 0.0f));
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "x" : "") << dims_[i];
  os << "]";
  return os.str();
}

void Tensor::check_finite(const std::string& context) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      std::ostringstream os;
      os << "tensor: non-finite value at flat index " << i << " (" << context << ")";
      throw std::invalid_argument(os.str());
    }
  }
}

}  // namespace fedau
