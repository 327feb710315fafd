#include "rc/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace rc {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), real{0}) {}

Tensor::Tensor(Shape shape, std::vector<real> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (data_.size() != shape_size(shape_)) {
    throw InvalidInput("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_string(shape_));
  }
}

void Tensor::enable_grad() {
  if (!grad_) grad_.emplace(data_.size(), real{0});
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), real{0});
}

std::span<real> Tensor::grad() {
  if (!grad_) throw ConsistencyError("tensor " + shape_string(shape_) + " has no gradient");
  return *grad_;
}

std::span<const real> Tensor::grad() const {
  if (!grad_) throw ConsistencyError("tensor " + shape_string(shape_) + " has no gradient");
  return *grad_;
}

void Tensor::fill(real value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::reshape(Shape shape) {
  if (shape_size(shape) != data_.size()) {
    throw InvalidInput("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

}  // namespace rc
