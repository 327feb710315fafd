#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rc/common.hpp"

namespace rc {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

/// Cache-line aligned storage. Vectorised reductions peel a prefix that
/// depends on the base address, so a fixed alignment keeps summation order,
/// and therefore results, identical from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using RealBuffer = std::vector<real, AlignedAllocator<real>>;
std::string shape_string(const Shape& shape);

/// Dense row-major array of reals with an optional gradient buffer of the
/// same shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<real> data);

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  std::span<real> data() { return data_; }
  std::span<const real> data() const { return data_; }
  real* ptr() { return data_.data(); }
  const real* ptr() const { return data_.data(); }

  real& operator[](std::size_t i) { return data_[i]; }
  real operator[](std::size_t i) const { return data_[i]; }

  bool has_grad() const { return grad_.has_value(); }
  /// Allocates a zeroed gradient if none is present.
  void enable_grad();
  void zero_grad();
  std::span<real> grad();
  std::span<const real> grad() const;

  void fill(real value);
  /// Reinterpret the data under a new shape with the same element count.
  void reshape(Shape shape);

 private:
  Shape shape_;
  RealBuffer data_;
  std::optional<RealBuffer> grad_;
};

}  // namespace rc
