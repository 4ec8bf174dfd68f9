#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cfftgan/numcore/error.hpp"

namespace cfftgan::num {

class Rng;
class Tape;

enum class DType : std::uint8_t { f32, f64 };

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);
const char* to_string(DType dtype);

/// Float width used for newly created tensors on this thread. 32-bit unless
/// a DTypeScope selects 64-bit (gradient checking).
DType default_dtype();

class DTypeScope {
 public:
  explicit DTypeScope(DType dtype);
  ~DTypeScope();
  DTypeScope(const DTypeScope&) = delete;
  DTypeScope& operator=(const DTypeScope&) = delete;

 private:
  DType previous_;
};

/// Calls `fn.template operator()<T>()` with T matching the dtype.
template <class Fn>
decltype(auto) dispatch(DType dtype, Fn&& fn) {
  if (dtype == DType::f32) return fn.template operator()<float>();
  return fn.template operator()<double>();
}

using Buffer = std::variant<std::vector<float>, std::vector<double>>;

struct TensorImpl {
  Shape shape;
  DType dtype = DType::f32;
  std::shared_ptr<Buffer> buffer;
  bool requires_grad = false;
  // Set when this tensor is the output of a recorded primitive.
  const Tape* tape = nullptr;
  std::uint64_t tape_generation = 0;
  int node = -1;
};

/// Dense row-major array. Copies are shallow handles; reshape shares storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, DType dtype = default_dtype());
  static Tensor ones(const Shape& shape, DType dtype = default_dtype());
  static Tensor full(const Shape& shape, double value, DType dtype = default_dtype());
  static Tensor from_values(const Shape& shape, std::span<const double> values,
                            DType dtype = default_dtype());
  static Tensor from_values(const Shape& shape, std::initializer_list<double> values,
                            DType dtype = default_dtype());
  static Tensor scalar(double value, DType dtype = default_dtype());
  static Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0,
                      DType dtype = default_dtype());
  static Tensor uniform(const Shape& shape, Rng& rng, double lo, double hi,
                        DType dtype = default_dtype());

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int axis) const;
  std::size_t numel() const;
  DType dtype() const { return impl_->dtype; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool value);

  template <class T>
  std::span<T> data() {
    return std::get<std::vector<T>>(*impl_->buffer);
  }
  template <class T>
  std::span<const T> data() const {
    return std::get<std::vector<T>>(*impl_->buffer);
  }

  double at(std::size_t flat) const;
  void set(std::size_t flat, double value);
  /// Value of a one-element tensor.
  double item() const;
  std::vector<double> to_vector() const;

  /// Fresh storage, no tape link, requires_grad=false.
  Tensor clone() const;
  /// Shares storage, drops the tape link and requires_grad.
  Tensor detach() const;
  /// Converts to the given float width (copy).
  Tensor to(DType dtype) const;
  /// Same handle when already at `dtype`, otherwise a converted copy.
  Tensor as(DType dtype) const { return dtype == this->dtype() ? *this : to(dtype); }

  bool all_finite() const;
  bool same_storage(const Tensor& other) const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

  static Tensor make(const Shape& shape, DType dtype);
  static Tensor with_buffer(const Shape& shape, DType dtype, std::shared_ptr<Buffer> buffer);

 private:
  std::shared_ptr<TensorImpl> impl_;
};

}  // namespace cfftgan::num
