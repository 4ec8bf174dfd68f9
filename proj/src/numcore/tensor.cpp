#include "cfftgan/numcore/tensor.hpp"

#include <cmath>
#include <sstream>

#include "cfftgan/numcore/rng.hpp"

namespace cfftgan::num {

namespace {
thread_local DType g_default_dtype = DType::f32;

std::shared_ptr<Buffer> make_buffer(std::size_t n, DType dtype) {
  if (dtype == DType::f32) return std::make_shared<Buffer>(std::vector<float>(n, 0.0f));
  return std::make_shared<Buffer>(std::vector<double>(n, 0.0));
}
}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

const char* to_string(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

DType default_dtype() { return g_default_dtype; }

DTypeScope::DTypeScope(DType dtype) : previous_(g_default_dtype) { g_default_dtype = dtype; }
DTypeScope::~DTypeScope() { g_default_dtype = previous_; }

Tensor Tensor::make(const Shape& shape, DType dtype) {
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
  return with_buffer(shape, dtype, make_buffer(num::numel(shape), dtype));
}

Tensor Tensor::with_buffer(const Shape& shape, DType dtype, std::shared_ptr<Buffer> buffer) {
  Tensor t;
  t.impl_ = std::make_shared<TensorImpl>();
  t.impl_->shape = shape;
  t.impl_->dtype = dtype;
  t.impl_->buffer = std::move(buffer);
  return t;
}

Tensor Tensor::zeros(const Shape& shape, DType dtype) { return make(shape, dtype); }

Tensor Tensor::ones(const Shape& shape, DType dtype) { return full(shape, 1.0, dtype); }

Tensor Tensor::full(const Shape& shape, double value, DType dtype) {
  Tensor t = make(shape, dtype);
  dispatch(dtype, [&]<class T>() {
    for (auto& v : t.data<T>()) v = static_cast<T>(value);
  });
  return t;
}

Tensor Tensor::from_values(const Shape& shape, std::span<const double> values, DType dtype) {
  if (values.size() != num::numel(shape)) {
    throw ShapeError("from_values: " + std::to_string(values.size()) + " values for shape " +
                     to_string(shape));
  }
  Tensor t = make(shape, dtype);
  dispatch(dtype, [&]<class T>() {
    auto d = t.data<T>();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(values[i]);
  });
  return t;
}

Tensor Tensor::from_values(const Shape& shape, std::initializer_list<double> values, DType dtype) {
  return from_values(shape, std::span<const double>(values.begin(), values.size()), dtype);
}

Tensor Tensor::scalar(double value, DType dtype) { return full({}, value, dtype); }

Tensor Tensor::randn(const Shape& shape, Rng& rng, double stddev, DType dtype) {
  Tensor t = make(shape, dtype);
  dispatch(dtype, [&]<class T>() {
    for (auto& v : t.data<T>()) v = static_cast<T>(rng.normal() * stddev);
  });
  return t;
}

Tensor Tensor::uniform(const Shape& shape, Rng& rng, double lo, double hi, DType dtype) {
  Tensor t = make(shape, dtype);
  dispatch(dtype, [&]<class T>() {
    for (auto& v : t.data<T>()) v = static_cast<T>(rng.uniform(lo, hi));
  });
  return t;
}

int Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(axis)];
}

std::size_t Tensor::numel() const { return num::numel(impl_->shape); }

Tensor& Tensor::set_requires_grad(bool value) {
  impl_->requires_grad = value;
  return *this;
}

double Tensor::at(std::size_t flat) const {
  return dispatch(dtype(), [&]<class T>() { return static_cast<double>(data<T>()[flat]); });
}

void Tensor::set(std::size_t flat, double value) {
  dispatch(dtype(), [&]<class T>() { data<T>()[flat] = static_cast<T>(value); });
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return at(0);
}

std::vector<double> Tensor::to_vector() const {
  return dispatch(dtype(), [&]<class T>() {
    auto d = data<T>();
    return std::vector<double>(d.begin(), d.end());
  });
}

Tensor Tensor::clone() const {
  return with_buffer(shape(), dtype(), std::make_shared<Buffer>(*impl_->buffer));
}

Tensor Tensor::detach() const { return with_buffer(shape(), dtype(), impl_->buffer); }

Tensor Tensor::to(DType target) const {
  if (target == dtype()) return clone();
  Tensor out = make(shape(), target);
  dispatch(dtype(), [&]<class S>() {
    auto src = data<S>();
    dispatch(target, [&]<class T>() {
      auto dst = out.data<T>();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
    });
  });
  return out;
}

bool Tensor::all_finite() const {
  return dispatch(dtype(), [&]<class T>() {
    for (T v : data<T>()) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  });
}

bool Tensor::same_storage(const Tensor& other) const {
  return impl_ && other.impl_ && impl_->buffer == other.impl_->buffer;
}

}  // namespace cfftgan::num
