#pragma once

#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "cfftgan/numcore/tape.hpp"
#include "cfftgan/numcore/tensor.hpp"

// Differentiable primitives. Each records itself on the active tape when any
// input requires a gradient. Shape violations throw ShapeError naming the
// primitive and the offending shapes.

namespace cfftgan::num {

// Elementwise binary ops with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double value);
Tensor mul_scalar(const Tensor& x, double value);
inline Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

/// (..., m, k) x (..., k, n). Batch dims must agree, or b may be rank 2 and
/// is then shared across the batch.
Tensor matmul(const Tensor& a, const Tensor& b);

/// General axis permutation.
Tensor transpose(const Tensor& x, const std::vector<int>& perm);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);

/// Metadata-only; one extent may be -1.
Tensor reshape(const Tensor& x, Shape shape);

Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
std::vector<Tensor> split(const Tensor& x, int axis, const std::vector<int>& sections);
Tensor slice(const Tensor& x, int axis, int start, int length);

/// Reductions; an empty axis list reduces everything. Without keepdims the
/// reduced axes are dropped (a full reduction yields a rank-0 scalar).
Tensor sum(const Tensor& x, std::vector<int> axes = {}, bool keepdims = false);
Tensor mean(const Tensor& x, std::vector<int> axes = {}, bool keepdims = false);
/// Population variance (divides by the count).
Tensor var(const Tensor& x, std::vector<int> axes = {}, bool keepdims = false);
Tensor reduce_max(const Tensor& x, int axis, bool keepdims = false);
Tensor reduce_min(const Tensor& x, int axis, bool keepdims = false);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
/// The derivative at 0 is taken to be 0 (the subgradient of a norm at 0).
Tensor sqrt(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor softmax(const Tensor& x, int axis = -1);
Tensor power(const Tensor& x, double exponent);

/// Zero padding; `pads` holds (before, after) per axis, missing leading axes
/// are unpadded.
Tensor pad(const Tensor& x, const std::vector<std::pair<int, int>>& pads);

/// x: (n, cin, h, w) or (cin, h, w); weight: (cout, cin, k, k); bias: (cout)
/// or undefined. Lowered to im2col + matmul.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding);

/// Nearest-neighbour upsampling of the last two axes.
Tensor upsample_nearest(const Tensor& x, int factor);
/// Bilinear resize of the last two axes with half-pixel centres.
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);

/// out[..., i, ...] = x[..., index[i], ...] along `axis`.
Tensor gather(const Tensor& x, int axis, const std::vector<int>& index);
/// out has extent `size` along `axis`; out[..., index[i], ...] += x[..., i, ...].
Tensor scatter(const Tensor& x, int axis, const std::vector<int>& index, int size);

/// Generic entry point covering the catalog above.
struct Attrs {
  int axis = -1;
  std::vector<int> axes;
  bool keepdims = false;
  std::vector<int> perm;
  Shape shape;
  std::vector<int> sections;
  int start = 0;
  int length = 0;
  double scalar = 0.0;
  int stride = 1;
  int padding = 0;
  int factor = 1;
  int out_h = 0;
  int out_w = 0;
  std::vector<int> index;
  int size = 0;
  std::vector<std::pair<int, int>> pads;
};

std::vector<Tensor> apply_primitive(Primitive op, std::span<const Tensor> inputs,
                                    const Attrs& attrs = {});
std::vector<Tensor> apply_primitive(std::string_view op, std::span<const Tensor> inputs,
                                    const Attrs& attrs = {});

// Sugar.
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

/// Broadcast result shape, or ShapeError tagged with `who`.
Shape broadcast_shapes(const Shape& a, const Shape& b, std::string_view who);

/// Sums `g` down to `shape` over broadcast axes (not recorded).
Tensor sum_to_shape(const Tensor& g, const Shape& shape);

}  // namespace cfftgan::num
