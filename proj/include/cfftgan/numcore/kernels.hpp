#pragma once

#include <cstddef>

// Raw array kernels behind the differentiable primitives. Every kernel has a
// plain serial reference in `serial` and an OpenMP version in `parallel`.
// Parallel kernels split work only across independent outputs and keep the
// per-output summation order fixed, so their results do not depend on the
// thread count.

namespace cfftgan::num::kernels {

struct GemmShape {
  int m = 0;  // rows of C
  int n = 0;  // cols of C
  int k = 0;  // inner extent
  bool trans_a = false;  // A stored (k, m) instead of (m, k)
  bool trans_b = false;  // B stored (n, k) instead of (k, n)
};

struct ConvGeometry {
  int channels = 0;
  int height = 0;
  int width = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  int col_rows() const { return channels * kernel * kernel; }
};

namespace serial {

/// C (=|+=) op(A) * op(B), row-major.
template <class T>
void gemm(const GemmShape& s, const T* a, const T* b, T* c, bool accumulate);

/// (C,H,W) image -> (C*k*k, Ho*Wo) columns with zero padding.
template <class T>
void im2col(const ConvGeometry& g, const T* image, T* cols);

/// Adjoint of im2col; accumulates into `image`.
template <class T>
void col2im(const ConvGeometry& g, const T* cols, T* image);

/// Softmax over the middle extent of an (outer, n, inner) array.
template <class T>
void softmax(const T* x, T* y, std::size_t outer, std::size_t n, std::size_t inner);

/// Backward of softmax given y and dy.
template <class T>
void softmax_backward(const T* y, const T* dy, T* dx, std::size_t outer, std::size_t n,
                      std::size_t inner);

}  // namespace serial

namespace parallel {

template <class T>
void gemm(const GemmShape& s, const T* a, const T* b, T* c, bool accumulate);

template <class T>
void im2col(const ConvGeometry& g, const T* image, T* cols);

template <class T>
void col2im(const ConvGeometry& g, const T* cols, T* image);

template <class T>
void softmax(const T* x, T* y, std::size_t outer, std::size_t n, std::size_t inner);

template <class T>
void softmax_backward(const T* y, const T* dy, T* dx, std::size_t outer, std::size_t n,
                      std::size_t inner);

/// y[i] = fn(i) over [0, n); fn must only read shared data.
template <class Fn>
void for_each_index(std::size_t n, Fn&& fn) {
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static) if (count > 32768)
  for (long long i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
}

}  // namespace parallel

}  // namespace cfftgan::num::kernels
