#include "cfftgan/numcore/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace cfftgan::num::kernels {

namespace {

template <class T>
const T* pack_transposed(const T* src, int rows, int cols, std::vector<T>& storage) {
  // src is (cols, rows); returns (rows, cols) row-major.
  storage.resize(static_cast<std::size_t>(rows) * cols);
  for (int c = 0; c < cols; ++c) {
    const T* s = src + static_cast<std::size_t>(c) * rows;
    for (int r = 0; r < rows; ++r) storage[static_cast<std::size_t>(r) * cols + c] = s[r];
  }
  return storage.data();
}

template <class T>
void softmax_lane(const T* x, T* y, std::size_t n, std::size_t stride) {
  T m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i * stride]);
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T e = std::exp(x[i * stride] - m);
    y[i * stride] = e;
    total += e;
  }
  for (std::size_t i = 0; i < n; ++i) y[i * stride] /= total;
}

template <class T>
void softmax_backward_lane(const T* y, const T* dy, T* dx, std::size_t n, std::size_t stride) {
  T dot = 0;
  for (std::size_t i = 0; i < n; ++i) dot += y[i * stride] * dy[i * stride];
  for (std::size_t i = 0; i < n; ++i) dx[i * stride] = y[i * stride] * (dy[i * stride] - dot);
}

}  // namespace

namespace serial {

template <class T>
void gemm(const GemmShape& s, const T* a, const T* b, T* c, bool accumulate) {
  for (int i = 0; i < s.m; ++i) {
    for (int j = 0; j < s.n; ++j) {
      T acc = accumulate ? c[static_cast<std::size_t>(i) * s.n + j] : T(0);
      for (int k = 0; k < s.k; ++k) {
        const T av = s.trans_a ? a[static_cast<std::size_t>(k) * s.m + i]
                               : a[static_cast<std::size_t>(i) * s.k + k];
        const T bv = s.trans_b ? b[static_cast<std::size_t>(j) * s.k + k]
                               : b[static_cast<std::size_t>(k) * s.n + j];
        acc += av * bv;
      }
      c[static_cast<std::size_t>(i) * s.n + j] = acc;
    }
  }
}

template <class T>
void im2col(const ConvGeometry& g, const T* image, T* cols) {
  const int ho = g.out_height(), wo = g.out_width();
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        const int row = (c * g.kernel + ki) * g.kernel + kj;
        T* out = cols + static_cast<std::size_t>(row) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          for (int ox = 0; ox < wo; ++ox) {
            const int y = oy * g.stride - g.pad + ki;
            const int x = ox * g.stride - g.pad + kj;
            const bool inside = y >= 0 && y < g.height && x >= 0 && x < g.width;
            out[oy * wo + ox] =
                inside ? image[(static_cast<std::size_t>(c) * g.height + y) * g.width + x] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const ConvGeometry& g, const T* cols, T* image) {
  const int ho = g.out_height(), wo = g.out_width();
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        const int row = (c * g.kernel + ki) * g.kernel + kj;
        const T* in = cols + static_cast<std::size_t>(row) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          for (int ox = 0; ox < wo; ++ox) {
            const int y = oy * g.stride - g.pad + ki;
            const int x = ox * g.stride - g.pad + kj;
            if (y >= 0 && y < g.height && x >= 0 && x < g.width) {
              image[(static_cast<std::size_t>(c) * g.height + y) * g.width + x] += in[oy * wo + ox];
            }
          }
        }
      }
    }
  }
}

template <class T>
void softmax(const T* x, T* y, std::size_t outer, std::size_t n, std::size_t inner) {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      softmax_lane(x + base, y + base, n, inner);
    }
  }
}

template <class T>
void softmax_backward(const T* y, const T* dy, T* dx, std::size_t outer, std::size_t n,
                      std::size_t inner) {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      softmax_backward_lane(y + base, dy + base, dx + base, n, inner);
    }
  }
}

}  // namespace serial

namespace parallel {

template <class T>
void gemm(const GemmShape& s, const T* a, const T* b, T* c, bool accumulate) {
  const int m = s.m, n = s.n, k = s.k;
  if (m == 0 || n == 0) return;
  std::vector<T> a_pack, b_pack;
  const T* ap = s.trans_a ? pack_transposed(a, m, k, a_pack) : a;  // (m, k)
  const T* bp = s.trans_b ? pack_transposed(b, k, n, b_pack) : b;  // (k, n)

  constexpr int kRows = 4;
  constexpr int kCols = 256;
  const int row_blocks = (m + kRows - 1) / kRows;
  const int col_blocks = (n + kCols - 1) / kCols;
  const long long work = static_cast<long long>(m) * n * k;

#pragma omp parallel for collapse(2) schedule(static) if (work > (1LL << 18))
  for (int rb = 0; rb < row_blocks; ++rb) {
    for (int cb = 0; cb < col_blocks; ++cb) {
      const int i0 = rb * kRows;
      const int rows = std::min(kRows, m - i0);
      const int j0 = cb * kCols;
      const int cols = std::min(kCols, n - j0);
      alignas(64) T acc[kRows][kCols];
      for (int r = 0; r < rows; ++r) {
        T* crow = c + static_cast<std::size_t>(i0 + r) * n + j0;
        for (int j = 0; j < cols; ++j) acc[r][j] = accumulate ? crow[j] : T(0);
      }
      if (rows == kRows) {
        const T* a0 = ap + static_cast<std::size_t>(i0) * k;
        const T* a1 = a0 + k;
        const T* a2 = a1 + k;
        const T* a3 = a2 + k;
        T* acc0 = acc[0];
        T* acc1 = acc[1];
        T* acc2 = acc[2];
        T* acc3 = acc[3];
        for (int kk = 0; kk < k; ++kk) {
          const T* brow = bp + static_cast<std::size_t>(kk) * n + j0;
          const T v0 = a0[kk], v1 = a1[kk], v2 = a2[kk], v3 = a3[kk];
#pragma omp simd
          for (int j = 0; j < cols; ++j) {
            const T bj = brow[j];
            acc0[j] += v0 * bj;
            acc1[j] += v1 * bj;
            acc2[j] += v2 * bj;
            acc3[j] += v3 * bj;
          }
        }
      } else {
        for (int r = 0; r < rows; ++r) {
          const T* arow = ap + static_cast<std::size_t>(i0 + r) * k;
          T* accr = acc[r];
          for (int kk = 0; kk < k; ++kk) {
            const T* brow = bp + static_cast<std::size_t>(kk) * n + j0;
            const T v = arow[kk];
#pragma omp simd
            for (int j = 0; j < cols; ++j) accr[j] += v * brow[j];
          }
        }
      }
      for (int r = 0; r < rows; ++r) {
        T* crow = c + static_cast<std::size_t>(i0 + r) * n + j0;
        for (int j = 0; j < cols; ++j) crow[j] = acc[r][j];
      }
    }
  }
}

template <class T>
void im2col(const ConvGeometry& g, const T* image, T* cols) {
  const int ho = g.out_height(), wo = g.out_width();
  const int rows = g.col_rows();
#pragma omp parallel for schedule(static) if (static_cast<long long>(rows) * ho * wo > 65536)
  for (int row = 0; row < rows; ++row) {
    const int c = row / (g.kernel * g.kernel);
    const int ki = (row / g.kernel) % g.kernel;
    const int kj = row % g.kernel;
    T* out = cols + static_cast<std::size_t>(row) * ho * wo;
    const T* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int oy = 0; oy < ho; ++oy) {
      const int y = oy * g.stride - g.pad + ki;
      T* orow = out + static_cast<std::size_t>(oy) * wo;
      if (y < 0 || y >= g.height) {
        std::fill(orow, orow + wo, T(0));
        continue;
      }
      const T* irow = plane + static_cast<std::size_t>(y) * g.width;
      for (int ox = 0; ox < wo; ++ox) {
        const int x = ox * g.stride - g.pad + kj;
        orow[ox] = (x >= 0 && x < g.width) ? irow[x] : T(0);
      }
    }
  }
}

template <class T>
void col2im(const ConvGeometry& g, const T* cols, T* image) {
  const int ho = g.out_height(), wo = g.out_width();
  const int kk = g.kernel * g.kernel;
#pragma omp parallel for schedule(static) if (static_cast<long long>(g.col_rows()) * ho * wo > 65536)
  for (int c = 0; c < g.channels; ++c) {
    T* plane = image + static_cast<std::size_t>(c) * g.height * g.width;
    for (int r = 0; r < kk; ++r) {
      const int ki = r / g.kernel;
      const int kj = r % g.kernel;
      const T* in = cols + static_cast<std::size_t>(c * kk + r) * ho * wo;
      for (int oy = 0; oy < ho; ++oy) {
        const int y = oy * g.stride - g.pad + ki;
        if (y < 0 || y >= g.height) continue;
        T* irow = plane + static_cast<std::size_t>(y) * g.width;
        const T* crow = in + static_cast<std::size_t>(oy) * wo;
        for (int ox = 0; ox < wo; ++ox) {
          const int x = ox * g.stride - g.pad + kj;
          if (x >= 0 && x < g.width) irow[x] += crow[ox];
        }
      }
    }
  }
}

template <class T>
void softmax(const T* x, T* y, std::size_t outer, std::size_t n, std::size_t inner) {
  const auto lanes = static_cast<long long>(outer * inner);
#pragma omp parallel for schedule(static) if (lanes * static_cast<long long>(n) > 32768)
  for (long long lane = 0; lane < lanes; ++lane) {
    const std::size_t o = static_cast<std::size_t>(lane) / inner;
    const std::size_t in = static_cast<std::size_t>(lane) % inner;
    softmax_lane(x + o * n * inner + in, y + o * n * inner + in, n, inner);
  }
}

template <class T>
void softmax_backward(const T* y, const T* dy, T* dx, std::size_t outer, std::size_t n,
                      std::size_t inner) {
  const auto lanes = static_cast<long long>(outer * inner);
#pragma omp parallel for schedule(static) if (lanes * static_cast<long long>(n) > 32768)
  for (long long lane = 0; lane < lanes; ++lane) {
    const std::size_t off =
        (static_cast<std::size_t>(lane) / inner) * n * inner + static_cast<std::size_t>(lane) % inner;
    softmax_backward_lane(y + off, dy + off, dx + off, n, inner);
  }
}

}  // namespace parallel

#define CFFTGAN_INSTANTIATE_KERNELS(NS, T)                                                   \
  template void NS::gemm<T>(const GemmShape&, const T*, const T*, T*, bool);                 \
  template void NS::im2col<T>(const ConvGeometry&, const T*, T*);                            \
  template void NS::col2im<T>(const ConvGeometry&, const T*, T*);                            \
  template void NS::softmax<T>(const T*, T*, std::size_t, std::size_t, std::size_t);         \
  template void NS::softmax_backward<T>(const T*, const T*, T*, std::size_t, std::size_t,    \
                                        std::size_t);

CFFTGAN_INSTANTIATE_KERNELS(serial, float)
CFFTGAN_INSTANTIATE_KERNELS(serial, double)
CFFTGAN_INSTANTIATE_KERNELS(parallel, float)
CFFTGAN_INSTANTIATE_KERNELS(parallel, double)

#undef CFFTGAN_INSTANTIATE_KERNELS

}  // namespace cfftgan::num::kernels
