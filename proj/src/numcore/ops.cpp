#include "cfftgan/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cfftgan/numcore/kernels.hpp"

namespace cfftgan::num {

namespace kp = kernels::parallel;

namespace {

[[noreturn]] void shape_error(std::string_view who, const std::string& detail) {
  throw ShapeError(std::string(who) + ": " + detail);
}

void require_same_dtype(std::string_view who, const Tensor& a, const Tensor& b) {
  if (a.dtype() != b.dtype()) {
    shape_error(who, std::string("dtype mismatch ") + to_string(a.dtype()) + " vs " +
                         to_string(b.dtype()));
  }
}

int normalize_axis(int axis, int rank, std::string_view who) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    shape_error(who, "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return a;
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size());
  std::size_t acc = 1;
  for (int d = static_cast<int>(shape.size()) - 1; d >= 0; --d) {
    s[static_cast<std::size_t>(d)] = acc;
    acc *= static_cast<std::size_t>(shape[static_cast<std::size_t>(d)]);
  }
  return s;
}

// Splits a shape around `axis` into (outer, n, inner).
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, int axis) {
  AxisSplit s;
  for (int d = 0; d < axis; ++d) s.outer *= static_cast<std::size_t>(shape[static_cast<std::size_t>(d)]);
  s.n = static_cast<std::size_t>(shape[static_cast<std::size_t>(axis)]);
  for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < shape.size(); ++d) {
    s.inner *= static_cast<std::size_t>(shape[d]);
  }
  return s;
}

bool any_requires_grad(std::span<const Tensor> inputs) {
  for (const Tensor& t : inputs) {
    if (t.defined() && t.requires_grad()) return true;
  }
  return false;
}

void maybe_record(Primitive op, std::span<const Tensor> inputs, Tensor& out, BackwardFn fn) {
  Tape* tape = active_tape();
  if (tape == nullptr || !any_requires_grad(inputs)) return;
  tape->record(op, inputs, out, std::move(fn));
}

void maybe_record(Primitive op, std::initializer_list<Tensor> inputs, Tensor& out, BackwardFn fn) {
  maybe_record(op, std::span<const Tensor>(inputs.begin(), inputs.size()), out, std::move(fn));
}

// Walks every element of `shape` keeping two flat offsets whose per-axis
// strides are given (0 for broadcast axes). fn(i, off_a, off_b).
template <class Fn>
void walk2(const Shape& shape, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
           Fn&& fn) {
  const std::size_t total = numel(shape);
  const int rank = static_cast<int>(shape.size());
  if (rank == 0) {
    fn(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t last = static_cast<std::size_t>(rank - 1);
  const auto n_last = static_cast<std::size_t>(shape[last]);
  const std::size_t la = sa[last], lb = sb[last];
  std::vector<int> idx(static_cast<std::size_t>(rank), 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t i = 0; i < total; i += n_last) {
    for (std::size_t j = 0; j < n_last; ++j) fn(i + j, oa + j * la, ob + j * lb);
    for (int d = rank - 2; d >= 0; --d) {
      const auto du = static_cast<std::size_t>(d);
      ++idx[du];
      oa += sa[du];
      ob += sb[du];
      if (idx[du] < shape[du]) break;
      oa -= sa[du] * static_cast<std::size_t>(shape[du]);
      ob -= sb[du] * static_cast<std::size_t>(shape[du]);
      idx[du] = 0;
    }
  }
}

// Strides of `from` laid against the right-aligned `to` shape, 0 where `from`
// broadcasts.
std::vector<std::size_t> broadcast_strides(const Shape& from, const Shape& to) {
  std::vector<std::size_t> s(to.size(), 0);
  const auto fs = strides_of(from);
  const std::size_t offset = to.size() - from.size();
  for (std::size_t d = 0; d < from.size(); ++d) {
    s[d + offset] = from[d] == 1 ? 0 : fs[d];
  }
  return s;
}

template <class Fn>
Tensor ew_binary(std::string_view who, const Tensor& a, const Tensor& b, Fn fn) {
  require_same_dtype(who, a, b);
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape(), who);
  Tensor out = Tensor::make(out_shape, a.dtype());
  dispatch(a.dtype(), [&]<class T>() {
    const T* pa = a.data<T>().data();
    const T* pb = b.data<T>().data();
    T* po = out.data<T>().data();
    const std::size_t n = out.numel();
    if (a.shape() == b.shape()) {
      kp::for_each_index(n, [&](std::size_t i) { po[i] = fn(pa[i], pb[i]); });
    } else if (b.numel() == 1 && a.shape() == out_shape) {
      const T bv = pb[0];
      kp::for_each_index(n, [&](std::size_t i) { po[i] = fn(pa[i], bv); });
    } else if (a.numel() == 1 && b.shape() == out_shape) {
      const T av = pa[0];
      kp::for_each_index(n, [&](std::size_t i) { po[i] = fn(av, pb[i]); });
    } else {
      walk2(out_shape, broadcast_strides(a.shape(), out_shape), broadcast_strides(b.shape(), out_shape),
            [&](std::size_t i, std::size_t ia, std::size_t ib) { po[i] = fn(pa[ia], pb[ib]); });
    }
  });
  return out;
}

template <class Fn>
Tensor ew_unary(const Tensor& x, Fn fn) {
  Tensor out = Tensor::make(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    const T* px = x.data<T>().data();
    T* po = out.data<T>().data();
    kp::for_each_index(x.numel(), [&](std::size_t i) { po[i] = fn(px[i]); });
  });
  return out;
}

// out[i] = fn(a[i], b[i], c[i]) for same-shaped tensors.
template <class Fn>
Tensor ew_ternary(const Tensor& a, const Tensor& b, const Tensor& c, Fn fn) {
  Tensor out = Tensor::make(a.shape(), a.dtype());
  dispatch(a.dtype(), [&]<class T>() {
    const T* pa = a.data<T>().data();
    const T* pb = b.data<T>().data();
    const T* pc = c.data<T>().data();
    T* po = out.data<T>().data();
    kp::for_each_index(a.numel(), [&](std::size_t i) { po[i] = fn(pa[i], pb[i], pc[i]); });
  });
  return out;
}

// Broadcasts `t` up to `shape` (copy).
Tensor broadcast_to(const Tensor& t, const Shape& shape) {
  if (t.shape() == shape) return t;
  Tensor out = Tensor::make(shape, t.dtype());
  const auto st = broadcast_strides(t.shape(), shape);
  dispatch(t.dtype(), [&]<class T>() {
    const T* pt = t.data<T>().data();
    T* po = out.data<T>().data();
    walk2(shape, st, st, [&](std::size_t i, std::size_t it, std::size_t) { po[i] = pt[it]; });
  });
  return out;
}

struct ReducePlan {
  Shape keep_shape;  // reduced axes set to 1
  Shape out_shape;   // per keepdims
  std::size_t count = 1;  // elements folded into each output
};

ReducePlan make_reduce_plan(const Shape& shape, std::vector<int>& axes, bool keepdims,
                            std::string_view who) {
  const int rank = static_cast<int>(shape.size());
  if (axes.empty()) {
    axes.resize(static_cast<std::size_t>(rank));
    std::iota(axes.begin(), axes.end(), 0);
  }
  for (int& a : axes) a = normalize_axis(a, rank, who);
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  ReducePlan p;
  p.keep_shape = shape;
  for (int a : axes) {
    p.count *= static_cast<std::size_t>(shape[static_cast<std::size_t>(a)]);
    p.keep_shape[static_cast<std::size_t>(a)] = 1;
  }
  if (keepdims) {
    p.out_shape = p.keep_shape;
  } else {
    for (int d = 0; d < rank; ++d) {
      if (!std::binary_search(axes.begin(), axes.end(), d)) {
        p.out_shape.push_back(shape[static_cast<std::size_t>(d)]);
      }
    }
  }
  return p;
}

// Sums x into keep_shape (double accumulation).
std::vector<double> reduce_sum_raw(const Tensor& x, const Shape& keep_shape) {
  std::vector<double> acc(numel(keep_shape), 0.0);
  const auto sk = broadcast_strides(keep_shape, x.shape());
  dispatch(x.dtype(), [&]<class T>() {
    const T* px = x.data<T>().data();
    walk2(x.shape(), sk, sk, [&](std::size_t i, std::size_t io, std::size_t) { acc[io] += px[i]; });
  });
  return acc;
}

Tensor tensor_from_doubles(const Shape& shape, const std::vector<double>& v, DType dtype) {
  return Tensor::from_values(shape, std::span<const double>(v), dtype);
}

void check_index(std::string_view who, const std::vector<int>& index, int extent) {
  for (int i : index) {
    if (i < 0 || i >= extent) {
      shape_error(who, "index " + std::to_string(i) + " out of range [0," + std::to_string(extent) + ")");
    }
  }
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b, std::string_view who) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const int da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const int db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      shape_error(who, "cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

Tensor sum_to_shape(const Tensor& g, const Shape& shape) {
  if (g.shape() == shape) return g;
  Tensor out = Tensor::make(shape, g.dtype());
  const auto so = broadcast_strides(shape, g.shape());
  dispatch(g.dtype(), [&]<class T>() {
    const T* pg = g.data<T>().data();
    T* po = out.data<T>().data();
    walk2(g.shape(), so, so, [&](std::size_t i, std::size_t io, std::size_t) { po[io] += pg[i]; });
  });
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = ew_binary("add", a, b, [](auto x, auto y) { return x + y; });
  const Shape sa = a.shape(), sb = b.shape();
  maybe_record(Primitive::add, {a, b}, out,
               [sa, sb](const Tensor& g, std::span<const bool> needs, std::span<Tensor> gi) {
                 if (needs[0]) gi[0] = sum_to_shape(g, sa);
                 if (needs[1]) gi[1] = sum_to_shape(g, sb);
               });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tensor out = ew_binary("sub", a, b, [](auto x, auto y) { return x - y; });
  const Shape sa = a.shape(), sb = b.shape();
  maybe_record(Primitive::sub, {a, b}, out,
               [sa, sb](const Tensor& g, std::span<const bool> needs, std::span<Tensor> gi) {
                 if (needs[0]) gi[0] = sum_to_shape(g, sa);
                 if (needs[1]) gi[1] = sum_to_shape(mul_scalar(g, -1.0), sb);
               });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out = ew_binary("mul", a, b, [](auto x, auto y) { return x * y; });
  maybe_record(Primitive::mul, {a, b}, out,
               [a, b](const Tensor& g, std::span<const bool> needs, std::span<Tensor> gi) {
                 if (needs[0]) gi[0] = sum_to_shape(mul(g, b.detach()), a.shape());
                 if (needs[1]) gi[1] = sum_to_shape(mul(g, a.detach()), b.shape());
               });
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  Tensor out = ew_binary("div", a, b, [](auto x, auto y) { return x / y; });
  Tensor saved = out.detach();
  maybe_record(Primitive::div, {a, b}, out,
               [a, b, saved](const Tensor& g, std::span<const bool> needs, std::span<Tensor> gi) {
                 const Tensor bd = b.detach();
                 if (needs[0]) gi[0] = sum_to_shape(div(g, bd), a.shape());
                 if (needs[1]) gi[1] = sum_to_shape(mul_scalar(div(mul(g, saved), bd), -1.0), b.shape());
               });
  return out;
}

Tensor add_scalar(const Tensor& x, double value) {
  Tensor out = dispatch(x.dtype(), [&]<class T>() {
    const T v = static_cast<T>(value);
    return ew_unary(x, [v](T a) { return a + v; });
  });
  maybe_record(Primitive::add_scalar, {x}, out,
               [](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) { gi[0] = g; });
  return out;
}

Tensor mul_scalar(const Tensor& x, double value) {
  Tensor out = dispatch(x.dtype(), [&]<class T>() {
    const T v = static_cast<T>(value);
    return ew_unary(x, [v](T a) { return a * v; });
  });
  maybe_record(Primitive::mul_scalar, {x}, out,
               [value](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
                 gi[0] = mul_scalar(g, value);
               });
  return out;
}

// ---------------------------------------------------------------------------
// Matrix product

namespace {

struct MatmulDims {
  std::size_t batch = 1;
  int m = 0, k = 0, n = 0;
  bool shared_a = false;  // a is rank 2 and reused across the batch
  bool shared_b = false;
  Shape out_shape;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    shape_error("matmul", "operands need rank >= 2, got " + to_string(a.shape()) + " and " +
                              to_string(b.shape()));
  }
  MatmulDims d;
  d.m = a.dim(-2);
  d.k = a.dim(-1);
  d.n = b.dim(-1);
  if (b.dim(-2) != d.k) {
    shape_error("matmul", "inner extents differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Shape batch;
  if (batch_a == batch_b) {
    batch = batch_a;
  } else if (batch_b.empty()) {
    batch = batch_a;
    d.shared_b = true;
  } else if (batch_a.empty()) {
    batch = batch_b;
    d.shared_a = true;
  } else {
    shape_error("matmul", "batch extents differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  d.batch = numel(batch);
  d.out_shape = batch;
  d.out_shape.push_back(d.m);
  d.out_shape.push_back(d.n);
  return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_dtype("matmul", a, b);
  const MatmulDims d = matmul_dims(a, b);
  Tensor out = Tensor::make(d.out_shape, a.dtype());
  dispatch(a.dtype(), [&]<class T>() {
    const T* pa = a.data<T>().data();
    const T* pb = b.data<T>().data();
    T* po = out.data<T>().data();
    if (d.shared_b) {
      // Fold the batch into the row extent.
      kp::gemm<T>({static_cast<int>(d.batch) * d.m, d.n, d.k, false, false}, pa, pb, po, false);
      return;
    }
    const std::size_t sa = d.shared_a ? 0 : static_cast<std::size_t>(d.m) * d.k;
    const std::size_t sb = static_cast<std::size_t>(d.k) * d.n;
    const std::size_t so = static_cast<std::size_t>(d.m) * d.n;
    for (std::size_t i = 0; i < d.batch; ++i) {
      kp::gemm<T>({d.m, d.n, d.k, false, false}, pa + i * sa, pb + i * sb, po + i * so, false);
    }
  });
  maybe_record(Primitive::matmul, {a, b}, out,
               [a, b, d](const Tensor& g, std::span<const bool> needs, std::span<Tensor> gi) {
                 dispatch(g.dtype(), [&]<class T>() {
                   const T* pa = a.data<T>().data();
                   const T* pb = b.data<T>().data();
                   const T* pg = g.data<T>().data();
                   const std::size_t sa = d.shared_a ? 0 : static_cast<std::size_t>(d.m) * d.k;
                   const std::size_t sb = d.shared_b ? 0 : static_cast<std::size_t>(d.k) * d.n;
                   const std::size_t so = static_cast<std::size_t>(d.m) * d.n;
                   if (needs[0]) {
                     Tensor ga = Tensor::make(a.shape(), a.dtype());
                     T* pga = ga.data<T>().data();
                     if (d.shared_b) {
                       kp::gemm<T>({static_cast<int>(d.batch) * d.m, d.k, d.n, false, true}, pg, pb, pga,
                                   false);
                     } else {
                       for (std::size_t i = 0; i < d.batch; ++i) {
                         kp::gemm<T>({d.m, d.k, d.n, false, true}, pg + i * so, pb + i * sb,
                                     pga + i * sa, d.shared_a && i > 0);
                       }
                     }
                     gi[0] = ga;
                   }
                   if (needs[1]) {
                     Tensor gb = Tensor::make(b.shape(), b.dtype());
                     T* pgb = gb.data<T>().data();
                     if (d.shared_b) {
                       kp::gemm<T>({d.k, d.n, static_cast<int>(d.batch) * d.m, true, false}, pa, pg, pgb,
                                   false);
                     } else {
                       for (std::size_t i = 0; i < d.batch; ++i) {
                         kp::gemm<T>({d.k, d.n, d.m, true, false}, pa + i * sa, pg + i * so,
                                     pgb + i * sb, false);
                       }
                     }
                     gi[1] = gb;
                   }
                 });
               });
  return out;
}

// ---------------------------------------------------------------------------
// Layout

Tensor transpose(const Tensor& x, const std::vector<int>& perm) {
  const int rank = x.rank();
  if (static_cast<int>(perm.size()) != rank) {
    shape_error("transpose", "permutation of size " + std::to_string(perm.size()) + " for shape " +
                                 to_string(x.shape()));
  }
  std::vector<int> seen(static_cast<std::size_t>(rank), 0);
  for (int p : perm) {
    if (p < 0 || p >= rank || seen[static_cast<std::size_t>(p)]++) {
      shape_error("transpose", "invalid permutation for shape " + to_string(x.shape()));
    }
  }
  Shape out_shape(static_cast<std::size_t>(rank));
  const auto in_strides = strides_of(x.shape());
  std::vector<std::size_t> src_strides(static_cast<std::size_t>(rank));
  for (int d = 0; d < rank; ++d) {
    out_shape[static_cast<std::size_t>(d)] = x.shape()[static_cast<std::size_t>(perm[static_cast<std::size_t>(d)])];
    src_strides[static_cast<std::size_t>(d)] = in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(d)])];
  }
  Tensor out = Tensor::make(out_shape, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    const T* px = x.data<T>().data();
    T* po = out.data<T>().data();
    walk2(out_shape, src_strides, src_strides, [&](std::size_t i, std::size_t is, std::size_t) { po[i] = px[is]; });
  });
  std::vector<int> inverse(static_cast<std::size_t>(rank));
  for (int d = 0; d < rank; ++d) inverse[static_cast<std::size_t>(perm[static_cast<std::size_t>(d)])] = d;
  maybe_record(Primitive::transpose, {x}, out,
               [inverse](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
                 gi[0] = transpose(g, inverse);
               });
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) shape_error("transpose", "rank < 2 for shape " + to_string(x.shape()));
  std::vector<int> perm(static_cast<std::size_t>(x.rank()));
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return transpose(x, perm);
}

Tensor reshape(const Tensor& x, Shape shape) {
  int infer = -1;
  std::size_t known = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) shape_error("reshape", "more than one -1 in " + to_string(shape));
      infer = static_cast<int>(i);
    } else {
      if (shape[i] <= 0) shape_error("reshape", "invalid target " + to_string(shape));
      known *= static_cast<std::size_t>(shape[i]);
    }
  }
  if (infer >= 0) {
    if (known == 0 || x.numel() % known != 0) {
      shape_error("reshape", "cannot infer extent for " + to_string(x.shape()) + " -> " + to_string(shape));
    }
    shape[static_cast<std::size_t>(infer)] = static_cast<int>(x.numel() / known);
  }
  if (numel(shape) != x.numel()) {
    shape_error("reshape", "element count differs: " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  Tensor out = Tensor::with_buffer(shape, x.dtype(), x.impl()->buffer);
  const Shape in_shape = x.shape();
  maybe_record(Primitive::reshape, {x}, out,
               [in_shape](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
                 gi[0] = reshape(g, in_shape);
               });
  return out;
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) shape_error("concat", "no inputs");
  const int rank = parts[0].rank();
  axis = normalize_axis(axis, rank, "concat");
  Shape out_shape = parts[0].shape();
  out_shape[static_cast<std::size_t>(axis)] = 0;
  std::vector<int> extents;
  for (const Tensor& p : parts) {
    require_same_dtype("concat", parts[0], p);
    if (p.rank() != rank) shape_error("concat", "rank mismatch " + to_string(parts[0].shape()) + " vs " + to_string(p.shape()));
    for (int d = 0; d < rank; ++d) {
      if (d != axis && p.shape()[static_cast<std::size_t>(d)] != parts[0].shape()[static_cast<std::size_t>(d)]) {
        shape_error("concat", "extent mismatch " + to_string(parts[0].shape()) + " vs " + to_string(p.shape()));
      }
    }
    extents.push_back(p.dim(axis));
    out_shape[static_cast<std::size_t>(axis)] += p.dim(axis);
  }
  Tensor out = Tensor::make(out_shape, parts[0].dtype());
  const AxisSplit so = split_at(out_shape, axis);
  dispatch(out.dtype(), [&]<class T>() {
    T* po = out.data<T>().data();
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
      const T* pp = p.data<T>().data();
      const std::size_t chunk = static_cast<std::size_t>(p.dim(axis)) * so.inner;
      for (std::size_t o = 0; o < so.outer; ++o) {
        std::copy(pp + o * chunk, pp + (o + 1) * chunk, po + o * so.n * so.inner + offset);
      }
      offset += chunk;
    }
  });
  maybe_record(Primitive::concat, parts, out,
               [axis, extents](const Tensor& g, std::span<const bool> needs, std::span<Tensor> gi) {
                 int start = 0;
                 for (std::size_t i = 0; i < extents.size(); ++i) {
                   if (needs[i]) gi[i] = slice(g, axis, start, extents[i]);
                   start += extents[i];
                 }
               });
  return out;
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& x, int axis, int start, int length) {
  axis = normalize_axis(axis, x.rank(), "slice");
  const int extent = x.dim(axis);
  if (start < 0 || length <= 0 || start + length > extent) {
    shape_error("slice", "range [" + std::to_string(start) + "," + std::to_string(start + length) +
                             ") outside axis extent " + std::to_string(extent) + " of " + to_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = length;
  Tensor out = Tensor::make(out_shape, x.dtype());
  const AxisSplit s = split_at(x.shape(), axis);
  dispatch(x.dtype(), [&]<class T>() {
    const T* px = x.data<T>().data();
    T* po = out.data<T>().data();
    const std::size_t chunk = static_cast<std::size_t>(length) * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      const T* src = px + o * s.n * s.inner + static_cast<std::size_t>(start) * s.inner;
      std::copy(src, src + chunk, po + o * chunk);
    }
  });
  const Shape in_shape = x.shape();
  maybe_record(Primitive::slice, {x}, out,
               [in_shape, axis, start, length](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
                 Tensor full = Tensor::zeros(in_shape, g.dtype());
                 const AxisSplit s = split_at(in_shape, axis);
                 dispatch(g.dtype(), [&]<class T>() {
                   const T* pg = g.data<T>().data();
                   T* pf = full.data<T>().data();
                   const std::size_t chunk = static_cast<std::size_t>(length) * s.inner;
                   for (std::size_t o = 0; o < s.outer; ++o) {
                     std::copy(pg + o * chunk, pg + (o + 1) * chunk,
                               pf + o * s.n * s.inner + static_cast<std::size_t>(start) * s.inner);
                   }
                 });
                 gi[0] = full;
               });
  return out;
}

std::vector<Tensor> split(const Tensor& x, int axis, const std::vector<int>& sections) {
  axis = normalize_axis(axis, x.rank(), "split");
  int total = 0;
  for (int s : sections) {
    if (s <= 0) shape_error("split", "non-positive section");
    total += s;
  }
  if (total != x.dim(axis)) {
    shape_error("split", "sections sum to " + std::to_string(total) + " but axis extent is " +
                             std::to_string(x.dim(axis)));
  }
  std::vector<Tensor> out;
  int start = 0;
  for (int s : sections) {
    out.push_back(slice(x, axis, start, s));
    start += s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x, std::vector<int> axes, bool keepdims) {
  const ReducePlan p = make_reduce_plan(x.shape(), axes, keepdims, "sum");
  Tensor out = tensor_from_doubles(p.out_shape, reduce_sum_raw(x, p.keep_shape), x.dtype());
  const Shape in_shape = x.shape(), keep = p.keep_shape;
  maybe_record(Primitive::sum, {x}, out,
               [in_shape, keep](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
                 gi[0] = broadcast_to(reshape(g, keep), in_shape);
               });
  return out;
}

Tensor mean(const Tensor& x, std::vector<int> axes, bool keepdims) {
  const ReducePlan p = make_reduce_plan(x.shape(), axes, keepdims, "mean");
  std::vector<double> acc = reduce_sum_raw(x, p.keep_shape);
  for (double& v : acc) v /= static_cast<double>(p.count);
  Tensor out = tensor_from_doubles(p.out_shape, acc, x.dtype());
  const Shape in_shape = x.shape(), keep = p.keep_shape;
  const double inv = 1.0 / static_cast<double>(p.count);
  maybe_record(Primitive::mean, {x}, out,
               [in_shape, keep, inv](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
                 gi[0] = broadcast_to(mul_scalar(reshape(g, keep), inv), in_shape);
               });
  return out;
}

Tensor var(const Tensor& x, std::vector<int> axes, bool keepdims) {
  const ReducePlan p = make_reduce_plan(x.shape(), axes, keepdims, "var");
  std::vector<double> mu = reduce_sum_raw(x, p.keep_shape);
  for (double& v : mu) v /= static_cast<double>(p.count);
  std::vector<double> acc(mu.size(), 0.0);
  const auto sk = broadcast_strides(p.keep_shape, x.shape());
  dispatch(x.dtype(), [&]<class T>() {
    const T* px = x.data<T>().data();
    walk2(x.shape(), sk, sk, [&](std::size_t i, std::size_t io, std::size_t) {
      const double dlt = static_cast<double>(px[i]) - mu[io];
      acc[io] += dlt * dlt;
    });
  });
  for (double& v : acc) v /= static_cast<double>(p.count);
  Tensor out = tensor_from_doubles(p.out_shape, acc, x.dtype());
  const Shape keep = p.keep_shape;
  const double scale = 2.0 / static_cast<double>(p.count);
  Tensor mean_t = tensor_from_doubles(keep, mu, x.dtype());
  maybe_record(Primitive::var, {x}, out,
               [x, keep, scale, mean_t](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
                 const Tensor centered = sub(x.detach(), mean_t);
                 gi[0] = mul(centered, mul_scalar(reshape(g, keep), scale));
               });
  return out;
}

namespace {

Tensor reduce_extreme(const Tensor& x, int axis, bool keepdims, bool want_max) {
  const char* who = want_max ? "reduce_max" : "reduce_min";
  axis = normalize_axis(axis, x.rank(), who);
  const AxisSplit s = split_at(x.shape(), axis);
  Shape keep = x.shape();
  keep[static_cast<std::size_t>(axis)] = 1;
  Shape out_shape = keep;
  if (!keepdims) out_shape.erase(out_shape.begin() + axis);
  Tensor out = Tensor::make(out_shape, x.dtype());
  auto arg = std::make_shared<std::vector<std::size_t>>(s.outer * s.inner);
  dispatch(x.dtype(), [&]<class T>() {
    const T* px = x.data<T>().data();
    T* po = out.data<T>().data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.n * s.inner + in;
        std::size_t best = 0;
        T bv = px[base];
        for (std::size_t i = 1; i < s.n; ++i) {
          const T v = px[base + i * s.inner];
          if (want_max ? v > bv : v < bv) {
            bv = v;
            best = i;
          }
        }
        po[o * s.inner + in] = bv;
        (*arg)[o * s.inner + in] = base + best * s.inner;
      }
    }
  });
  const Shape in_shape = x.shape();
  maybe_record(want_max ? Primitive::reduce_max : Primitive::reduce_min, {x}, out,
               [in_shape, arg](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
                 Tensor gx = Tensor::zeros(in_shape, g.dtype());
                 dispatch(g.dtype(), [&]<class T>() {
                   const T* pg = g.data<T>().data();
                   T* px = gx.data<T>().data();
                   for (std::size_t i = 0; i < arg->size(); ++i) px[(*arg)[i]] += pg[i];
                 });
                 gi[0] = gx;
               });
  return out;
}

}  // namespace

Tensor reduce_max(const Tensor& x, int axis, bool keepdims) { return reduce_extreme(x, axis, keepdims, true); }
Tensor reduce_min(const Tensor& x, int axis, bool keepdims) { return reduce_extreme(x, axis, keepdims, false); }

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

Tensor exp(const Tensor& x) {
  Tensor out = ew_unary(x, [](auto v) { return std::exp(v); });
  Tensor y = out.detach();
  maybe_record(Primitive::exp, {x}, out, [y](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
    gi[0] = mul(g, y);
  });
  return out;
}

Tensor log(const Tensor& x) {
  Tensor out = ew_unary(x, [](auto v) { return std::log(v); });
  maybe_record(Primitive::log, {x}, out, [x](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
    gi[0] = div(g, x.detach());
  });
  return out;
}

Tensor sqrt(const Tensor& x) {
  Tensor out = ew_unary(x, [](auto v) { return std::sqrt(v); });
  Tensor y = out.detach();
  maybe_record(Primitive::sqrt, {x}, out, [y](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
    gi[0] = ew_binary("sqrt", g, y, [](auto gv, auto yv) {
      using T = decltype(yv);
      return yv == T(0) ? T(0) : gv / (T(2) * yv);
    });
  });
  return out;
}

Tensor tanh(const Tensor& x) {
  Tensor out = ew_unary(x, [](auto v) { return std::tanh(v); });
  Tensor y = out.detach();
  maybe_record(Primitive::tanh, {x}, out, [y](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
    gi[0] = ew_binary("tanh", g, y, [](auto gv, auto yv) { return gv * (decltype(yv)(1) - yv * yv); });
  });
  return out;
}

Tensor relu(const Tensor& x) {
  // Written so that NaN passes through.
  Tensor out = ew_unary(x, [](auto v) { return v < decltype(v)(0) ? decltype(v)(0) : v; });
  maybe_record(Primitive::relu, {x}, out, [x](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
    gi[0] = ew_binary("relu", g, x.detach(), [](auto gv, auto xv) {
      return xv > decltype(xv)(0) ? gv : decltype(gv)(0);
    });
  });
  return out;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor out = dispatch(x.dtype(), [&]<class T>() {
    const T s = static_cast<T>(slope);
    return ew_unary(x, [s](T v) { return v > T(0) ? v : v * s; });
  });
  maybe_record(Primitive::leaky_relu, {x}, out,
               [x, slope](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
                 gi[0] = dispatch(g.dtype(), [&]<class T>() {
                   const T s = static_cast<T>(slope);
                   return ew_binary("leaky_relu", g, x.detach(), [s](T gv, T xv) { return xv > T(0) ? gv : gv * s; });
                 });
               });
  return out;
}

Tensor power(const Tensor& x, double exponent) {
  Tensor out = dispatch(x.dtype(), [&]<class T>() {
    const T p = static_cast<T>(exponent);
    return ew_unary(x, [p](T v) { return std::pow(v, p); });
  });
  maybe_record(Primitive::power, {x}, out,
               [x, exponent](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
                 gi[0] = dispatch(g.dtype(), [&]<class T>() {
                   const T p = static_cast<T>(exponent);
                   return ew_binary("power", g, x.detach(),
                                    [p](T gv, T xv) { return gv * p * std::pow(xv, p - T(1)); });
                 });
               });
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  axis = normalize_axis(axis, x.rank(), "softmax");
  const AxisSplit s = split_at(x.shape(), axis);
  Tensor out = Tensor::make(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    kp::softmax<T>(x.data<T>().data(), out.data<T>().data(), s.outer, s.n, s.inner);
  });
  Tensor y = out.detach();
  maybe_record(Primitive::softmax, {x}, out, [y, s](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
    Tensor gx = Tensor::make(y.shape(), y.dtype());
    dispatch(y.dtype(), [&]<class T>() {
      kp::softmax_backward<T>(y.data<T>().data(), g.data<T>().data(), gx.data<T>().data(), s.outer, s.n, s.inner);
    });
    gi[0] = gx;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Spatial

Tensor pad(const Tensor& x, const std::vector<std::pair<int, int>>& pads) {
  const int rank = x.rank();
  if (static_cast<int>(pads.size()) > rank) {
    shape_error("pad", std::to_string(pads.size()) + " pad pairs for shape " + to_string(x.shape()));
  }
  Shape out_shape = x.shape();
  std::vector<int> before(static_cast<std::size_t>(rank), 0);
  const std::size_t offset = static_cast<std::size_t>(rank) - pads.size();
  for (std::size_t i = 0; i < pads.size(); ++i) {
    if (pads[i].first < 0 || pads[i].second < 0) shape_error("pad", "negative padding");
    before[i + offset] = pads[i].first;
    out_shape[i + offset] += pads[i].first + pads[i].second;
  }
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  const auto so = strides_of(out_shape);
  std::size_t base = 0;
  for (int d = 0; d < rank; ++d) base += static_cast<std::size_t>(before[static_cast<std::size_t>(d)]) * so[static_cast<std::size_t>(d)];
  dispatch(x.dtype(), [&]<class T>() {
    const T* px = x.data<T>().data();
    T* po = out.data<T>().data();
    walk2(x.shape(), so, so, [&](std::size_t i, std::size_t io, std::size_t) { po[base + io] = px[i]; });
  });
  const Shape in_shape = x.shape();
  maybe_record(Primitive::pad, {x}, out,
               [in_shape, so, base](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
                 Tensor gx = Tensor::make(in_shape, g.dtype());
                 dispatch(g.dtype(), [&]<class T>() {
                   const T* pg = g.data<T>().data();
                   T* px = gx.data<T>().data();
                   walk2(in_shape, so, so, [&](std::size_t i, std::size_t io, std::size_t) { px[i] = pg[base + io]; });
                 });
                 gi[0] = gx;
               });
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  const bool batched = x.rank() == 4;
  if (!batched && x.rank() != 3) shape_error("conv2d", "input must be (n,c,h,w) or (c,h,w), got " + to_string(x.shape()));
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
    shape_error("conv2d", "weight must be (cout,cin,k,k), got " + to_string(weight.shape()));
  }
  require_same_dtype("conv2d", x, weight);
  const int n = batched ? x.dim(0) : 1;
  kernels::ConvGeometry geo;
  geo.channels = x.dim(-3);
  geo.height = x.dim(-2);
  geo.width = x.dim(-1);
  geo.kernel = weight.dim(2);
  geo.stride = stride;
  geo.pad = padding;
  const int cout = weight.dim(0);
  if (weight.dim(1) != geo.channels) {
    shape_error("conv2d", "input " + to_string(x.shape()) + " vs weight " + to_string(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    shape_error("conv2d", "bias " + to_string(bias.shape()) + " for weight " + to_string(weight.shape()));
  }
  if (stride <= 0 || padding < 0 || geo.height + 2 * padding < geo.kernel || geo.width + 2 * padding < geo.kernel) {
    shape_error("conv2d", "invalid stride/padding for input " + to_string(x.shape()));
  }
  const int ho = geo.out_height(), wo = geo.out_width();
  const std::size_t plane_in = static_cast<std::size_t>(geo.channels) * geo.height * geo.width;
  const std::size_t plane_out = static_cast<std::size_t>(cout) * ho * wo;
  const std::size_t cols_size = static_cast<std::size_t>(geo.col_rows()) * ho * wo;
  Shape out_shape = batched ? Shape{n, cout, ho, wo} : Shape{cout, ho, wo};
  Tensor out = Tensor::make(out_shape, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    const T* px = x.data<T>().data();
    const T* pw = weight.data<T>().data();
    T* po = out.data<T>().data();
    std::vector<T> cols(cols_size);
    for (int s = 0; s < n; ++s) {
      kp::im2col<T>(geo, px + s * plane_in, cols.data());
      T* dst = po + s * plane_out;
      if (bias.defined()) {
        const T* pb = bias.data<T>().data();
        for (int c = 0; c < cout; ++c) std::fill(dst + static_cast<std::size_t>(c) * ho * wo, dst + static_cast<std::size_t>(c + 1) * ho * wo, pb[c]);
      }
      kp::gemm<T>({cout, ho * wo, geo.col_rows(), false, false}, pw, cols.data(), dst, bias.defined());
    }
  });
  maybe_record(Primitive::conv2d, {x, weight, bias}, out,
               [x, weight, geo, n, cout, ho, wo, plane_in, plane_out, cols_size](
                   const Tensor& g, std::span<const bool> needs, std::span<Tensor> gi) {
                 dispatch(g.dtype(), [&]<class T>() {
                   const T* px = x.data<T>().data();
                   const T* pw = weight.data<T>().data();
                   const T* pg = g.data<T>().data();
                   Tensor gx, gw;
                   if (needs[0]) gx = Tensor::zeros(x.shape(), x.dtype());
                   if (needs[1]) gw = Tensor::zeros(weight.shape(), weight.dtype());
                   std::vector<T> cols(cols_size);
                   for (int s = 0; s < n; ++s) {
                     const T* gs = pg + s * plane_out;
                     if (needs[1]) {
                       kp::im2col<T>(geo, px + s * plane_in, cols.data());
                       kp::gemm<T>({cout, geo.col_rows(), ho * wo, false, true}, gs, cols.data(),
                                   gw.data<T>().data(), true);
                     }
                     if (needs[0]) {
                       kp::gemm<T>({geo.col_rows(), ho * wo, cout, true, false}, pw, gs, cols.data(), false);
                       kp::col2im<T>(geo, cols.data(), gx.data<T>().data() + s * plane_in);
                     }
                   }
                   if (needs[0]) gi[0] = gx;
                   if (needs[1]) gi[1] = gw;
                   if (needs[2]) {
                     Tensor gb = Tensor::zeros({cout}, g.dtype());
                     T* pb = gb.data<T>().data();
                     for (int s = 0; s < n; ++s) {
                       for (int c = 0; c < cout; ++c) {
                         const T* row = pg + s * plane_out + static_cast<std::size_t>(c) * ho * wo;
                         T acc = 0;
                         for (int i = 0; i < ho * wo; ++i) acc += row[i];
                         pb[c] += acc;
                       }
                     }
                     gi[2] = gb;
                   }
                 });
               });
  return out;
}

Tensor upsample_nearest(const Tensor& x, int factor) {
  if (x.rank() < 2 || factor < 1) shape_error("upsample_nearest", "bad input " + to_string(x.shape()));
  const int h = x.dim(-2), w = x.dim(-1);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = h * factor;
  out_shape[out_shape.size() - 1] = w * factor;
  const std::size_t planes = x.numel() / (static_cast<std::size_t>(h) * w);
  Tensor out = Tensor::make(out_shape, x.dtype());
  const int oh = h * factor, ow = w * factor;
  dispatch(x.dtype(), [&]<class T>() {
    const T* px = x.data<T>().data();
    T* po = out.data<T>().data();
    for (std::size_t p = 0; p < planes; ++p) {
      const T* src = px + p * h * w;
      T* dst = po + p * oh * ow;
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) dst[y * ow + xx] = src[(y / factor) * w + xx / factor];
      }
    }
  });
  const Shape in_shape = x.shape();
  maybe_record(Primitive::upsample_nearest, {x}, out,
               [in_shape, planes, h, w, factor, oh, ow](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
                 Tensor gx = Tensor::zeros(in_shape, g.dtype());
                 dispatch(g.dtype(), [&]<class T>() {
                   const T* pg = g.data<T>().data();
                   T* px = gx.data<T>().data();
                   for (std::size_t p = 0; p < planes; ++p) {
                     for (int y = 0; y < oh; ++y) {
                       for (int xx = 0; xx < ow; ++xx) {
                         px[p * h * w + (y / factor) * w + xx / factor] += pg[p * oh * ow + y * ow + xx];
                       }
                     }
                   }
                 });
                 gi[0] = gx;
               });
  return out;
}

namespace {

struct LinearTaps {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

LinearTaps bilinear_taps(int in, int out) {
  LinearTaps t;
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    t.lo.push_back(lo);
    t.hi.push_back(std::min(lo + 1, in - 1));
    t.frac.push_back(src - lo);
  }
  return t;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  if (x.rank() < 2 || out_h <= 0 || out_w <= 0) shape_error("resize_bilinear", "bad input " + to_string(x.shape()));
  const int h = x.dim(-2), w = x.dim(-1);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = out_h;
  out_shape[out_shape.size() - 1] = out_w;
  const std::size_t planes = x.numel() / (static_cast<std::size_t>(h) * w);
  const LinearTaps ty = bilinear_taps(h, out_h), tx = bilinear_taps(w, out_w);
  Tensor out = Tensor::make(out_shape, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    const T* px = x.data<T>().data();
    T* po = out.data<T>().data();
    for (std::size_t p = 0; p < planes; ++p) {
      const T* src = px + p * h * w;
      T* dst = po + p * out_h * out_w;
      for (int y = 0; y < out_h; ++y) {
        const T fy = static_cast<T>(ty.frac[y]);
        const T* r0 = src + ty.lo[y] * w;
        const T* r1 = src + ty.hi[y] * w;
        for (int xx = 0; xx < out_w; ++xx) {
          const T fx = static_cast<T>(tx.frac[xx]);
          const int x0 = tx.lo[xx], x1 = tx.hi[xx];
          const T top = r0[x0] + (r0[x1] - r0[x0]) * fx;
          const T bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
          dst[y * out_w + xx] = top + (bot - top) * fy;
        }
      }
    }
  });
  const Shape in_shape = x.shape();
  maybe_record(Primitive::resize_bilinear, {x}, out,
               [in_shape, planes, h, w, out_h, out_w, ty, tx](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
                 Tensor gx = Tensor::zeros(in_shape, g.dtype());
                 dispatch(g.dtype(), [&]<class T>() {
                   const T* pg = g.data<T>().data();
                   T* px = gx.data<T>().data();
                   for (std::size_t p = 0; p < planes; ++p) {
                     T* dst = px + p * h * w;
                     const T* src = pg + p * out_h * out_w;
                     for (int y = 0; y < out_h; ++y) {
                       const T fy = static_cast<T>(ty.frac[y]);
                       for (int xx = 0; xx < out_w; ++xx) {
                         const T fx = static_cast<T>(tx.frac[xx]);
                         const T v = src[y * out_w + xx];
                         dst[ty.lo[y] * w + tx.lo[xx]] += v * (T(1) - fy) * (T(1) - fx);
                         dst[ty.lo[y] * w + tx.hi[xx]] += v * (T(1) - fy) * fx;
                         dst[ty.hi[y] * w + tx.lo[xx]] += v * fy * (T(1) - fx);
                         dst[ty.hi[y] * w + tx.hi[xx]] += v * fy * fx;
                       }
                     }
                   }
                 });
                 gi[0] = gx;
               });
  return out;
}

// ---------------------------------------------------------------------------
// Indexing

Tensor gather(const Tensor& x, int axis, const std::vector<int>& index) {
  axis = normalize_axis(axis, x.rank(), "gather");
  if (index.empty()) shape_error("gather", "empty index");
  check_index("gather", index, x.dim(axis));
  const AxisSplit s = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = static_cast<int>(index.size());
  Tensor out = Tensor::make(out_shape, x.dtype());
  const std::size_t m = index.size();
  dispatch(x.dtype(), [&]<class T>() {
    const T* px = x.data<T>().data();
    T* po = out.data<T>().data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < m; ++i) {
        const T* src = px + (o * s.n + static_cast<std::size_t>(index[i])) * s.inner;
        std::copy(src, src + s.inner, po + (o * m + i) * s.inner);
      }
    }
  });
  const int extent = x.dim(axis);
  maybe_record(Primitive::gather, {x}, out,
               [axis, index, extent](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
                 gi[0] = scatter(g, axis, index, extent);
               });
  return out;
}

Tensor scatter(const Tensor& x, int axis, const std::vector<int>& index, int size) {
  axis = normalize_axis(axis, x.rank(), "scatter");
  if (static_cast<int>(index.size()) != x.dim(axis)) {
    shape_error("scatter", "index of length " + std::to_string(index.size()) + " for axis extent " +
                               std::to_string(x.dim(axis)));
  }
  if (size <= 0) shape_error("scatter", "non-positive output extent");
  check_index("scatter", index, size);
  const AxisSplit s = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = size;
  Tensor out = Tensor::zeros(out_shape, x.dtype());
  dispatch(x.dtype(), [&]<class T>() {
    const T* px = x.data<T>().data();
    T* po = out.data<T>().data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.n; ++i) {
        const T* src = px + (o * s.n + i) * s.inner;
        T* dst = po + (o * static_cast<std::size_t>(size) + static_cast<std::size_t>(index[i])) * s.inner;
        for (std::size_t k = 0; k < s.inner; ++k) dst[k] += src[k];
      }
    }
  });
  maybe_record(Primitive::scatter, {x}, out,
               [axis, index](const Tensor& g, std::span<const bool>, std::span<Tensor> gi) {
                 gi[0] = gather(g, axis, index);
               });
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Tensor> apply_primitive(Primitive op, std::span<const Tensor> in, const Attrs& at) {
  auto need = [&](std::size_t count) {
    if (in.size() < count) {
      shape_error(primitive_name(op), "expects " + std::to_string(count) + " inputs, got " + std::to_string(in.size()));
    }
  };
  switch (op) {
    case Primitive::add: need(2); return {add(in[0], in[1])};
    case Primitive::sub: need(2); return {sub(in[0], in[1])};
    case Primitive::mul: need(2); return {mul(in[0], in[1])};
    case Primitive::div: need(2); return {div(in[0], in[1])};
    case Primitive::add_scalar: need(1); return {add_scalar(in[0], at.scalar)};
    case Primitive::mul_scalar: need(1); return {mul_scalar(in[0], at.scalar)};
    case Primitive::matmul: need(2); return {matmul(in[0], in[1])};
    case Primitive::transpose: need(1); return {at.perm.empty() ? transpose(in[0]) : transpose(in[0], at.perm)};
    case Primitive::reshape: need(1); return {reshape(in[0], at.shape)};
    case Primitive::concat: need(1); return {concat(in, at.axis)};
    case Primitive::split: need(1); return split(in[0], at.axis, at.sections);
    case Primitive::slice: need(1); return {slice(in[0], at.axis, at.start, at.length)};
    case Primitive::sum: need(1); return {sum(in[0], at.axes, at.keepdims)};
    case Primitive::mean: need(1); return {mean(in[0], at.axes, at.keepdims)};
    case Primitive::var: need(1); return {var(in[0], at.axes, at.keepdims)};
    case Primitive::exp: need(1); return {exp(in[0])};
    case Primitive::log: need(1); return {log(in[0])};
    case Primitive::sqrt: need(1); return {sqrt(in[0])};
    case Primitive::tanh: need(1); return {tanh(in[0])};
    case Primitive::relu: need(1); return {relu(in[0])};
    case Primitive::leaky_relu: need(1); return {leaky_relu(in[0], at.scalar == 0.0 ? 0.2 : at.scalar)};
    case Primitive::softmax: need(1); return {softmax(in[0], at.axis)};
    case Primitive::power: need(1); return {power(in[0], at.scalar)};
    case Primitive::reduce_max: need(1); return {reduce_max(in[0], at.axis, at.keepdims)};
    case Primitive::reduce_min: need(1); return {reduce_min(in[0], at.axis, at.keepdims)};
    case Primitive::pad: need(1); return {pad(in[0], at.pads)};
    case Primitive::conv2d: need(2); return {conv2d(in[0], in[1], in.size() > 2 ? in[2] : Tensor(), at.stride, at.padding)};
    case Primitive::upsample_nearest: need(1); return {upsample_nearest(in[0], at.factor)};
    case Primitive::resize_bilinear: need(1); return {resize_bilinear(in[0], at.out_h, at.out_w)};
    case Primitive::gather: need(1); return {gather(in[0], at.axis, at.index)};
    case Primitive::scatter: need(1); return {scatter(in[0], at.axis, at.index, at.size)};
    case Primitive::leaf: break;
  }
  throw std::invalid_argument("unknown primitive id " + std::to_string(static_cast<int>(op)));
}

std::vector<Tensor> apply_primitive(std::string_view op, std::span<const Tensor> inputs, const Attrs& attrs) {
  return apply_primitive(primitive_from_name(op), inputs, attrs);
}

}  // namespace cfftgan::num
