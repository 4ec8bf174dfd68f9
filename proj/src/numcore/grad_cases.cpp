#include "cfftgan/numcore/grad_cases.hpp"

#include <numeric>

namespace cfftgan::num {

namespace {

int extent(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

Shape random_shape(Rng& rng, int min_rank, int max_rank, int max_extent) {
  Shape s(static_cast<std::size_t>(extent(rng, min_rank, max_rank)));
  for (int& d : s) d = extent(rng, 1, max_extent);
  return s;
}

Tensor away_from_zero(const Shape& s, Rng& rng, DType dt) {
  Tensor t = Tensor::randn(s, rng, 1.0, dt);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double v = t.at(i);
    t.set(i, v >= 0 ? v + 0.05 : v - 0.05);
  }
  return t;
}

Tensor distinct_values(const Shape& s, Rng& rng, DType dt) {
  // A shuffled grid with spacing 0.1, so no two entries tie within eps.
  const std::size_t n = numel(s);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 0.1 * static_cast<double>(i) - 0.05 * static_cast<double>(n);
  for (std::size_t i = n; i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  return Tensor::from_values(s, v, dt);
}

std::pair<std::vector<Tensor>, Attrs> binary_inputs(Rng& rng, DType dt, bool positive_b) {
  const Shape out = random_shape(rng, 1, 3, 4);
  Shape sb = out;
  for (int& d : sb) {
    if (rng.below(3) == 0) d = 1;
  }
  if (rng.below(2) == 0 && sb.size() > 1) sb.erase(sb.begin());
  Tensor a = Tensor::randn(out, rng, 1.0, dt);
  Tensor b = positive_b ? Tensor::uniform(sb, rng, 0.5, 2.0, dt) : Tensor::randn(sb, rng, 1.0, dt);
  if (!positive_b && rng.below(2) == 0) std::swap(a, b);
  return {{a, b}, Attrs{}};
}

}  // namespace

std::vector<PrimitiveCase> primitive_cases() {
  std::vector<PrimitiveCase> c;
  for (const char* op : {"add", "sub", "mul"}) {
    c.push_back({op, [](Rng& r, DType d) { return binary_inputs(r, d, false); }});
  }
  c.push_back({"div", [](Rng& r, DType d) { return binary_inputs(r, d, true); }});
  c.push_back({"add_scalar", [](Rng& r, DType d) {
                 Attrs at;
                 at.scalar = r.uniform(-2, 2);
                 return std::pair{std::vector<Tensor>{Tensor::randn(random_shape(r, 0, 3, 4), r, 1.0, d)}, at};
               }});
  c.push_back({"mul_scalar", [](Rng& r, DType d) {
                 Attrs at;
                 at.scalar = r.uniform(-2, 2);
                 return std::pair{std::vector<Tensor>{Tensor::randn(random_shape(r, 0, 3, 4), r, 1.0, d)}, at};
               }});
  c.push_back({"matmul", [](Rng& r, DType d) {
                 const int m = extent(r, 1, 4), k = extent(r, 1, 4), n = extent(r, 1, 4), b = extent(r, 1, 3);
                 Shape sa{m, k}, sb{k, n};
                 switch (r.below(4)) {
                   case 1: sa = {b, m, k}; break;
                   case 2: sa = {b, m, k}; sb = {b, k, n}; break;
                   case 3: sb = {b, k, n}; break;
                   default: break;
                 }
                 return std::pair{std::vector<Tensor>{Tensor::randn(sa, r, 1.0, d), Tensor::randn(sb, r, 1.0, d)}, Attrs{}};
               }});
  c.push_back({"transpose", [](Rng& r, DType d) {
                 Attrs at;
                 const Shape s = random_shape(r, 2, 4, 4);
                 at.perm.resize(s.size());
                 std::iota(at.perm.begin(), at.perm.end(), 0);
                 for (std::size_t i = at.perm.size(); i > 1; --i) std::swap(at.perm[i - 1], at.perm[r.below(i)]);
                 return std::pair{std::vector<Tensor>{Tensor::randn(s, r, 1.0, d)}, at};
               }});
  c.push_back({"reshape", [](Rng& r, DType d) {
                 Attrs at;
                 const int a = extent(r, 1, 4), b = extent(r, 1, 4), e = extent(r, 1, 4);
                 at.shape = {b * e, -1};
                 return std::pair{std::vector<Tensor>{Tensor::randn({a, b, e}, r, 1.0, d)}, at};
               }});
  c.push_back({"concat", [](Rng& r, DType d) {
                 Attrs at;
                 const Shape s = random_shape(r, 1, 3, 4);
                 at.axis = static_cast<int>(r.below(s.size()));
                 std::vector<Tensor> in;
                 const int parts = extent(r, 2, 3);
                 for (int p = 0; p < parts; ++p) {
                   Shape sp = s;
                   sp[static_cast<std::size_t>(at.axis)] = extent(r, 1, 3);
                   in.push_back(Tensor::randn(sp, r, 1.0, d));
                 }
                 return std::pair{in, at};
               }});
  c.push_back({"split", [](Rng& r, DType d) {
                 Attrs at;
                 Shape s = random_shape(r, 1, 3, 3);
                 at.axis = static_cast<int>(r.below(s.size()));
                 at.sections = {extent(r, 1, 3), extent(r, 1, 3)};
                 s[static_cast<std::size_t>(at.axis)] = at.sections[0] + at.sections[1];
                 return std::pair{std::vector<Tensor>{Tensor::randn(s, r, 1.0, d)}, at};
               }});
  c.push_back({"slice", [](Rng& r, DType d) {
                 Attrs at;
                 Shape s = random_shape(r, 1, 3, 5);
                 at.axis = static_cast<int>(r.below(s.size()));
                 const int e = s[static_cast<std::size_t>(at.axis)];
                 at.start = static_cast<int>(r.below(static_cast<std::uint64_t>(e)));
                 at.length = extent(r, 1, e - at.start);
                 return std::pair{std::vector<Tensor>{Tensor::randn(s, r, 1.0, d)}, at};
               }});
  for (const char* op : {"sum", "mean", "var"}) {
    c.push_back({op, [](Rng& r, DType d) {
                   Attrs at;
                   const Shape s = random_shape(r, 1, 4, 4);
                   for (int a = 0; a < static_cast<int>(s.size()); ++a) {
                     if (r.below(2) == 0) at.axes.push_back(a);
                   }
                   at.keepdims = r.below(2) == 0;
                   return std::pair{std::vector<Tensor>{Tensor::randn(s, r, 1.0, d)}, at};
                 }});
  }
  for (const char* op : {"exp", "tanh", "relu", "leaky_relu"}) {
    c.push_back({op, [](Rng& r, DType d) {
                   return std::pair{std::vector<Tensor>{away_from_zero(random_shape(r, 1, 3, 4), r, d)}, Attrs{}};
                 }});
  }
  for (const char* op : {"log", "sqrt"}) {
    c.push_back({op, [](Rng& r, DType d) {
                   return std::pair{std::vector<Tensor>{Tensor::uniform(random_shape(r, 1, 3, 4), r, 0.3, 3.0, d)}, Attrs{}};
                 }});
  }
  c.push_back({"power", [](Rng& r, DType d) {
                 Attrs at;
                 at.scalar = std::vector<double>{2.0, 3.0, 1.5, -0.5}[r.below(4)];
                 return std::pair{std::vector<Tensor>{Tensor::uniform(random_shape(r, 1, 3, 4), r, 0.3, 2.0, d)}, at};
               }});
  c.push_back({"softmax", [](Rng& r, DType d) {
                 Attrs at;
                 const Shape s = random_shape(r, 1, 3, 5);
                 at.axis = static_cast<int>(r.below(s.size()));
                 return std::pair{std::vector<Tensor>{Tensor::randn(s, r, 1.0, d)}, at};
               }});
  for (const char* op : {"reduce_max", "reduce_min"}) {
    c.push_back({op, [](Rng& r, DType d) {
                   Attrs at;
                   const Shape s = random_shape(r, 1, 3, 4);
                   at.axis = static_cast<int>(r.below(s.size()));
                   at.keepdims = r.below(2) == 0;
                   return std::pair{std::vector<Tensor>{distinct_values(s, r, d)}, at};
                 }});
  }
  c.push_back({"pad", [](Rng& r, DType d) {
                 Attrs at;
                 const Shape s = random_shape(r, 2, 3, 4);
                 for (int i = 0; i < 2; ++i) at.pads.push_back({extent(r, 0, 2), extent(r, 0, 2)});
                 return std::pair{std::vector<Tensor>{Tensor::randn(s, r, 1.0, d)}, at};
               }});
  c.push_back({"conv2d", [](Rng& r, DType d) {
                 Attrs at;
                 const int k = extent(r, 1, 4);
                 at.stride = extent(r, 1, 2);
                 at.padding = extent(r, 0, 1);
                 const int cin = extent(r, 1, 3), cout = extent(r, 1, 3);
                 const int h = extent(r, k, 6), w = extent(r, k, 6);
                 std::vector<Tensor> in;
                 in.push_back(r.below(2) == 0 ? Tensor::randn({2, cin, h, w}, r, 1.0, d) : Tensor::randn({cin, h, w}, r, 1.0, d));
                 in.push_back(Tensor::randn({cout, cin, k, k}, r, 1.0, d));
                 if (r.below(3) != 0) in.push_back(Tensor::randn({cout}, r, 1.0, d));
                 return std::pair{in, at};
               }});
  c.push_back({"upsample_nearest", [](Rng& r, DType d) {
                 Attrs at;
                 at.factor = extent(r, 1, 3);
                 return std::pair{std::vector<Tensor>{Tensor::randn(random_shape(r, 2, 4, 3), r, 1.0, d)}, at};
               }});
  c.push_back({"resize_bilinear", [](Rng& r, DType d) {
                 Attrs at;
                 at.out_h = extent(r, 1, 7);
                 at.out_w = extent(r, 1, 7);
                 return std::pair{std::vector<Tensor>{Tensor::randn(random_shape(r, 2, 3, 5), r, 1.0, d)}, at};
               }});
  c.push_back({"gather", [](Rng& r, DType d) {
                 Attrs at;
                 const Shape s = random_shape(r, 1, 3, 4);
                 at.axis = static_cast<int>(r.below(s.size()));
                 const int e = s[static_cast<std::size_t>(at.axis)];
                 at.index.resize(static_cast<std::size_t>(extent(r, 1, 6)));
                 for (int& i : at.index) i = static_cast<int>(r.below(static_cast<std::uint64_t>(e)));
                 return std::pair{std::vector<Tensor>{Tensor::randn(s, r, 1.0, d)}, at};
               }});
  c.push_back({"scatter", [](Rng& r, DType d) {
                 Attrs at;
                 Shape s = random_shape(r, 1, 3, 4);
                 at.axis = static_cast<int>(r.below(s.size()));
                 at.size = extent(r, 1, 5);
                 at.index.resize(static_cast<std::size_t>(s[static_cast<std::size_t>(at.axis)]));
                 for (int& i : at.index) i = static_cast<int>(r.below(static_cast<std::uint64_t>(at.size)));
                 return std::pair{std::vector<Tensor>{Tensor::randn(s, r, 1.0, d)}, at};
               }});
  return c;
}


Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed, 17);
  const Tensor r = Tensor::randn(y.shape(), rng, 1.0, y.dtype());
  return sum(mul(y, r));
}

GradCheckReport check_primitive_case(const PrimitiveCase& pc, DType dtype, const GradCheckOptions& options,
                                     std::uint64_t seed) {
  Rng rng(seed * 7919, 3);
  auto [inputs, attrs] = pc.make(rng, dtype);
  const ScalarFn f = [&, attrs = attrs](std::span<const Tensor> in) {
    Tensor total;
    std::uint64_t s = 5;
    for (const Tensor& o : apply_primitive(pc.op, in, attrs)) {
      const Tensor term = weighted_sum(o, ++s);
      total = total.defined() ? add(total, term) : term;
    }
    return total;
  };
  return grad_check(f, inputs, options);
}

}  // namespace cfftgan::num
