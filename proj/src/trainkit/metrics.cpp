#include "cfftgan/trainkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cfftgan/numcore/error.hpp"
#include "cfftgan/numcore/tape.hpp"

namespace cfftgan::train {

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ShapeError("wasserstein_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t k = std::max(a.size(), b.size());
  const auto quantile = [k](const std::vector<double>& s, std::size_t i) {
    return s[s.size() == k ? i : (2 * i + 1) * s.size() / (2 * k)];
  };
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) total += std::abs(quantile(a, i) - quantile(b, i));
  return total / static_cast<double>(k);
}

PointSet random_directions(int count, int dim, Rng& rng) {
  PointSet out(static_cast<std::size_t>(count), std::vector<double>(static_cast<std::size_t>(dim)));
  for (auto& u : out) {
    double norm = 0.0;
    while (norm < 1e-12) {
      norm = 0.0;
      for (double& x : u) {
        x = rng.normal();
        norm += x * x;
      }
    }
    norm = std::sqrt(norm);
    for (double& x : u) x /= norm;
  }
  return out;
}

double sliced_wasserstein(const PointSet& a, const PointSet& b, const PointSet& directions) {
  if (a.empty() || b.empty()) throw ShapeError("sliced_wasserstein: empty point set");
  if (directions.empty()) throw ShapeError("sliced_wasserstein: no directions");
  const std::size_t dim = directions.front().size();
  for (const PointSet* s : {&a, &b}) {
    for (const auto& p : *s) {
      if (p.size() != dim) throw ShapeError("sliced_wasserstein: point dimension differs from the directions");
    }
  }
  const auto project = [](const PointSet& s, const std::vector<double>& u) {
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      double d = 0.0;
      for (std::size_t k = 0; k < u.size(); ++k) d += s[i][k] * u[k];
      out[i] = d;
    }
    return out;
  };
  double total = 0.0;
  for (const auto& u : directions) total += wasserstein_1d(project(a, u), project(b, u));
  return total / static_cast<double>(directions.size());
}

PointSet extract_patches(const std::vector<Tensor>& images, int patch_size, int per_image, std::uint64_t seed) {
  PointSet out;
  for (std::size_t k = 0; k < images.size(); ++k) {
    const Tensor& img = images[k];
    if (img.rank() != 3) throw ShapeError("extract_patches: expected (C,H,W), got " + num::to_string(img.shape()));
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (h < patch_size || w < patch_size) throw ShapeError("extract_patches: image smaller than the patch");
    const std::vector<double> v = img.to_vector();
    Rng rng(seed, k);
    for (int p = 0; p < per_image; ++p) {
      const int i0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - patch_size + 1)));
      const int j0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - patch_size + 1)));
      std::vector<double> d;
      d.reserve(static_cast<std::size_t>(c * patch_size * patch_size));
      for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < patch_size; ++i) {
          for (int j = 0; j < patch_size; ++j) d.push_back(v[static_cast<std::size_t>((ch * h + i0 + i) * w + j0 + j)]);
        }
      }
      out.push_back(std::move(d));
    }
  }
  return out;
}

double swd(const std::vector<Tensor>& a, const std::vector<Tensor>& b, const SwdOptions& o) {
  if (a.empty() || b.empty()) throw ShapeError("swd: empty image set");
  const PointSet pa = extract_patches(a, o.patch_size, o.patches_per_image, o.seed);
  const PointSet pb = extract_patches(b, o.patch_size, o.patches_per_image, o.seed);
  Rng rng(o.seed, 0x736c696365ULL);
  const PointSet dirs = random_directions(o.projections, static_cast<int>(pa.front().size()), rng);
  return sliced_wasserstein(pa, pb, dirs);
}

double feature_cosine(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || (a.rank() != 3 && a.rank() != 4)) {
    throw ShapeError("feature_cosine: expected matching (C,H,W) or (N,C,H,W), got " + num::to_string(a.shape()) +
                     " and " + num::to_string(b.shape()));
  }
  const int n = a.rank() == 4 ? a.dim(0) : 1;
  const int c = a.dim(-3), hw = a.dim(-2) * a.dim(-1);
  const std::vector<double> x = a.to_vector(), y = b.to_vector();
  double total = 0.0;
  for (int s = 0; s < n; ++s) {
    for (int p = 0; p < hw; ++p) {
      double xy = 0.0, xx = 0.0, yy = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t i = static_cast<std::size_t>((s * c + ch) * hw + p);
        xy += x[i] * y[i];
        xx += x[i] * x[i];
        yy += y[i] * y[i];
      }
      if (xx == 0.0 && yy == 0.0) {
        total += 1.0;
      } else if (xx > 0.0 && yy > 0.0) {
        total += xy / (std::sqrt(xx) * std::sqrt(yy));
      }
    }
  }
  return total / (static_cast<double>(n) * hw);
}

namespace {

double stage_cosine(const loss::SurrogateExtractor& ext, const Tensor& image, const Tensor& reference,
                    bool high_level) {
  if (image.shape() != reference.shape()) {
    throw ShapeError("metric: images differ in shape: " + num::to_string(image.shape()) + " vs " +
                     num::to_string(reference.shape()));
  }
  num::NoGradScope no_grad;
  const loss::FeaturePyramid pa = ext(image);
  const loss::FeaturePyramid pb = ext(reference);
  const std::vector<int>& ids = high_level ? pa.high_level_ids : pa.low_level_ids;
  double total = 0.0;
  for (int l : ids) total += feature_cosine(pa.at(l), pb.at(l));
  return total / static_cast<double>(ids.size());
}

}  // namespace

double semantic_consistency(const loss::SurrogateExtractor& ext, const Tensor& image, const Tensor& reference) {
  return stage_cosine(ext, image, reference, true);
}

double style_similarity(const loss::SurrogateExtractor& ext, const Tensor& image, const Tensor& reference) {
  return stage_cosine(ext, image, reference, false);
}

std::vector<EvalSample> translate_set(model::TranslationModel& model, const data::Dataset& ds, std::size_t limit) {
  const std::size_t n = limit == 0 ? ds.size() : std::min(limit, ds.size());
  if (n == 0) throw ShapeError("translate_set: empty dataset");
  std::vector<EvalSample> out(n);
  std::vector<Tensor> xa, ex, third;
  for (std::size_t i = 0; i < n; ++i) {
    const data::ScenePair p = ds.pair(i);
    out[i].x_a = p.x_a;
    out[i].x_b = p.x_b;
    out[i].exemplar = ds.pair((i + 1) % n).x_b;
    xa.push_back(out[i].x_a);
    ex.push_back(out[i].exemplar);
    if (model.arch().domains == 3) third.push_back(ds.mask(i));
  }
  const Tensor y = model::translate(model, data::stack_images(xa), data::stack_images(ex),
                                    third.empty() ? Tensor() : data::stack_images(third));
  for (std::size_t i = 0; i < n; ++i) out[i].output = data::batch_item(y, static_cast<int>(i));
  return out;
}

std::string EvalReport::format() const {
  char buf[200];
  std::snprintf(buf, sizeof buf, "swd=%.9g\nsemantic_consistency=%.9g\nstyle_similarity=%.9g\n", swd,
                semantic_consistency, style_similarity);
  return buf;
}

EvalReport evaluate(model::TranslationModel& model, const loss::SurrogateExtractor& ext, const data::Dataset& ds,
                    std::size_t limit, const SwdOptions& swd_options) {
  const std::vector<EvalSample> s = translate_set(model, ds, limit);
  EvalReport r;
  r.samples = s.size();
  std::vector<Tensor> outs, reals;
  for (const EvalSample& e : s) {
    outs.push_back(e.output);
    reals.push_back(e.x_b);
    r.semantic_consistency += semantic_consistency(ext, e.output, e.x_a);
    r.style_similarity += style_similarity(ext, e.output, e.exemplar);
  }
  r.semantic_consistency /= static_cast<double>(s.size());
  r.style_similarity /= static_cast<double>(s.size());
  r.swd = swd(outs, reals, swd_options);
  return r;
}

}  // namespace cfftgan::train
