#include "cfftgan/losses/losses.hpp"

#include <cmath>
#include <sstream>

#include "cfftgan/numcore/ops.hpp"
#include "cfftgan/numcore/rng.hpp"
#include "cfftgan/numcore/tape.hpp"

namespace cfftgan::loss {

using namespace cfftgan::num;

namespace {

Tensor avg_pool2(const Tensor& x) {
  const int h = x.dim(-2), w = x.dim(-1);
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("avg_pool2: odd spatial extent in " + to_string(x.shape()));
  Shape s(x.shape().begin(), x.shape().end() - 2);
  Shape split = s;
  split.insert(split.end(), {h / 2, 2, w / 2, 2});
  s.insert(s.end(), {h / 2, w / 2});
  return reshape(mean(reshape(x, split), {-3, -1}), s);
}

Tensor abs_diff(const Tensor& a, const Tensor& b) {
  const Tensor d = sub(a, b);
  return add(relu(d), relu(mul_scalar(d, -1.0)));
}

void check_same(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(who) + ": " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

}  // namespace

SurrogateExtractor::SurrogateExtractor(std::uint64_t seed, int in_channels, std::vector<int> widths)
    : seed_(seed), widths_(std::move(widths)) {
  int cin = in_channels;
  for (std::size_t i = 0; i < widths_.size(); ++i) {
    Rng rng(seed, 1000 + i);
    const double sd = std::sqrt(2.0 / (cin * 9.0));
    const Tensor w = Tensor::randn({widths_[i], cin, 3, 3}, rng, sd, DType::f64);
    weights64_.push_back(w);
    weights32_.push_back(w.to(DType::f32));
    cin = widths_[i];
  }
}

const std::vector<Tensor>& SurrogateExtractor::weights(DType dtype) const {
  return dtype == DType::f32 ? weights32_ : weights64_;
}

FeaturePyramid SurrogateExtractor::operator()(const Tensor& image) const {
  const auto& ws = weights(image.dtype());
  FeaturePyramid p;
  Tensor x = image;
  for (std::size_t i = 0; i < ws.size(); ++i) {
    x = avg_pool2(relu(num::conv2d(x, ws[i], Tensor(), 1, 1)));
    p.levels.emplace_back("stage" + std::to_string(i + 1), x);
  }
  const int n = static_cast<int>(ws.size());
  for (int i = 0; i < std::min(2, n); ++i) p.low_level_ids.push_back(i);
  for (int i = std::max(0, n - 3); i < n; ++i) p.high_level_ids.push_back(i);
  p.perceptual_id = n - 1;
  return p;
}

void LossWeights::validate() const {
  for (double v : {align, match, perc, cx, adv}) {
    if (!(v >= 0.0)) throw ConfigError("loss weights must be >= 0");
  }
  for (double v : mu) {
    if (!(v >= 0.0)) throw ConfigError("mu weights must be >= 0");
  }
  for (double v : omega) {
    if (!(v >= 0.0)) throw ConfigError("omega weights must be >= 0");
  }
}

Tensor mean_abs_diff(const Tensor& a, const Tensor& b) {
  check_same(a, b, "mean_abs_diff");
  return mean(abs_diff(a, b));
}

Tensor l_align(const Tensor& content_feature, const Tensor& target_feature) {
  return mean_abs_diff(content_feature, target_feature);
}

Tensor l_align(model::TranslationModel& model, const Tensor& x_a, const Tensor& x_b) {
  return l_align(model::encode(model, x_a, model::Domain::A), model::encode(model, x_b, model::Domain::B));
}

Tensor l_match(const FeaturePyramid& a, const FeaturePyramid& b, const std::vector<double>& mu) {
  if (static_cast<int>(mu.size()) != a.size() || a.size() != b.size()) {
    throw ConfigError("l_match: " + std::to_string(mu.size()) + " weights for " + std::to_string(a.size()) +
                      " stages");
  }
  Tensor total;
  for (int l = 0; l < a.size(); ++l) {
    const Tensor term = mul_scalar(mean_abs_diff(a.at(l), b.at(l)), mu[static_cast<std::size_t>(l)]);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor l_match(const SurrogateExtractor& ext, const Tensor& x_hat, const Tensor& x_b, const std::vector<double>& mu) {
  check_same(x_hat, x_b, "l_match");
  return l_match(ext(x_hat), ext(x_b), mu);
}

Tensor l_perc(const FeaturePyramid& a, const FeaturePyramid& b) {
  const Tensor& fa = a.at(a.perceptual_id);
  const Tensor& fb = b.at(b.perceptual_id);
  check_same(fa, fb, "l_perc");
  const Tensor d = sub(fa, fb);
  return sqrt(mean(mul(d, d)));
}

Tensor l_perc(const SurrogateExtractor& ext, const Tensor& x_hat, const Tensor& x_b) {
  check_same(x_hat, x_b, "l_perc");
  return l_perc(ext(x_hat), ext(x_b));
}

Tensor cx_similarity(const Tensor& x, const Tensor& y, const CxOptions& opts) {
  if ((x.rank() != 2 && x.rank() != 3) || x.rank() != y.rank() || x.dim(-1) != y.dim(-1) ||
      (x.rank() == 3 && x.dim(0) != y.dim(0))) {
    throw ShapeError("cx_similarity: feature sets " + to_string(x.shape()) + " and " + to_string(y.shape()) +
                     " are not (N,D)/(M,D) or (B,N,D)/(B,M,D)");
  }
  const double eps = opts.eps;
  const Tensor centre = mean(y, {-2}, true);
  const auto unit = [&](const Tensor& t) {
    const Tensor c = sub(t, centre);
    return div(c, sqrt(add_scalar(sum(mul(c, c), {-1}, true), eps * eps)));
  };
  const Tensor cos = matmul(unit(x), transpose(unit(y)));               // (.., N, M)
  const Tensor d = add_scalar(mul_scalar(cos, -1.0), 1.0);              // 1 - cos
  const Tensor d_rel = div(d, add_scalar(reduce_min(d, -1, true), eps));  // d / (min_k d_ik + eps)
  const Tensor a = softmax(mul_scalar(add_scalar(mul_scalar(d_rel, -1.0), 1.0), 1.0 / opts.bandwidth), -1);
  return mean(reduce_max(a, -2), {-1});
}

Tensor feature_set(const Tensor& feature) {
  if (feature.rank() == 3) {
    return transpose(reshape(feature, {feature.dim(0), feature.dim(1) * feature.dim(2)}));
  }
  if (feature.rank() == 4) {
    return transpose(reshape(feature, {feature.dim(0), feature.dim(1), feature.dim(2) * feature.dim(3)}));
  }
  throw ShapeError("feature_set: expected (C,H,W) or (N,C,H,W), got " + to_string(feature.shape()));
}

Tensor l_cx(const FeaturePyramid& a, const FeaturePyramid& b, const std::vector<double>& omega,
            const CxOptions& opts) {
  if (omega.size() != a.low_level_ids.size()) {
    throw ConfigError("l_cx: " + std::to_string(omega.size()) + " weights for " +
                      std::to_string(a.low_level_ids.size()) + " low-level stages");
  }
  Tensor total;
  for (std::size_t i = 0; i < omega.size(); ++i) {
    const int l = a.low_level_ids[i];
    check_same(a.at(l), b.at(l), "l_cx");
    const Tensor cx = cx_similarity(feature_set(a.at(l)), feature_set(b.at(l)), opts);
    const Tensor term = mul_scalar(mean(mul_scalar(log(cx), -1.0)), omega[i]);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor l_cx(const SurrogateExtractor& ext, const Tensor& x_hat, const Tensor& y, const std::vector<double>& omega,
            const CxOptions& opts) {
  return l_cx(ext(x_hat), ext(y), omega, opts);
}

Tensor hinge_d(const Tensor& real_scores, const Tensor& fake_scores) {
  // -min(0, -1 + t) = relu(1 - t), and -min(0, -1 - t) = relu(1 + t).
  return add(mean(relu(add_scalar(mul_scalar(real_scores, -1.0), 1.0))), mean(relu(add_scalar(fake_scores, 1.0))));
}

Tensor hinge_g(const Tensor& fake_scores) { return mul_scalar(mean(fake_scores), -1.0); }

Tensor l_adv_d(model::TranslationModel& model, const Tensor& real, const Tensor& fake) {
  return hinge_d(model::discriminate(model, real), model::discriminate(model, fake.detach()));
}

Tensor l_adv_g(model::TranslationModel& model, const Tensor& fake) {
  return hinge_g(model::discriminate(model, fake));
}

namespace {

void require_finite(const Tensor& t, const char* side, const char* term) {
  if (!t.all_finite()) {
    std::ostringstream os;
    os << side << ": loss term '" << term << "' is not finite (value " << t.item() << ")";
    throw NumericError(os.str());
  }
}

}  // namespace

LossTerms generator_content_terms(model::TranslationModel& model, const SurrogateExtractor& ext,
                                  const PseudoTuple& batch, const LossWeights& w) {
  w.validate();
  check_same(batch.x_tilde_b, batch.x_b, "generator_loss");
  const model::ForwardResult r = model::forward(model, batch.x_a, batch.x_tilde_b, batch.third);
  const FeaturePyramid out = ext(r.output);
  const FeaturePyramid target = ext(batch.x_b);
  const FeaturePyramid style = ext(batch.x_tilde_b);

  LossTerms t;
  t.output = r.output;
  t.align = l_align(r.content_feature, model::encode(model, batch.x_b, model::Domain::B));
  t.match = l_match(out, target, w.mu);
  t.perc = l_perc(out, target);
  t.cx = l_cx(out, style, w.omega);
  const std::pair<const char*, const Tensor*> terms[] = {
      {"align", &t.align}, {"match", &t.match}, {"perc", &t.perc}, {"cx", &t.cx}};
  for (const auto& [name, value] : terms) require_finite(*value, "generator_loss", name);
  return t;
}

void finish_generator_loss(model::TranslationModel& model, LossTerms& t, const LossWeights& w) {
  t.adv_g = l_adv_g(model, t.output);
  require_finite(t.adv_g, "generator_loss", "adv_g");
  t.generator = mul_scalar(t.align, w.align);
  t.generator = add(t.generator, mul_scalar(t.match, w.match));
  t.generator = add(t.generator, mul_scalar(t.perc, w.perc));
  t.generator = add(t.generator, mul_scalar(t.cx, w.cx));
  t.generator = add(t.generator, mul_scalar(t.adv_g, w.adv));
  require_finite(t.generator, "generator_loss", "total");
}

LossTerms generator_loss(model::TranslationModel& model, const SurrogateExtractor& ext, const PseudoTuple& batch,
                         const LossWeights& w) {
  LossTerms t = generator_content_terms(model, ext, batch, w);
  finish_generator_loss(model, t, w);
  return t;
}

Tensor discriminator_loss(model::TranslationModel& model, const PseudoTuple& batch, const Tensor& fake,
                          const LossWeights& w) {
  w.validate();
  const Tensor d = mul_scalar(l_adv_d(model, batch.x_b, fake), w.adv);
  require_finite(d, "discriminator_loss", "adv_d");
  return d;
}

TotalLoss total_loss(model::TranslationModel& model, const SurrogateExtractor& ext, const PseudoTuple& batch,
                     const LossWeights& w) {
  TotalLoss out;
  out.g = generator_loss(model, ext, batch, w);
  out.d = discriminator_loss(model, batch, out.g.output, w);
  return out;
}

}  // namespace cfftgan::loss
