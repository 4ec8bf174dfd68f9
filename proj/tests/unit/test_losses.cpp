#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "cfftgan/losses/losses.hpp"
#include "cfftgan/numcore/tape.hpp"
#include "param_util.hpp"
#include "test_util.hpp"

namespace cfftgan::loss {
namespace {

using namespace cfftgan::num;
using model::ArchConfig;
using model::TranslationModel;
using testing::bit_equal;
using testing::random_tensor;

Tensor random_image(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  return Tensor::uniform(shape, rng, -1.0, 1.0);
}

double norm(const Tensor& t) {
  if (!t.defined()) return 0.0;
  double s = 0;
  for (double v : t.to_vector()) s += v * v;
  return std::sqrt(s);
}

double brute_mean_abs(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(a.at(i) - b.at(i));
  return s / static_cast<double>(a.numel());
}

// Plain-loop contextual similarity in double precision.
double brute_cx(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y, double h,
                double eps) {
  const std::size_t n = x.size(), m = y.size(), dim = y[0].size();
  std::vector<double> centre(dim, 0.0);
  for (const auto& r : y)
    for (std::size_t k = 0; k < dim; ++k) centre[k] += r[k] / static_cast<double>(m);
  const auto unit = [&](std::vector<double> r) {
    double ss = 0;
    for (std::size_t k = 0; k < dim; ++k) {
      r[k] -= centre[k];
      ss += r[k] * r[k];
    }
    const double nr = std::sqrt(ss + eps * eps);
    for (double& v : r) v /= nr;
    return r;
  };
  std::vector<std::vector<double>> xu, yu;
  for (const auto& r : x) xu.push_back(unit(r));
  for (const auto& r : y) yu.push_back(unit(r));
  std::vector<std::vector<double>> a(n, std::vector<double>(m));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> d(m);
    for (std::size_t j = 0; j < m; ++j) {
      double c = 0;
      for (std::size_t k = 0; k < dim; ++k) c += xu[i][k] * yu[j][k];
      d[j] = 1.0 - c;
    }
    const double dmin = *std::min_element(d.begin(), d.end());
    double z = 0;
    for (std::size_t j = 0; j < m; ++j) z += a[i][j] = std::exp((1.0 - d[j] / (dmin + eps)) / h);
    for (std::size_t j = 0; j < m; ++j) a[i][j] /= z;
  }
  double cx = 0;
  for (std::size_t j = 0; j < m; ++j) {
    double best = 0;
    for (std::size_t i = 0; i < n; ++i) best = std::max(best, a[i][j]);
    cx += best / static_cast<double>(m);
  }
  return cx;
}

std::vector<std::vector<double>> rows(const Tensor& t) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(t.dim(0)));
  for (int i = 0; i < t.dim(0); ++i)
    for (int k = 0; k < t.dim(1); ++k) out[static_cast<std::size_t>(i)].push_back(t.at(static_cast<std::size_t>(i * t.dim(1) + k)));
  return out;
}

TEST(Extractor, StageSizesAtDeskScale) {
  const SurrogateExtractor ext(1);
  const FeaturePyramid p = ext(random_image({3, 32, 32}, 1));
  ASSERT_EQ(p.size(), 5);
  const std::vector<int> sizes{16, 8, 4, 2, 1}, widths{8, 16, 32, 32, 32};
  for (int l = 0; l < 5; ++l) {
    EXPECT_EQ(p.at(l).shape(), (Shape{widths[static_cast<std::size_t>(l)], sizes[static_cast<std::size_t>(l)],
                                      sizes[static_cast<std::size_t>(l)]}));
  }
  EXPECT_EQ(p.low_level_ids, (std::vector<int>{0, 1}));
  EXPECT_EQ(p.high_level_ids, (std::vector<int>{2, 3, 4}));
  EXPECT_EQ(p.perceptual_id, 4);
  EXPECT_EQ(ext(random_image({2, 3, 32, 32}, 1)).at(0).shape(), (Shape{2, 8, 16, 16}));
}

TEST(Extractor, SeedDeterminesPyramid) {
  const Tensor img = random_image({3, 32, 32}, 4);
  const FeaturePyramid a = SurrogateExtractor(7)(img), b = SurrogateExtractor(7)(img), c = SurrogateExtractor(8)(img);
  for (int l = 0; l < 5; ++l) {
    EXPECT_TRUE(bit_equal(a.at(l), b.at(l)));
    EXPECT_FALSE(bit_equal(a.at(l), c.at(l)));
  }
}

TEST(Extractor, HeInitialization) {
  const SurrogateExtractor ext(3);
  const Tensor& w = ext.weights(DType::f64)[2];  // 16 -> 32 channels
  double ss = 0;
  for (double v : w.to_vector()) ss += v * v;
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(w.numel())), std::sqrt(2.0 / (16 * 9)), 0.01);
}

TEST(Extractor, Frozen) {
  const SurrogateExtractor ext(1);
  Tensor img = random_image({3, 32, 32}, 1).set_requires_grad(true);
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    const FeaturePyramid p = ext(img);
    loss = add(testing::weighted_sum(p.at(0)), testing::weighted_sum(p.at(4)));
  }
  const Gradients g = tape.backward(loss);
  for (DType dt : {DType::f32, DType::f64}) {
    for (const Tensor& w : ext.weights(dt)) {
      EXPECT_FALSE(w.requires_grad());
      EXPECT_FALSE(g.of(w).defined());
    }
  }
  EXPECT_GT(norm(g.of(img)), 0.0);
}

TEST(Align, Cases) {
  const Tensor a = random_tensor({16, 8, 8}, 1), b = random_tensor({16, 8, 8}, 2);
  EXPECT_EQ(l_align(a, a).item(), 0.0);
  EXPECT_DOUBLE_EQ(l_align(Tensor::ones({16, 8, 8}), Tensor::zeros({16, 8, 8})).item(), 1.0);
  EXPECT_NEAR(l_align(a, b).item(), brute_mean_abs(a, b), 1e-6);
  EXPECT_THROW(l_align(a, random_tensor({16, 4, 4}, 3)), ShapeError);
}

TEST(Match, ZeroAtTargetAndMatchesOracle) {
  const SurrogateExtractor ext(2);
  const Tensor x = random_image({3, 32, 32}, 1), y = random_image({3, 32, 32}, 2);
  const std::vector<double> mu(5, 0.2);
  EXPECT_EQ(l_match(ext, x, x, mu).item(), 0.0);
  const FeaturePyramid px = ext(x), py = ext(y);
  double oracle = 0;
  for (int l = 0; l < 5; ++l) oracle += brute_mean_abs(px.at(l), py.at(l)) / 5.0;
  EXPECT_NEAR(l_match(ext, x, y, mu).item(), oracle, 1e-6);
  EXPECT_THROW(l_match(ext, x, y, {0.5, 0.5}), ConfigError);
}

TEST(Perc, ZeroHomogeneousAndMatchesOracle) {
  const SurrogateExtractor ext(2);
  const Tensor x = random_image({3, 32, 32}, 1), y = random_image({3, 32, 32}, 2);
  EXPECT_EQ(l_perc(ext, x, x).item(), 0.0);
  const FeaturePyramid px = ext(x), py = ext(y);
  const Tensor& a = px.at(4);
  const Tensor& b = py.at(4);
  double ss = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) ss += (a.at(i) - b.at(i)) * (a.at(i) - b.at(i));
  EXPECT_NEAR(l_perc(px, py).item(), std::sqrt(ss / static_cast<double>(a.numel())), 1e-6);

  // Scaling the deepest-stage difference by alpha scales the loss by alpha.
  FeaturePyramid scaled = py;
  scaled.levels[4].second = add(a, mul_scalar(sub(b, a), 3.0));
  EXPECT_NEAR(l_perc(px, scaled).item(), 3.0 * l_perc(px, py).item(), 1e-5);
}

TEST(MatchPerc, SinglePixelPerturbationIsPositive) {
  DTypeScope scope(DType::f64);
  const SurrogateExtractor ext(2);
  const Tensor x = random_image({3, 32, 32}, 1);
  for (std::size_t at : {0ul, 1000ul, 3071ul}) {
    Tensor y = x.clone();
    y.set(at, y.at(at) + 1e-3);
    EXPECT_GT(l_match(ext, y, x, std::vector<double>(5, 0.2)).item(), 0.0);
    EXPECT_GT(l_perc(ext, y, x).item(), 0.0);
  }
}

TEST(Cx, SinglePairIsOne) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    EXPECT_NEAR(cx_similarity(random_tensor({1, 8}, seed), random_tensor({1, 8}, seed + 50)).item(), 1.0, 1e-7);
  }
}

TEST(Cx, MatchesPlainLoopOracle) {
  DTypeScope scope(DType::f64);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Tensor x = random_tensor({7, 5}, seed), y = random_tensor({9, 5}, seed + 100);
    EXPECT_NEAR(cx_similarity(x, y).item(), brute_cx(rows(x), rows(y), 0.5, 1e-5), 1e-12);
    EXPECT_NEAR(cx_similarity(x, y, {0.2, 1e-3}).item(), brute_cx(rows(x), rows(y), 0.2, 1e-3), 1e-12);
  }
}

TEST(Cx, ScaleInvariant) {
  const Tensor x = random_tensor({12, 6}, 1), y = random_tensor({10, 6}, 2);
  EXPECT_NEAR(cx_similarity(mul_scalar(x, 7.5), mul_scalar(y, 7.5)).item(), cx_similarity(x, y).item(), 1e-5);
}

TEST(Cx, SelfBeatsIndependentSets) {
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Tensor x = random_tensor({32, 8}, seed);
    const Tensor y = random_tensor({32, 8}, seed + 1000);
    wins += cx_similarity(x, x).item() > cx_similarity(x, y).item();
  }
  EXPECT_EQ(wins, 20);
}

TEST(Cx, BatchedMatchesPerElement) {
  const Tensor x1 = random_tensor({6, 4}, 1), x2 = random_tensor({6, 4}, 2);
  const Tensor y1 = random_tensor({5, 4}, 3), y2 = random_tensor({5, 4}, 4);
  const Tensor b = cx_similarity(testing::stack({x1, x2}), testing::stack({y1, y2}));
  ASSERT_EQ(b.shape(), (Shape{2}));
  EXPECT_NEAR(b.at(0), cx_similarity(x1, y1).item(), 1e-6);
  EXPECT_NEAR(b.at(1), cx_similarity(x2, y2).item(), 1e-6);
  EXPECT_THROW(cx_similarity(x1, random_tensor({5, 3}, 1)), ShapeError);
}

TEST(ContextualLoss, RangeSelfAndWeighting) {
  const SurrogateExtractor ext(4);
  const Tensor y = random_image({3, 32, 32}, 1), other = random_image({3, 32, 32}, 2);
  const std::vector<double> omega{0.5, 0.5};
  const double self = l_cx(ext, y, y, omega).item();
  const double unrelated = l_cx(ext, other, y, omega).item();
  EXPECT_GE(self, 0.0);
  EXPECT_GE(unrelated, 0.0);
  EXPECT_LT(self, unrelated);
  const FeaturePyramid po = ext(other), py = ext(y);
  const double s0 = -std::log(cx_similarity(feature_set(po.at(0)), feature_set(py.at(0))).item());
  const double s1 = -std::log(cx_similarity(feature_set(po.at(1)), feature_set(py.at(1))).item());
  EXPECT_NEAR(unrelated, 0.5 * (s0 + s1), 1e-5);
}

TEST(Hinge, Cases) {
  const Tensor ones = Tensor::ones({1, 4, 4});
  EXPECT_EQ(hinge_d(ones, mul_scalar(ones, -1.0)).item(), 0.0);
  EXPECT_EQ(hinge_d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 4, 4})).item(), 2.0);
  const Tensor low = random_tensor({1, 4, 4}, 1);
  EXPECT_LT(hinge_g(add_scalar(low, 0.5)).item(), hinge_g(low).item());
}

TEST(Hinge, ZeroFinalDiscriminatorLayerGivesTwo) {
  TranslationModel m(ArchConfig::desk(), 1);
  m.materialize();
  m.params().replace("disc.out.weight", Tensor::zeros(m.params().get("disc.out.weight").shape()));
  EXPECT_EQ(l_adv_d(m, random_image({3, 32, 32}, 1), random_image({3, 32, 32}, 2)).item(), 2.0);
}

PseudoTuple micro_batch(std::uint64_t seed, int n = 1) {
  PseudoTuple b;
  const Shape s = n == 1 ? Shape{3, 32, 32} : Shape{n, 3, 32, 32};
  b.x_a = random_image(s, seed);
  b.x_b = random_image(s, seed + 1);
  b.x_tilde_b = random_image(s, seed + 2);
  return b;
}

TEST(TotalLoss, DefaultWeights) {
  const LossWeights w;
  EXPECT_EQ(w.align, 10.0);
  EXPECT_EQ(w.match, 10.0);
  EXPECT_EQ(w.perc, 0.001);
  EXPECT_EQ(w.cx, 10.0);
  EXPECT_EQ(w.adv, 10.0);
  LossWeights bad;
  bad.cx = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(TotalLoss, AlignOnlyWeighting) {
  TranslationModel m(ArchConfig::desk(), 1);
  const SurrogateExtractor ext(1);
  LossWeights w;
  w.match = w.perc = w.cx = w.adv = 0.0;
  const PseudoTuple b = micro_batch(3);
  const TotalLoss t = total_loss(m, ext, b, w);
  EXPECT_EQ(t.g.generator.item(), mul_scalar(t.g.align, 10.0).item());
  EXPECT_DOUBLE_EQ(t.g.align.item(), l_align(m, b.x_a, b.x_b).item());
  EXPECT_EQ(t.d.item(), 0.0);
  for (const Tensor* term : {&t.g.align, &t.g.match, &t.g.perc, &t.g.cx}) EXPECT_GE(term->item(), 0.0);
  EXPECT_TRUE(std::isfinite(t.g.adv_g.item()));
}

TEST(TotalLoss, TermsTouchOnlyTheirParameters) {
  TranslationModel m(ArchConfig::desk(), 1);
  m.materialize();
  const PseudoTuple b = micro_batch(5);
  {
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = l_align(m, b.x_a, b.x_b);
    }
    const Gradients g = tape.backward(loss);
    for (const std::string& n : m.params().names()) {
      const bool encoder = n.rfind("enc_a.", 0) == 0 || n.rfind("enc_b.", 0) == 0;
      if (!encoder) {
        EXPECT_EQ(norm(g.of(m.params().get(n))), 0.0) << n;
      }
    }
  }
  {
    const Tensor fake = translate(m, b.x_a, b.x_tilde_b);
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = discriminator_loss(m, b, fake, LossWeights{});
    }
    const Gradients g = tape.backward(loss);
    for (const std::string& n : m.params().names()) {
      const double gn = norm(g.of(m.params().get(n)));
      if (n.rfind("disc.", 0) == 0) {
        EXPECT_GT(gn, 0.0) << n;
      } else {
        EXPECT_EQ(gn, 0.0) << n;
      }
    }
  }
}

TEST(TotalLoss, DiscriminatorSideSeesDetachedFake) {
  TranslationModel m(ArchConfig::desk(), 1);
  m.materialize();
  const SurrogateExtractor ext(1);
  Tape tape;
  TotalLoss t;
  {
    TapeScope scope(tape);
    t = total_loss(m, ext, micro_batch(2), LossWeights{});
  }
  const Gradients g = tape.backward(t.d);
  for (const std::string& n : m.generator_params()) EXPECT_EQ(norm(g.of(m.params().get(n))), 0.0) << n;
}

TEST(TotalLoss, NonFiniteInputNamesTheTerm) {
  TranslationModel m(ArchConfig::desk(), 1);
  const SurrogateExtractor ext(1);
  PseudoTuple b = micro_batch(1);
  b.x_b.set(5, std::numeric_limits<double>::quiet_NaN());
  try {
    (void)total_loss(m, ext, b, LossWeights{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'align'"), std::string::npos) << e.what();
  }
}

TEST(TotalLoss, BatchedRuns) {
  TranslationModel m(ArchConfig::desk(), 1);
  const SurrogateExtractor ext(1);
  const TotalLoss t = total_loss(m, ext, micro_batch(1, 2), LossWeights{});
  EXPECT_EQ(t.g.output.shape(), (Shape{2, 3, 32, 32}));
  EXPECT_TRUE(std::isfinite(t.g.generator.item()));
  EXPECT_TRUE(std::isfinite(t.d.item()));
}

// Both sides of the objective on the micro model, against finite differences
// over every parameter.
void expect_total_loss_gradients(DType dt, bool generator_side) {
  DTypeScope scope(dt);
  TranslationModel m(ArchConfig::micro(), 11);
  m.materialize();
  testing::perturb_params(m.params(), 12, 0.05);
  const SurrogateExtractor ext(13);
  const PseudoTuple b = micro_batch(21);
  const Tensor fake = translate(m, b.x_a, b.x_tilde_b);
  const auto loss = [&](nn::ParamStore&) {
    // The 64-bit reference pass runs with a 64-bit default width.
    const DType w = default_dtype();
    const PseudoTuple bw{b.x_a.as(w), b.x_tilde_b.as(w), b.x_b.as(w), Tensor()};
    if (generator_side) return generator_loss(m, ext, bw, LossWeights{}).generator;
    return discriminator_loss(m, bw, fake.as(w), LossWeights{});
  };
  const auto names = generator_side ? m.generator_params() : m.discriminator_params();
  GradCheckOptions opts = dt == DType::f32 ? testing::f32_check() : testing::f64_check();
  opts.max_coords = 4;  // per parameter tensor, seeded subset
  opts.kink_refinements = 2;
  const GradCheckReport r = nn::grad_check_params(m.params(), names, loss, opts);
  EXPECT_TRUE(r.pass) << r.summary();
}

TEST(TotalLoss, GeneratorSideGradientCheck64) { expect_total_loss_gradients(DType::f64, true); }
TEST(TotalLoss, DiscriminatorSideGradientCheck64) { expect_total_loss_gradients(DType::f64, false); }

void expect_cx_gradients(DType dt) {
  DTypeScope scope(dt);
  const Tensor x = random_tensor({6, 5}, 1), y = random_tensor({7, 5}, 2);
  const auto f = [](std::span<const Tensor> in) { return mul_scalar(log(cx_similarity(in[0], in[1])), -1.0); };
  const GradCheckReport r =
      grad_check(f, std::vector<Tensor>{x, y}, dt == DType::f32 ? testing::f32_check() : testing::f64_check());
  EXPECT_TRUE(r.pass) << r.summary();
}

TEST(Cx, GradientCheck32) { expect_cx_gradients(DType::f32); }
TEST(Cx, GradientCheck64) { expect_cx_gradients(DType::f64); }

}  // namespace
}  // namespace cfftgan::loss
