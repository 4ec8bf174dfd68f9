#include <gtest/gtest.h>

#include "cfftgan/numcore/tape.hpp"
#include "cfftgan/translation/model.hpp"
#include "param_util.hpp"
#include "test_util.hpp"

namespace cfftgan::model {
namespace {

using namespace cfftgan::num;
using testing::bit_equal;
using testing::max_abs_diff;
using testing::random_tensor;
using testing::weighted_sum;

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

TEST(ArchConfig, PresetsValidate) {
  EXPECT_NO_THROW(ArchConfig::desk().validate());
  EXPECT_NO_THROW(ArchConfig::large().validate());
  EXPECT_NO_THROW(ArchConfig::micro().validate());
  EXPECT_EQ(ArchConfig::desk().score_size(), 4);
  EXPECT_EQ(ArchConfig::large().feature_shape(), (Shape{64, 64, 64}));
}

TEST(ArchConfig, LargeEncoderSchedule) {
  const ArchConfig a = ArchConfig::large();
  int downs = 0;
  std::vector<int> res;
  for (const EncoderStage& s : a.encoder) {
    downs += s.kind == EncoderStage::Kind::k4s2;
    if (s.kind == EncoderStage::Kind::res) res.push_back(s.channels);
  }
  EXPECT_EQ(downs, 3);
  EXPECT_EQ(res, (std::vector<int>{512, 256, 64}));
  EXPECT_EQ(a.generator_start, 16);
  EXPECT_EQ(a.generator_start_channels, 1024);
  EXPECT_EQ(a.generator.back().channels, 64);
}

TEST(ArchConfig, InconsistentSchedulesRejected) {
  ArchConfig a = ArchConfig::desk();
  a.encoder.pop_back();
  EXPECT_THROW(a.validate(), ConfigError);
  a = ArchConfig::desk();
  a.generator.back().upsample = true;
  EXPECT_THROW(a.validate(), ConfigError);
  a = ArchConfig::desk();
  a.domains = 4;
  EXPECT_THROW(a.validate(), ConfigError);
  a = ArchConfig::desk();
  a.discriminator = {};
  EXPECT_THROW(TranslationModel(a, 1), ConfigError);
}

TEST(LargeScale, ModelConstructs) {
  TranslationModel m(ArchConfig::large(), 1);
  EXPECT_EQ(m.arch().image_size, 512);
}

TEST(Encode, DeskShape) {
  TranslationModel m(ArchConfig::desk(), 1);
  EXPECT_EQ(encode(m, random_image({3, 32, 32}, 1), Domain::A).shape(), (Shape{16, 8, 8}));
  EXPECT_EQ(encode(m, random_image({2, 3, 32, 32}, 1), Domain::B).shape(), (Shape{2, 16, 8, 8}));
  EXPECT_THROW(encode(m, random_image({3, 16, 16}, 1), Domain::A), ShapeError);
  EXPECT_THROW(encode(m, random_image({1, 32, 32}, 1), Domain::A), ShapeError);
}

TEST(Encode, EncodersHaveSameArchitectureAndIndependentWeights) {
  TranslationModel m(ArchConfig::desk(), 1);
  m.materialize();
  const ParamStore& p = m.params();
  const auto a = p.names_with_prefix("enc_a.");
  const auto b = p.names_with_prefix("enc_b.");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].substr(5), b[i].substr(5));
    EXPECT_EQ(p.get(a[i]).shape(), p.get(b[i]).shape());
  }
  EXPECT_FALSE(bit_equal(p.get("enc_a.s0.conv.weight"), p.get("enc_b.s0.conv.weight")));
}

TEST(Encode, UsesOnlyItsOwnEncoder) {
  TranslationModel m(ArchConfig::desk(), 1);
  m.materialize();
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = weighted_sum(encode(m, random_image({3, 32, 32}, 2), Domain::A));
  }
  const Gradients g = tape.backward(loss);
  double a = 0;
  for (const std::string& n : m.params().names()) {
    const double gn = norm(g.of(m.params().get(n)));
    if (n.rfind("enc_a.", 0) == 0) {
      a += gn;
    } else {
      EXPECT_EQ(gn, 0.0) << n;
    }
  }
  EXPECT_GT(a, 0.0);
}

TEST(Spade, IdentityModulationNormalizes) {
  ParamStore store(1);
  const Tensor f = mul_scalar(add_scalar(random_tensor({6, 8, 8}, 1), 3.0), 5.0);
  const Tensor w = random_tensor({5, 4, 4}, 2);
  (void)spade_modulate(store, "sp", f, w, 8);
  store.replace("sp.gamma.weight", Tensor::zeros(store.get("sp.gamma.weight").shape()));
  store.replace("sp.beta.weight", Tensor::zeros(store.get("sp.beta.weight").shape()));
  const Tensor out = spade_modulate(store, "sp", f, w, 8);
  EXPECT_EQ(out.shape(), f.shape());
  const Tensor mu = mean(out, {1, 2});
  const Tensor sd = sqrt(var(out, {1, 2}));
  for (int c = 0; c < 6; ++c) {
    EXPECT_NEAR(mu.at(static_cast<std::size_t>(c)), 0.0, 1e-4);
    EXPECT_NEAR(sd.at(static_cast<std::size_t>(c)), 1.0, 1e-4);
  }
}

TEST(Spade, RecoveredNormalizedFeatureHasZeroMean) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    ParamStore store(seed);
    const Tensor f = random_tensor({4, 16, 16}, seed + 10);
    const Tensor w = random_tensor({7, 8, 8}, seed + 20);
    (void)spade_modulate(store, "sp", f, w, 6);
    testing::perturb_params(store, seed, 0.5);
    const Tensor out = spade_modulate(store, "sp", f, w, 6);
    const Tensor shared = relu(nn::conv2d(store, "sp.shared", resize_bilinear(w, 16, 16), 6, 3, 1, 1));
    const Tensor gamma = nn::conv2d(store, "sp.gamma", shared, 4, 3, 1, 1);
    const Tensor beta = nn::conv2d(store, "sp.beta", shared, 4, 3, 1, 1);
    const Tensor recovered = div(sub(out, beta), gamma);
    const Tensor normalized = nn::instance_norm(f);
    for (int c = 0; c < 4; ++c) {
      // Per-channel mean of the recovered feature over positions where gamma
      // is not vanishing; the normalized feature has zero mean over all of
      // them, so the excluded positions are added back from it.
      double s = 0;
      for (int i = 0; i < 256; ++i) {
        const std::size_t at = static_cast<std::size_t>(c * 256 + i);
        s += std::abs(gamma.at(at)) > 1e-3 ? recovered.at(at) : normalized.at(at);
      }
      EXPECT_NEAR(s / 256, 0.0, 1e-4);
    }
  }
}

void expect_spade_gradients(DType dt) {
  DTypeScope scope(dt);
  ParamStore store(3);
  store.get_or_create("in.f", {3, 8, 8}, nn::Init::normal(1.0));
  store.get_or_create("in.w", {5, 4, 4}, nn::Init::normal(1.0));
  const auto loss = [](ParamStore& s) { return weighted_sum(spade_modulate(s, "sp", s.get("in.f"), s.get("in.w"), 4)); };
  (void)loss(store);
  testing::perturb_params(store, 5);
  const GradCheckOptions opts = dt == DType::f32 ? testing::f32_check() : testing::f64_check();
  const GradCheckReport r = nn::grad_check_params(store, store.names(), loss, opts);
  EXPECT_TRUE(r.pass) << r.summary();
}

TEST(Spade, GradientCheck32) { expect_spade_gradients(DType::f32); }
TEST(Spade, GradientCheck64) { expect_spade_gradients(DType::f64); }

TEST(Generate, ShapeAndRange) {
  TranslationModel m(ArchConfig::desk(), 1);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Tensor f = mul_scalar(random_tensor({16, 8, 8}, seed), 4.0);
    const Tensor out = generate(m, f, random_image({3, 32, 32}, seed + 5));
    EXPECT_EQ(out.shape(), (Shape{3, 32, 32}));
    for (double v : out.to_vector()) {
      EXPECT_GT(v, -1.0);
      EXPECT_LT(v, 1.0);
    }
  }
  EXPECT_THROW(generate(m, random_tensor({8, 8, 8}, 1), random_image({3, 32, 32}, 1)), ShapeError);
}

TEST(Generate, ConditioningChangesOutput) {
  TranslationModel m(ArchConfig::desk(), 2);
  const Tensor x = random_image({3, 32, 32}, 1);
  const Tensor a = generate(m, random_tensor({16, 8, 8}, 1), x);
  const Tensor b = generate(m, random_tensor({16, 8, 8}, 2), x);
  EXPECT_GT(max_abs_diff(a, b), 1e-4);
}

TEST(Discriminate, DeskScoreMap) {
  TranslationModel m(ArchConfig::desk(), 1);
  EXPECT_EQ(discriminate(m, random_image({3, 32, 32}, 1)).shape(), (Shape{1, 4, 4}));
  EXPECT_EQ(discriminate(m, random_image({2, 3, 32, 32}, 1)).shape(), (Shape{2, 1, 4, 4}));
  EXPECT_THROW(discriminate(m, random_image({3, 24, 24}, 1)), ShapeError);
}

TEST(Discriminate, ZeroFinalLayerGivesZeroScores) {
  TranslationModel m(ArchConfig::desk(), 1);
  (void)discriminate(m, random_image({3, 32, 32}, 1));
  m.params().replace("disc.out.weight", Tensor::zeros(m.params().get("disc.out.weight").shape()));
  const Tensor s = discriminate(m, random_image({3, 32, 32}, 2));
  for (double v : s.to_vector()) EXPECT_EQ(v, 0.0);
}

TEST(Discriminate, ShiftEquivariantOnInteriorCells) {
  // A blob on a flat background, far from the borders, shifted by 8 px moves
  // the scores by exactly one cell.
  ArchConfig a = ArchConfig::desk();
  a.image_size = 96;
  a.fusion.height = a.fusion.width = 24;
  a.generator_start = 24;
  TranslationModel m(a, 3);
  const int s = 96;
  Tensor img1 = Tensor::full({3, s, s}, -1.0), img2 = Tensor::full({3, s, s}, -1.0);
  Rng rng(9);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const double v = rng.uniform(-1, 1);
        img1.set(static_cast<std::size_t>((c * s + 40 + y) * s + 40 + x), v);
        img2.set(static_cast<std::size_t>((c * s + 48 + y) * s + 48 + x), v);
      }
  const Tensor s1 = discriminate(m, img1), s2 = discriminate(m, img2);
  ASSERT_EQ(s1.shape(), (Shape{1, 12, 12}));
  double worst = 0;
  for (int i = 3; i < 8; ++i)
    for (int j = 3; j < 8; ++j) {
      worst = std::max(worst, std::abs(s1.at(static_cast<std::size_t>(i * 12 + j)) -
                                       s2.at(static_cast<std::size_t>((i + 1) * 12 + j + 1))));
    }
  EXPECT_LT(worst, 1e-5);
  EXPECT_GT(max_abs_diff(s1, s2), 1e-3);
}

TEST(Translate, ShapeAndDeterminism) {
  TranslationModel m(ArchConfig::desk(), 1);
  const Tensor x = random_image({3, 32, 32}, 1), y = random_image({3, 32, 32}, 2);
  const Tensor a = translate(m, x, y);
  EXPECT_EQ(a.shape(), (Shape{3, 32, 32}));
  EXPECT_TRUE(bit_equal(a, translate(m, x, y)));
  EXPECT_FALSE(a.requires_grad());
}

TEST(Translate, BatchMatchesSingle) {
  TranslationModel m(ArchConfig::desk(), 1);
  const Tensor x1 = random_image({3, 32, 32}, 1), y1 = random_image({3, 32, 32}, 2);
  const Tensor x2 = random_image({3, 32, 32}, 3), y2 = random_image({3, 32, 32}, 4);
  const Tensor joint = translate(m, testing::stack({x1, x2}), testing::stack({y1, y2}));
  EXPECT_LT(max_abs_diff(reshape(slice(joint, 0, 1, 1), {3, 32, 32}), translate(m, x2, y2)), 1e-5);
}

TEST(Translate, BackwardReachesEveryGeneratorSideParameter) {
  TranslationModel m(ArchConfig::desk(), 1);
  m.materialize();
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = weighted_sum(forward(m, random_image({3, 32, 32}, 1), random_image({3, 32, 32}, 2)).output);
  }
  const Gradients g = tape.backward(loss);
  for (const std::string& n : m.generator_params()) EXPECT_GT(norm(g.of(m.params().get(n))), 0.0) << n;
  for (const std::string& n : m.discriminator_params()) EXPECT_EQ(norm(g.of(m.params().get(n))), 0.0) << n;
}

TEST(Translate, ThirdDomainUsesCascade) {
  ArchConfig a = ArchConfig::desk();
  a.domains = 3;
  TranslationModel m(a, 1);
  const Tensor x = random_image({3, 32, 32}, 1);
  EXPECT_THROW(translate(m, x, x), ConfigError);
  EXPECT_EQ(translate(m, x, x, x).shape(), (Shape{3, 32, 32}));
  EXPECT_FALSE(m.params().names_with_prefix("enc_c.").empty());
  EXPECT_FALSE(m.params().names_with_prefix("cfft1.").empty());
  TranslationModel two(ArchConfig::desk(), 1);
  EXPECT_THROW(translate(two, x, x, x), ConfigError);
}

TEST(Model, ParameterGroupsPartitionStore) {
  TranslationModel m(ArchConfig::desk(), 1);
  m.materialize();
  const auto g = m.generator_params(), d = m.discriminator_params();
  EXPECT_EQ(g.size() + d.size(), m.params().size());
  EXPECT_FALSE(d.empty());
  for (const char* prefix : {"enc_a.", "enc_b.", "cfft0.", "gen."}) {
    EXPECT_FALSE(m.params().names_with_prefix(prefix).empty()) << prefix;
  }
  EXPECT_TRUE(m.params().names_with_prefix("enc_c.").empty());
}

TEST(Model, SameSeedSameParameters) {
  TranslationModel a(ArchConfig::desk(), 5), b(ArchConfig::desk(), 5);
  a.materialize();
  b.materialize();
  ASSERT_EQ(a.params().names(), b.params().names());
  for (const std::string& n : a.params().names()) EXPECT_TRUE(bit_equal(a.params().get(n), b.params().get(n)));
}

}  // namespace
}  // namespace cfftgan::model
