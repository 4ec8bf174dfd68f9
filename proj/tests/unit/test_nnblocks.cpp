#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "cfftgan/nnblocks/layers.hpp"
#include "test_util.hpp"

namespace cfftgan::nn {
namespace {

using namespace cfftgan::num;
using testing::bit_equal;
using testing::max_abs_diff;
using testing::random_tensor;
using testing::weighted_sum;

// Registers `value` as a checked input named "x" in the store.
Tensor add_input(ParamStore& store, const Tensor& value) {
  store.get_or_create("x", value.shape(), Init::zeros());
  store.replace("x", value);
  return store.get("x");
}

void expect_layer_gradients(const std::function<Tensor(ParamStore&, const Tensor&)>& layer, const Shape& in_shape,
                            std::uint64_t seed = 3) {
  for (DType dt : {DType::f32, DType::f64}) {
    DTypeScope scope(dt);
    ParamStore store(seed);
    add_input(store, random_tensor(in_shape, seed + 1));
    const auto loss = [&](ParamStore& s) { return weighted_sum(layer(s, s.get("x"))); };
    (void)loss(store);  // creates the parameters
    // Move every parameter away from its special initial value (zeros, ones).
    for (const std::string& n : store.names()) {
      if (n == "x") continue;
      Tensor p = store.get(n);
      Rng rng(seed, std::hash<std::string>{}(n));
      for (std::size_t i = 0; i < p.numel(); ++i) p.set(i, p.at(i) + 0.1 * rng.normal());
    }
    const GradCheckOptions opts = dt == DType::f32 ? testing::f32_check() : testing::f64_check();
    const GradCheckReport r = grad_check_params(store, store.names(), loss, opts);
    EXPECT_TRUE(r.pass) << to_string(dt) << ": " << r.summary();
  }
}

TEST(ParamStore, SameNameSameTensor) {
  ParamStore store(1);
  Tensor a = positional_embedding(store, "pos", 64, 32);
  Tensor b = positional_embedding(store, "pos", 64, 32);
  EXPECT_TRUE(a.same_storage(b));
  EXPECT_EQ(a.shape(), (Shape{64, 32}));
  EXPECT_EQ(store.size(), 1u);
  EXPECT_THROW(store.get_or_create("pos", {8, 8}, Init::zeros()), ShapeError);
}

TEST(ParamStore, InitDependsOnNameNotOrder) {
  ParamStore s1(5), s2(5);
  s1.get_or_create("a", {4}, Init::normal(1.0));
  Tensor b1 = s1.get_or_create("b", {4}, Init::normal(1.0));
  Tensor b2 = s2.get_or_create("b", {4}, Init::normal(1.0));
  EXPECT_TRUE(bit_equal(b1, b2));
  EXPECT_EQ(s1.names(), (std::vector<std::string>{"a", "b"}));
}

TEST(ParamStore, LargeScalePositionalTable) {
  ParamStore store(1);
  EXPECT_EQ(positional_embedding(store, "pos", 64 * 64, 2 * 64).shape(), (Shape{4096, 128}));
}

TEST(Linear, IdentityWeightIsIdentity) {
  ParamStore store(1);
  Tensor x = random_tensor({2, 3}, 1);
  (void)linear(store, "fc", x, 3);
  Tensor eye = Tensor::zeros({3, 3});
  for (int i = 0; i < 3; ++i) eye.set(static_cast<std::size_t>(i * 4), 1.0);
  store.replace("fc.weight", eye);
  EXPECT_TRUE(bit_equal(linear(store, "fc", x, 3), x));
}

TEST(Linear, ShapeRule) {
  ParamStore store(1);
  EXPECT_EQ(linear(store, "fc", random_tensor({2, 3}, 1), 5).shape(), (Shape{2, 5}));
  EXPECT_EQ(linear(store, "fc2", random_tensor({4, 2, 3}, 1), 5).shape(), (Shape{4, 2, 5}));
  EXPECT_THROW(linear(store, "fc", random_tensor({2, 4}, 1), 5), ShapeError);
}

TEST(LayerNorm, ConstantTokenGivesZeros) {
  ParamStore store(1);
  Tensor y = layer_norm(store, "ln", Tensor::full({2, 6}, 3.5));
  for (double v : y.to_vector()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, NormalizesLastAxis) {
  ParamStore store(1);
  Tensor x = mul_scalar(random_tensor({5, 16}, 2), 4.0);
  Tensor y = layer_norm(store, "ln", x);
  Tensor m = mean(y, {-1}), v = var(y, {-1});
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(m.at(i), 0.0, 1e-4);
    EXPECT_NEAR(v.at(i), 1.0, 1e-4);
  }
}

TEST(Attention, SingleTokenWeightIsOne) {
  ParamStore store(1);
  const auto cfg = TransformerEncoderConfig::make(1, 8, 4);
  Tensor x = random_tensor({1, 8}, 3);
  AttentionProbe probe;
  Tensor y = multi_head_attention(store, "mha", x, cfg, &probe);
  ASSERT_EQ(probe.weights.size(), 1u);
  for (double w : probe.weights[0].to_vector()) EXPECT_EQ(w, 1.0);
  Tensor expect = linear(store, "mha.out", linear(store, "mha.v", x, 8), 8);
  EXPECT_LT(max_abs_diff(y, expect), 1e-6);
}

TEST(Attention, RowsSumToOne) {
  ParamStore store(2);
  const auto cfg = TransformerEncoderConfig::make(1, 16, 4);
  AttentionProbe probe;
  (void)multi_head_attention(store, "mha", mul_scalar(random_tensor({3, 10, 16}, 4), 3.0), cfg, &probe);
  const Tensor w = probe.weights[0];
  ASSERT_EQ(w.shape(), (Shape{3, 4, 10, 10}));
  const Tensor rows = sum(w, {-1});
  for (double r : rows.to_vector()) EXPECT_NEAR(r, 1.0, 1e-5);
}

TEST(Attention, HeadsMustDivideDim) {
  ParamStore store(2);
  TransformerEncoderConfig cfg = TransformerEncoderConfig::make(1, 10, 4);
  EXPECT_THROW(multi_head_attention(store, "mha", random_tensor({3, 10}, 4), cfg), ConfigError);
}

TEST(TransformerEncoder, PermutationEquivariantWithEmbedding) {
  ParamStore store(3);
  const auto cfg = TransformerEncoderConfig::make(2, 8, 4);
  const Tensor tokens = random_tensor({6, 8}, 5);
  const Tensor pos = positional_embedding(store, "pos", 6, 8);
  const std::vector<int> perm{3, 0, 5, 1, 4, 2};
  const Tensor y = transformer_encoder(store, "te", add(tokens, pos), cfg);
  const Tensor yp = transformer_encoder(store, "te", add(gather(tokens, 0, perm), gather(pos, 0, perm)), cfg);
  EXPECT_LT(max_abs_diff(gather(y, 0, perm), yp), 1e-5);
}

TEST(TransformerEncoder, ShapePreservedAndZeroBranchesAreIdentity) {
  ParamStore store(3);
  const auto cfg = TransformerEncoderConfig::make(3, 16, 4);
  const Tensor x = random_tensor({7, 16}, 6);
  EXPECT_EQ(transformer_encoder(store, "te", x, cfg).shape(), x.shape());
  for (const std::string& n : store.names()) {
    if (n.find(".attn.out.") != std::string::npos || n.find(".fc2.") != std::string::npos) {
      store.replace(n, Tensor::zeros(store.get(n).shape()));
    }
  }
  EXPECT_TRUE(bit_equal(transformer_encoder(store, "te", x, cfg), x));
}

TEST(TransformerEncoder, DepthThreeHasThreeBlocks) {
  ParamStore store(3);
  (void)transformer_encoder(store, "te", random_tensor({4, 8}, 6), TransformerEncoderConfig::make(3, 8, 4));
  std::set<std::string> blocks;
  for (const std::string& n : store.names()) blocks.insert(n.substr(0, n.find('.', 3)));
  EXPECT_EQ(blocks, (std::set<std::string>{"te.block0", "te.block1", "te.block2"}));
}

TEST(TransformerEncoder, ParameterCountMatchesFormula) {
  for (auto cfg : {TransformerEncoderConfig::make(3, 32, 4), TransformerEncoderConfig::make(2, 16, 4),
                   TransformerEncoderConfig::make(1, 12, 3)}) {
    ParamStore store(1);
    (void)transformer_encoder(store, "te", random_tensor({3, cfg.dim}, 1), cfg);
    // Independent count: per block 2 norms, 4 square projections, 2-layer MLP.
    const std::size_t d = static_cast<std::size_t>(cfg.dim), m = 4 * d;
    const std::size_t expected = static_cast<std::size_t>(cfg.depth) * (4 * d + 4 * d * (d + 1) + d * m + m + m * d + d);
    EXPECT_EQ(store.parameter_count(), expected);
    EXPECT_EQ(transformer_encoder_parameter_count(cfg), expected);
  }
}

TEST(TransformerEncoder, BatchIndependence) {
  ParamStore store(3);
  const auto cfg = TransformerEncoderConfig::make(2, 8, 4);
  const Tensor a = random_tensor({5, 8}, 1), b = random_tensor({5, 8}, 2);
  const Tensor joint = transformer_encoder(store, "te", concat({reshape(a, {1, 5, 8}), reshape(b, {1, 5, 8})}, 0), cfg);
  EXPECT_LT(max_abs_diff(reshape(slice(joint, 0, 0, 1), {5, 8}), transformer_encoder(store, "te", a, cfg)), 1e-5);
  EXPECT_LT(max_abs_diff(reshape(slice(joint, 0, 1, 1), {5, 8}), transformer_encoder(store, "te", b, cfg)), 1e-5);
}

TEST(ConvBlock, ShapeRules) {
  ParamStore store(1);
  const Tensor x = random_tensor({8, 16, 16}, 1);
  EXPECT_EQ(conv_block(store, "a", x, ConvSpec::k3s1, 12).shape(), (Shape{12, 16, 16}));
  EXPECT_EQ(conv_block(store, "b", x, ConvSpec::k4s2, 5).shape(), (Shape{5, 8, 8}));
  EXPECT_THROW(conv_block(store, "c", random_tensor({8, 15, 16}, 1), ConvSpec::k4s2, 5), ShapeError);
}

TEST(ConvBlock, BatchIndependence) {
  ParamStore store(1);
  const Tensor a = random_tensor({3, 8, 8}, 1), b = random_tensor({3, 8, 8}, 2);
  const Tensor joint = res_block(store, "r", conv_block(store, "c", testing::stack({a, b}), ConvSpec::k4s2, 6), 4);
  const Tensor ya = res_block(store, "r", conv_block(store, "c", a, ConvSpec::k4s2, 6), 4);
  EXPECT_LT(max_abs_diff(reshape(slice(joint, 0, 0, 1), ya.shape()), ya), 1e-5);
}

TEST(InstanceNorm, PerChannelStatistics) {
  const Tensor y = instance_norm(mul_scalar(random_tensor({2, 3, 5, 5}, 1), 7.0));
  const Tensor m = mean(y, {-2, -1}), v = var(y, {-2, -1});
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(m.at(i), 0.0, 1e-5);
    EXPECT_NEAR(v.at(i), 1.0, 1e-3);
  }
}

// Gradient checks for every layer.

TEST(LayerGradients, Linear) {
  expect_layer_gradients([](ParamStore& s, const Tensor& x) { return linear(s, "fc", x, 4); }, {3, 5});
}
TEST(LayerGradients, LayerNorm) {
  expect_layer_gradients([](ParamStore& s, const Tensor& x) { return layer_norm(s, "ln", x); }, {3, 6});
}
TEST(LayerGradients, Gelu) {
  expect_layer_gradients([](ParamStore&, const Tensor& x) { return gelu(x); }, {4, 5});
}
TEST(LayerGradients, MultiHeadAttention) {
  expect_layer_gradients(
      [](ParamStore& s, const Tensor& x) {
        return multi_head_attention(s, "mha", x, TransformerEncoderConfig::make(1, 8, 2));
      },
      {2, 5, 8});
}
TEST(LayerGradients, TransformerEncoder) {
  expect_layer_gradients(
      [](ParamStore& s, const Tensor& x) {
        return transformer_encoder(s, "te", add(x, positional_embedding(s, "pos", 4, 8)),
                                   TransformerEncoderConfig::make(2, 8, 4));
      },
      {4, 8});
}
TEST(LayerGradients, Conv2d) {
  expect_layer_gradients([](ParamStore& s, const Tensor& x) { return conv2d(s, "conv", x, 3, 3, 1, 1); }, {2, 2, 5, 5});
}
TEST(LayerGradients, InstanceNorm) {
  expect_layer_gradients([](ParamStore&, const Tensor& x) { return instance_norm(x); }, {2, 3, 4, 4});
}
TEST(LayerGradients, ConvBlockK3S1) {
  expect_layer_gradients(
      [](ParamStore& s, const Tensor& x) { return conv_block(s, "cb", x, ConvSpec::k3s1, 3); }, {2, 4, 4});
}
TEST(LayerGradients, ConvBlockK4S2) {
  expect_layer_gradients(
      [](ParamStore& s, const Tensor& x) { return conv_block(s, "cb", x, ConvSpec::k4s2, 3); }, {2, 2, 6, 6});
}
TEST(LayerGradients, ResBlock) {
  expect_layer_gradients([](ParamStore& s, const Tensor& x) { return res_block(s, "rb", x, 3); }, {2, 4, 4});
}

}  // namespace
}  // namespace cfftgan::nn
