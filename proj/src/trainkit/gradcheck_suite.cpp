#include "cfftgan/trainkit/gradcheck_suite.hpp"

#include "cfftgan/fusion/cfft.hpp"
#include "cfftgan/losses/losses.hpp"
#include "cfftgan/nnblocks/layers.hpp"
#include "cfftgan/numcore/grad_cases.hpp"
#include "cfftgan/translation/model.hpp"

namespace cfftgan::train {

namespace {

using num::DType;
using num::GradCheckOptions;
using num::GradCheckReport;
using num::Rng;
using num::Shape;
using num::Tensor;
using nn::ParamStore;

using Layer = std::function<Tensor(ParamStore&, const Tensor&)>;

GradCheckOptions options_for(DType dt) {
  return dt == DType::f32 ? GradCheckOptions::single_precision() : GradCheckOptions::double_precision();
}

void perturb(ParamStore& store, std::uint64_t seed, double scale, const std::string& skip = "") {
  for (const std::string& n : store.names()) {
    if (n == skip) continue;
    Tensor p = store.get(n);
    Rng rng(seed, std::hash<std::string>{}(n));
    for (std::size_t i = 0; i < p.numel(); ++i) p.set(i, p.at(i) + scale * rng.normal());
  }
}

GradCheckReport check_layer(const Layer& layer, const Shape& in_shape, DType dt, std::uint64_t seed = 3) {
  num::DTypeScope scope(dt);
  ParamStore store(seed);
  store.get_or_create("x", in_shape, nn::Init::zeros());
  Rng rng(seed + 1);
  store.replace("x", Tensor::randn(in_shape, rng, 1.0));
  const auto loss = [&](ParamStore& s) { return num::weighted_sum(layer(s, s.get("x")), 99); };
  (void)loss(store);
  perturb(store, seed, 0.1, "x");
  return nn::grad_check_params(store, store.names(), loss, options_for(dt));
}

std::vector<std::pair<std::string, std::pair<Layer, Shape>>> layer_cases() {
  using namespace nn;
  return {
      {"linear", {[](ParamStore& s, const Tensor& x) { return linear(s, "fc", x, 4); }, {3, 5}}},
      {"layer_norm", {[](ParamStore& s, const Tensor& x) { return layer_norm(s, "ln", x); }, {3, 6}}},
      {"gelu", {[](ParamStore&, const Tensor& x) { return gelu(x); }, {4, 5}}},
      {"multi_head_attention",
       {[](ParamStore& s, const Tensor& x) {
          return multi_head_attention(s, "mha", x, TransformerEncoderConfig::make(1, 8, 2));
        },
        {2, 5, 8}}},
      {"transformer_encoder",
       {[](ParamStore& s, const Tensor& x) {
          return transformer_encoder(s, "te", num::add(x, positional_embedding(s, "pos", 4, 8)),
                                     TransformerEncoderConfig::make(2, 8, 4));
        },
        {4, 8}}},
      {"conv2d", {[](ParamStore& s, const Tensor& x) { return conv2d(s, "conv", x, 3, 3, 1, 1); }, {2, 2, 5, 5}}},
      {"instance_norm", {[](ParamStore&, const Tensor& x) { return instance_norm(x); }, {2, 3, 4, 4}}},
      {"conv_block_k3s1",
       {[](ParamStore& s, const Tensor& x) { return conv_block(s, "cb", x, ConvSpec::k3s1, 3); }, {2, 4, 4}}},
      {"conv_block_k4s2",
       {[](ParamStore& s, const Tensor& x) { return conv_block(s, "cb", x, ConvSpec::k4s2, 3); }, {2, 2, 6, 6}}},
      {"res_block", {[](ParamStore& s, const Tensor& x) { return res_block(s, "rb", x, 3); }, {2, 4, 4}}},
  };
}

GradCheckReport check_cfft(DType dt) {
  num::DTypeScope scope(dt);
  ParamStore store(7);
  const fusion::CfftConfig cfg = fusion::CfftConfig::micro();
  store.get_or_create("in.x", {cfg.channels, cfg.height, cfg.width}, nn::Init::normal(1.0));
  store.get_or_create("in.y", {cfg.channels, cfg.height, cfg.width}, nn::Init::normal(1.0));
  const auto loss = [&](ParamStore& s) {
    return num::weighted_sum(fusion::cfft_forward(s, "cfft", s.get("in.x"), s.get("in.y"), cfg), 99);
  };
  (void)loss(store);
  perturb(store, 11, 0.1);
  return nn::grad_check_params(store, store.names(), loss, options_for(dt));
}

GradCheckReport check_spade(DType dt) {
  num::DTypeScope scope(dt);
  ParamStore store(3);
  store.get_or_create("in.f", {3, 8, 8}, nn::Init::normal(1.0));
  store.get_or_create("in.w", {5, 4, 4}, nn::Init::normal(1.0));
  const auto loss = [](ParamStore& s) {
    return num::weighted_sum(model::spade_modulate(s, "sp", s.get("in.f"), s.get("in.w"), 4), 99);
  };
  (void)loss(store);
  perturb(store, 5, 0.1);
  return nn::grad_check_params(store, store.names(), loss, options_for(dt));
}

GradCheckReport check_total_loss(bool generator_side) {
  num::DTypeScope scope(DType::f64);
  model::TranslationModel m(model::ArchConfig::micro(), 11);
  m.materialize();
  perturb(m.params(), 12, 0.05);
  const loss::SurrogateExtractor ext(13);
  const int s = m.arch().image_size;
  const auto image = [s](std::uint64_t seed) {
    Rng rng(seed);
    return Tensor::uniform({3, s, s}, rng, -1.0, 1.0);
  };
  const loss::PseudoTuple b{image(21), image(23), image(22), Tensor(), {}, {}};
  const Tensor fake = model::translate(m, b.x_a, b.x_tilde_b);
  const auto loss = [&](ParamStore&) {
    if (generator_side) return loss::generator_loss(m, ext, b, loss::LossWeights{}).generator;
    return loss::discriminator_loss(m, b, fake, loss::LossWeights{});
  };
  GradCheckOptions opts = GradCheckOptions::double_precision();
  opts.max_coords = 4;
  opts.kink_refinements = 2;
  return nn::grad_check_params(m.params(), generator_side ? m.generator_params() : m.discriminator_params(), loss,
                               opts);
}

}  // namespace

std::string format_entry(const GradCheckEntry& e) {
  return std::string(e.pass ? "PASS " : "FAIL ") + e.name + " " + num::to_string(e.dtype) + " " + e.summary;
}

std::vector<GradCheckEntry> run_gradcheck_suite(const GradCheckSuiteOptions& o,
                                                const std::function<void(const GradCheckEntry&)>& on_entry) {
  std::vector<GradCheckEntry> out;
  const auto record = [&](const std::string& name, DType dt, const GradCheckReport& r) {
    out.push_back({name, dt, r.pass, r.summary()});
    if (on_entry) on_entry(out.back());
  };
  const DType widths[] = {DType::f32, DType::f64};
  if (o.primitives) {
    for (const num::PrimitiveCase& pc : num::primitive_cases()) {
      for (DType dt : widths) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
          record("primitive/" + pc.op + "#" + std::to_string(seed), dt,
                 num::check_primitive_case(pc, dt, options_for(dt), seed));
        }
      }
    }
  }
  if (o.layers) {
    for (const auto& [name, c] : layer_cases()) {
      for (DType dt : widths) record("layer/" + name, dt, check_layer(c.first, c.second, dt));
    }
  }
  if (o.fusion) {
    for (DType dt : widths) record("fusion/cfft_micro", dt, check_cfft(dt));
    for (DType dt : widths) record("translation/spade_modulate", dt, check_spade(dt));
  }
  if (o.total_loss) {
    record("loss/generator_side_micro", DType::f64, check_total_loss(true));
    record("loss/discriminator_side_micro", DType::f64, check_total_loss(false));
  }
  return out;
}

}  // namespace cfftgan::train
