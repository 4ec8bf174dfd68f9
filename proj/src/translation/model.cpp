#include "cfftgan/translation/model.hpp"

#include "cfftgan/numcore/ops.hpp"
#include "cfftgan/numcore/tape.hpp"

namespace cfftgan::model {

using namespace cfftgan::num;

namespace {

std::string str(int v) { return std::to_string(v); }

}  // namespace

void ArchConfig::validate() const {
  fusion.validate();
  if (image_size < 1 || image_channels < 1) throw ConfigError("arch: image size and channels must be positive");
  if (domains != 2 && domains != 3) throw ConfigError("arch: domains must be 2 or 3, got " + str(domains));
  if (spade_hidden < 1) throw ConfigError("arch: spade_hidden must be positive");

  int size = image_size, channels = image_channels;
  for (const EncoderStage& s : encoder) {
    if (s.channels < 1) throw ConfigError("arch: encoder stage width must be positive");
    if (s.kind == EncoderStage::Kind::k4s2) {
      if (size % 2 != 0) throw ConfigError("arch: encoder k4s2 stage on odd size " + str(size));
      size /= 2;
    }
    channels = s.channels;
  }
  if (channels != fusion.channels || size != fusion.height || size != fusion.width) {
    throw ConfigError("arch: encoder maps (" + str(image_channels) + "," + str(image_size) + "," + str(image_size) +
                      ") to (" + str(channels) + "," + str(size) + "," + str(size) + "), expected (" +
                      str(fusion.channels) + "," + str(fusion.height) + "," + str(fusion.width) + ")");
  }

  if (generator_start < 1 || generator_start_channels < 1 || generator.empty()) {
    throw ConfigError("arch: generator needs a positive start and at least one stage");
  }
  size = generator_start;
  for (const GeneratorStage& s : generator) {
    if (s.channels < 1) throw ConfigError("arch: generator stage width must be positive");
    if (s.upsample) size *= 2;
  }
  if (size != image_size) {
    throw ConfigError("arch: generator ends at " + str(size) + ", image size is " + str(image_size));
  }

  if (discriminator.empty()) throw ConfigError("arch: discriminator needs at least one stage");
  size = image_size;
  for (int w : discriminator) {
    if (w < 1 || size % 2 != 0) throw ConfigError("arch: bad discriminator stage at size " + str(size));
    size /= 2;
  }
}

int ArchConfig::score_size() const { return image_size >> discriminator.size(); }

ArchConfig ArchConfig::desk() {
  using K = EncoderStage::Kind;
  ArchConfig a;
  a.image_size = 32;
  a.fusion = fusion::CfftConfig::desk();
  a.encoder = {{K::k3s1, 16}, {K::k4s2, 32}, {K::k4s2, 32}, {K::res, 32}, {K::res, 24}, {K::res, 16}};
  a.generator_start = 8;
  a.generator_start_channels = 64;
  a.generator = {{64, true}, {32, true}, {16, false}};
  a.spade_hidden = 32;
  a.discriminator = {32, 64, 128};
  return a;
}

ArchConfig ArchConfig::large() {
  using K = EncoderStage::Kind;
  ArchConfig a;
  a.image_size = 512;
  a.fusion = fusion::CfftConfig::large();
  a.encoder = {{K::k3s1, 64},  {K::k4s2, 128}, {K::k3s1, 256}, {K::k4s2, 256}, {K::k3s1, 512},
               {K::k4s2, 512}, {K::res, 512},  {K::res, 256},  {K::res, 64}};
  a.generator_start = 16;
  a.generator_start_channels = 1024;
  a.generator = {{1024, true}, {1024, false}, {1024, true}, {512, true}, {256, true}, {128, true}, {64, false}};
  a.spade_hidden = 128;
  a.discriminator = {64, 128, 256, 512};
  return a;
}

ArchConfig ArchConfig::micro() {
  using K = EncoderStage::Kind;
  ArchConfig a;
  a.image_size = 32;
  a.fusion = fusion::CfftConfig::micro();
  a.encoder = {{K::k3s1, 4}, {K::k4s2, 4}, {K::k4s2, 4}, {K::k4s2, 4}, {K::res, 4}};
  a.generator_start = 4;
  a.generator_start_channels = 8;
  a.generator = {{8, true}, {4, true}, {4, true}};
  a.spade_hidden = 4;
  a.discriminator = {4, 8};
  return a;
}

TranslationModel::TranslationModel(ArchConfig arch, std::uint64_t seed) : arch_(std::move(arch)), params_(seed) {
  arch_.validate();
}

void TranslationModel::materialize() {
  NoGradScope no_grad;
  const Tensor img = Tensor::zeros(arch_.image_shape());
  (void)forward(*this, img, img, arch_.domains == 3 ? img : Tensor());
  (void)discriminate(*this, img);
}

std::vector<std::string> TranslationModel::generator_params() const {
  std::vector<std::string> out;
  for (const std::string& n : params_.names()) {
    if (n.rfind("disc.", 0) != 0) out.push_back(n);
  }
  return out;
}

std::vector<std::string> TranslationModel::discriminator_params() const { return params_.names_with_prefix("disc."); }

std::string encoder_name(Domain which) {
  switch (which) {
    case Domain::A:
      return "enc_a";
    case Domain::B:
      return "enc_b";
    case Domain::C:
      return "enc_c";
  }
  return "enc_a";
}

namespace {

void check_image(const ArchConfig& arch, const Tensor& image, const char* who) {
  const bool ok = (image.rank() == 3 || image.rank() == 4) && image.dim(-3) == arch.image_channels &&
                  image.dim(-2) == arch.image_size && image.dim(-1) == arch.image_size;
  if (!ok) {
    throw ShapeError(std::string(who) + ": expected image (" + str(arch.image_channels) + "," + str(arch.image_size) +
                     "," + str(arch.image_size) + "), got " + to_string(image.shape()));
  }
}

}  // namespace

Tensor encode(TranslationModel& model, const Tensor& image, Domain which) {
  const ArchConfig& arch = model.arch();
  check_image(arch, image, "encode");
  ParamStore& store = model.params();
  const std::string base = encoder_name(which);
  Tensor x = image;
  for (std::size_t i = 0; i < arch.encoder.size(); ++i) {
    const EncoderStage& s = arch.encoder[i];
    const std::string name = base + ".s" + std::to_string(i);
    switch (s.kind) {
      case EncoderStage::Kind::k3s1:
        x = nn::conv_block(store, name, x, nn::ConvSpec::k3s1, s.channels);
        break;
      case EncoderStage::Kind::k4s2:
        x = nn::conv_block(store, name, x, nn::ConvSpec::k4s2, s.channels);
        break;
      case EncoderStage::Kind::res:
        x = nn::res_block(store, name, x, s.channels);
        break;
    }
  }
  return x;
}

Tensor spade_modulate(ParamStore& store, const std::string& name, const Tensor& feature, const Tensor& w,
                      int hidden) {
  const int c = feature.dim(-3);
  const Tensor normalized = nn::instance_norm(feature);
  const Tensor cond = resize_bilinear(w, feature.dim(-2), feature.dim(-1));
  const Tensor shared = relu(nn::conv2d(store, name + ".shared", cond, hidden, 3, 1, 1));
  store.get_or_create(name + ".gamma.bias", {c}, nn::Init::ones());
  const Tensor gamma = nn::conv2d(store, name + ".gamma", shared, c, 3, 1, 1);
  const Tensor beta = nn::conv2d(store, name + ".beta", shared, c, 3, 1, 1);
  return add(mul(normalized, gamma), beta);
}

Tensor spade_res_block(ParamStore& store, const std::string& name, const Tensor& x, const Tensor& w,
                       int out_channels, int hidden) {
  Tensor h = relu(spade_modulate(store, name + ".spade1", x, w, hidden));
  h = nn::conv2d(store, name + ".conv1", h, out_channels, 3, 1, 1);
  h = relu(spade_modulate(store, name + ".spade2", h, w, hidden));
  h = nn::conv2d(store, name + ".conv2", h, out_channels, 3, 1, 1);
  const Tensor skip = x.dim(-3) == out_channels ? x : nn::conv2d(store, name + ".skip", x, out_channels, 1, 1, 0, false);
  return add(h, skip);
}

Tensor generate(TranslationModel& model, const Tensor& f, const Tensor& x_a) {
  const ArchConfig& arch = model.arch();
  check_image(arch, x_a, "generate");
  const Shape fs = arch.feature_shape();
  if (f.rank() != x_a.rank() || f.dim(-3) != fs[0] || f.dim(-2) != fs[1] || f.dim(-1) != fs[2]) {
    throw ShapeError("generate: feature " + to_string(f.shape()) + " does not match " + to_string(fs));
  }
  ParamStore& store = model.params();
  const Tensor scaled = resize_bilinear(x_a, arch.fusion.height, arch.fusion.width);
  const Tensor w = concat({f, scaled}, -3);

  const int s0 = arch.generator_start;
  Tensor x = store.get_or_create("gen.const", {arch.generator_start_channels, s0, s0}, nn::Init::normal(1.0));
  if (f.rank() == 4) {
    x = add(reshape(x, {1, arch.generator_start_channels, s0, s0}), Tensor::zeros({f.dim(0), 1, 1, 1}, x.dtype()));
  }
  x = nn::conv2d(store, "gen.head", x, arch.generator_start_channels, 3, 1, 1);
  for (std::size_t i = 0; i < arch.generator.size(); ++i) {
    const GeneratorStage& s = arch.generator[i];
    x = spade_res_block(store, "gen.res" + std::to_string(i), x, w, s.channels, arch.spade_hidden);
    if (s.upsample) x = upsample_nearest(x, 2);
  }
  // Small initial weights keep the first outputs away from tanh saturation.
  return tanh(nn::conv2d(store, "gen.out", x, arch.image_channels, 3, 1, 1, true, 0.02));
}

Tensor discriminate(TranslationModel& model, const Tensor& image) {
  const ArchConfig& arch = model.arch();
  check_image(arch, image, "discriminate");
  ParamStore& store = model.params();
  Tensor x = image;
  for (std::size_t i = 0; i < arch.discriminator.size(); ++i) {
    x = nn::conv_block(store, "disc.s" + std::to_string(i), x, nn::ConvSpec::k4s2, arch.discriminator[i]);
  }
  return nn::conv2d(store, "disc.out", x, 1, 3, 1, 1);
}

ForwardResult forward(TranslationModel& model, const Tensor& x_a, const Tensor& y_b, const Tensor& third) {
  const ArchConfig& arch = model.arch();
  if ((arch.domains == 3) != third.defined()) {
    throw ConfigError("forward: a third-domain input is required iff domains == 3");
  }
  if (x_a.shape() != y_b.shape()) {
    throw ShapeError("forward: x_A " + to_string(x_a.shape()) + " and y_B " + to_string(y_b.shape()) + " differ");
  }
  ForwardResult r;
  r.content_feature = encode(model, x_a, Domain::A);
  r.style_feature = encode(model, y_b, Domain::B);
  if (arch.domains == 2) {
    r.fused = fusion::cfft_forward(model.params(), "cfft0", r.content_feature, r.style_feature, arch.fusion);
  } else {
    if (third.shape() != x_a.shape()) throw ShapeError("forward: third-domain input shape differs");
    const Tensor z = encode(model, third, Domain::C);
    r.fused = fusion::cascade_forward(model.params(), {r.content_feature, r.style_feature, z},
                                      {arch.fusion, arch.fusion}, {"cfft0", "cfft1"});
  }
  r.output = generate(model, r.fused, x_a);
  return r;
}

Tensor translate(TranslationModel& model, const Tensor& x_a, const Tensor& y_b, const Tensor& third) {
  NoGradScope no_grad;
  return forward(model, x_a, y_b, third).output;
}

}  // namespace cfftgan::model
