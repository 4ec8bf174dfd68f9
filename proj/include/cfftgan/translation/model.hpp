#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfftgan/fusion/cfft.hpp"

namespace cfftgan::model {

using nn::ParamStore;
using num::Shape;
using num::Tensor;

struct EncoderStage {
  enum class Kind { k3s1, k4s2, res };
  Kind kind = Kind::k3s1;
  int channels = 0;
};

struct GeneratorStage {
  int channels = 0;
  bool upsample = false;  // nearest 2x after the block
};

struct ArchConfig {
  int image_size = 32;  // S
  int image_channels = 3;
  fusion::CfftConfig fusion;  // (C, H, W) and the CFFT hyperparameters
  std::vector<EncoderStage> encoder;
  int generator_start = 8;             // spatial size of the learned constant
  int generator_start_channels = 64;   // width of the first k3s1 conv
  std::vector<GeneratorStage> generator;
  int spade_hidden = 32;
  std::vector<int> discriminator;  // k4s2 block widths
  int domains = 2;                 // 3 adds a third encoder and a second CFFT

  /// Throws ConfigError unless the encoder maps (3,S,S) to (C,H,W), the
  /// generator reaches S, and every field is in range.
  void validate() const;
  Shape feature_shape() const { return {fusion.channels, fusion.height, fusion.width}; }
  Shape image_shape() const { return {image_channels, image_size, image_size}; }
  /// Spatial side of the discriminator score map.
  int score_size() const;

  static ArchConfig desk();
  static ArchConfig large();
  /// Tiny model for gradient checks: S=32, features (4,4,4), 2 levels.
  static ArchConfig micro();
};

enum class Domain { A, B, C };

/// All trainable parameters of one model. Parameter prefixes: enc_a, enc_b,
/// enc_c, cfft0, cfft1, gen, disc.
class TranslationModel {
 public:
  TranslationModel(ArchConfig arch, std::uint64_t seed);

  const ArchConfig& arch() const { return arch_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Creates every parameter by running one forward pass on zero inputs.
  void materialize();
  /// Parameter names updated by the generator and discriminator optimizers.
  std::vector<std::string> generator_params() const;
  std::vector<std::string> discriminator_params() const;

 private:
  ArchConfig arch_;
  ParamStore params_;
};

std::string encoder_name(Domain which);

/// (3,S,S) or (N,3,S,S) image -> (C,H,W) features through the encoder of
/// `which`.
Tensor encode(TranslationModel& model, const Tensor& image, Domain which);

/// instance_norm(F) * gamma(w) + beta(w), where w is resized to F's spatial
/// size and passed through a shared k3s1 conv + relu, then two k3s1 convs.
/// Parts: name.shared, name.gamma, name.beta. The gamma bias starts at 1.
Tensor spade_modulate(ParamStore& store, const std::string& name, const Tensor& feature, const Tensor& w,
                      int hidden);

/// spade -> relu -> conv, twice, plus a skip (1x1 conv when widths differ).
Tensor spade_res_block(ParamStore& store, const std::string& name, const Tensor& x, const Tensor& w,
                       int out_channels, int hidden);

/// Fused feature f plus content image x_A -> image in (-1, 1).
Tensor generate(TranslationModel& model, const Tensor& f, const Tensor& x_a);

/// Image -> raw patch scores (1, s, s) or (N, 1, s, s).
Tensor discriminate(TranslationModel& model, const Tensor& image);

struct ForwardResult {
  Tensor content_feature;  // E_A(x_A)
  Tensor style_feature;    // E_B(y_B)
  Tensor fused;            // CFFT output
  Tensor output;           // generated image
};

/// Full pipeline. `third` is the extra-domain input; required iff domains == 3.
ForwardResult forward(TranslationModel& model, const Tensor& x_a, const Tensor& y_b, const Tensor& third = Tensor());

/// forward(...).output without recording on any tape.
Tensor translate(TranslationModel& model, const Tensor& x_a, const Tensor& y_b, const Tensor& third = Tensor());

}  // namespace cfftgan::model
