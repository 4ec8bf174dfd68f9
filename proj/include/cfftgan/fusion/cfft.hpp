#pragma once

#include <string>
#include <vector>

#include "cfftgan/nnblocks/layers.hpp"

namespace cfftgan::fusion {

using nn::ParamStore;
using num::Shape;
using num::Tensor;

struct CfftConfig {
  int channels = 16;  // C
  int height = 8;     // H
  int width = 8;      // W
  int ffn_depth = 3;
  int hiformer_depth = 2;
  int levels = 3;
  int heads = 4;
  bool hiformer_enabled = true;

  /// Throws ConfigError when a field is out of range, heads do not divide C
  /// and 2C, or H, W are not divisible by 2^(levels-1) with Hiformer on.
  void validate() const;
  int tokens() const { return height * width; }

  static CfftConfig desk();   // (16, 8, 8)
  static CfftConfig large();  // (64, 64, 64)
  static CfftConfig micro();  // (4, 4, 4), 2 levels
};

/// (L, D) or (B, L, D) tokens laid out row-major over an H x W grid:
/// token i sits at (i / W, i % W).
struct TokenSequence {
  Tensor tokens;
  int origin_h = 0;
  int origin_w = 0;

  int length() const { return origin_h * origin_w; }
  int dim() const { return tokens.dim(-1); }
};

/// (C, H, W) or (B, C, H, W) feature map to tokens, no embedding.
TokenSequence flatten_tokens(const Tensor& feature);
/// Inverse of flatten_tokens.
Tensor untokenize(const TokenSequence& seq);

/// Token i = [x_F at i || y_F at i] + pos[i]; D = 2C. The embedding is the
/// parameter `name.pos` of shape (H*W, 2C).
TokenSequence tokenize(ParamStore& store, const std::string& name, const Tensor& x_f, const Tensor& y_f,
                       const CfftConfig& cfg);

/// Encoder (depth ffn_depth, dim 2C) -> per-token linear 2C -> C -> encoder
/// (depth ffn_depth, dim C). Parts: name.te1, name.compress, name.te2.
TokenSequence ffn_fuse(ParamStore& store, const std::string& name, const TokenSequence& seq,
                       const CfftConfig& cfg);

/// Token indices of every region at a split level: 4^level quadrants of size
/// (H / 2^level) x (W / 2^level), in Z order, each listed row-major.
std::vector<std::vector<int>> hiformer_regions(int height, int width, int level);

/// Per-stage record of the region layout a Hiformer pass used.
struct HiformerTrace {
  struct Stage {
    std::string path;  // parameter prefix of the stage's encoder
    int regions = 0;
    int tokens_per_region = 0;
  };
  std::vector<Stage> stages;
};

/// Split path: for level 0..levels-1 an encoder (depth hiformer_depth) runs
/// independently on each region of that level, weights shared by siblings.
/// Merge path: the mirror image, levels-1..0, with separate weights, ending
/// on the full sequence. Parts: name.split<l>, name.merge<l>.
TokenSequence hiformer(ParamStore& store, const std::string& name, const TokenSequence& seq,
                       const CfftConfig& cfg, HiformerTrace* trace = nullptr);

/// tokenize -> ffn_fuse -> hiformer (when enabled) -> untokenize.
Tensor cfft_forward(ParamStore& store, const std::string& name, const Tensor& x_f, const Tensor& y_f,
                    const CfftConfig& cfg, HiformerTrace* trace = nullptr);

/// f1 = cfft(feat1, feat2), f_i = cfft(f_{i-1}, feat_{i+1}); returns the last.
Tensor cascade_forward(ParamStore& store, const std::vector<Tensor>& features, const std::vector<CfftConfig>& cfgs,
                       const std::vector<std::string>& names);

}  // namespace cfftgan::fusion
