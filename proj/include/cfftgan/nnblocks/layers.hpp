#pragma once

#include <string>
#include <vector>

#include "cfftgan/nnblocks/param_store.hpp"

// Layers are plain functions of (store, name, input). Parameters live in the
// store under `name.<part>` and are created on first use. Token inputs may be
// (L, D) or batched (B, L, D); image inputs (C, H, W) or (N, C, H, W).

namespace cfftgan::nn {

/// x (..., Din) -> x W + b with W (Din, Dout), b (Dout).
Tensor linear(ParamStore& store, const std::string& name, const Tensor& x, int out_features,
              bool bias = true, Init weight_init = Init::normal(0.02));

/// Normalizes the last axis to zero mean and unit variance, then applies a
/// learned scale (init 1) and shift (init 0).
Tensor layer_norm(ParamStore& store, const std::string& name, const Tensor& x, double eps = 1e-5);

/// Tanh approximation of GELU.
Tensor gelu(const Tensor& x);

struct TransformerEncoderConfig {
  int depth = 1;
  int dim = 16;
  int heads = 4;
  int mlp_hidden = 64;

  /// mlp_hidden = 4 * dim.
  static TransformerEncoderConfig make(int depth, int dim, int heads);
  /// Throws ConfigError on a non-positive field or dim % heads != 0.
  void validate() const;
};

/// Receives the attention weights of each call, shaped (B, heads, L, L).
struct AttentionProbe {
  std::vector<Tensor> weights;
};

/// Scaled dot-product self-attention over all tokens, per head, followed by
/// an output projection. Parts: q, k, v, out.
Tensor multi_head_attention(ParamStore& store, const std::string& name, const Tensor& tokens,
                            const TransformerEncoderConfig& cfg, AttentionProbe* probe = nullptr);

/// `depth` pre-norm blocks: x + attn(ln1(x)), then x + mlp(ln2(x)).
/// Block parts: block<i>.ln1, block<i>.attn, block<i>.ln2, block<i>.fc1, block<i>.fc2.
Tensor transformer_encoder(ParamStore& store, const std::string& name, const Tensor& tokens,
                           const TransformerEncoderConfig& cfg, AttentionProbe* probe = nullptr);

/// Closed-form parameter count of transformer_encoder.
std::size_t transformer_encoder_parameter_count(const TransformerEncoderConfig& cfg);

/// Learned (L, D) table, initialized from normal(0, 0.02).
Tensor positional_embedding(ParamStore& store, const std::string& name, int length, int dim);

/// Convolution with learned weight (cout, cin, k, k) and bias. The default
/// weight init is normal(0, sqrt(1 / fan_in)).
Tensor conv2d(ParamStore& store, const std::string& name, const Tensor& x, int out_channels,
              int kernel, int stride, int padding, bool bias = true, double weight_std = -1.0);

/// Per-sample, per-channel normalization over the spatial axes (no affine).
Tensor instance_norm(const Tensor& x, double eps = 1e-5);

enum class ConvSpec { k3s1, k4s2 };

/// conv (k3s1: pad 1, same size; k4s2: pad 1, halves H and W) -> instance
/// norm -> leaky_relu(0.2). k4s2 rejects odd spatial extents.
Tensor conv_block(ParamStore& store, const std::string& name, const Tensor& x, ConvSpec spec,
                  int out_channels);

/// Residual block: leaky_relu(IN(conv3(conv_block(x))) + skip(x)), where skip
/// is the identity or a 1x1 conv when the channel count changes.
Tensor res_block(ParamStore& store, const std::string& name, const Tensor& x, int out_channels);

}  // namespace cfftgan::nn
