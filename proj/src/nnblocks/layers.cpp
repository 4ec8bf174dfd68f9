#include "cfftgan/nnblocks/layers.hpp"

#include <cmath>

#include "cfftgan/numcore/ops.hpp"

namespace cfftgan::nn {

using namespace cfftgan::num;

Tensor linear(ParamStore& store, const std::string& name, const Tensor& x, int out_features, bool bias,
              Init weight_init) {
  if (x.rank() < 1) throw ShapeError("linear '" + name + "': scalar input");
  const int din = x.dim(-1);
  const Tensor w = store.get_or_create(name + ".weight", {din, out_features}, weight_init);
  Shape lead(x.shape().begin(), x.shape().end() - 1);
  Tensor y = matmul(reshape(x, {-1, din}), w);
  if (bias) y = add(y, store.get_or_create(name + ".bias", {out_features}, Init::zeros()));
  lead.push_back(out_features);
  return reshape(y, lead);
}

Tensor layer_norm(ParamStore& store, const std::string& name, const Tensor& x, double eps) {
  const int d = x.dim(-1);
  const Tensor scale = store.get_or_create(name + ".scale", {d}, Init::ones());
  const Tensor shift = store.get_or_create(name + ".shift", {d}, Init::zeros());
  const Tensor mu = mean(x, {-1}, true);
  const Tensor sd = sqrt(add_scalar(var(x, {-1}, true), eps));
  return add(mul(div(sub(x, mu), sd), scale), shift);
}

Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  const Tensor cube = mul(mul(x, x), x);
  const Tensor inner = mul_scalar(add(x, mul_scalar(cube, 0.044715)), kC);
  return mul(mul_scalar(x, 0.5), add_scalar(tanh(inner), 1.0));
}

TransformerEncoderConfig TransformerEncoderConfig::make(int depth, int dim, int heads) {
  TransformerEncoderConfig c;
  c.depth = depth;
  c.dim = dim;
  c.heads = heads;
  c.mlp_hidden = 4 * dim;
  return c;
}

void TransformerEncoderConfig::validate() const {
  if (depth < 1 || dim < 1 || heads < 1 || mlp_hidden < 1) {
    throw ConfigError("transformer encoder: depth, dim, heads and mlp_hidden must be positive");
  }
  if (dim % heads != 0) {
    throw ConfigError("transformer encoder: dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

namespace {

// (B, L, D) -> (B*H, L, D/H)
Tensor split_heads(const Tensor& t, int heads) {
  const int b = t.dim(0), l = t.dim(1), d = t.dim(2);
  return reshape(transpose(reshape(t, {b, l, heads, d / heads}), {0, 2, 1, 3}), {b * heads, l, d / heads});
}

Tensor merge_heads(const Tensor& t, int batch, int heads) {
  const int l = t.dim(1), dh = t.dim(2);
  return reshape(transpose(reshape(t, {batch, heads, l, dh}), {0, 2, 1, 3}), {batch, l, heads * dh});
}

// Brings (L, D) to (1, L, D); returns whether it did.
bool ensure_batched(Tensor& t, const char* who) {
  if (t.rank() == 3) return false;
  if (t.rank() != 2) throw ShapeError(std::string(who) + ": tokens must be (L,D) or (B,L,D), got " + to_string(t.shape()));
  t = reshape(t, {1, t.dim(0), t.dim(1)});
  return true;
}

}  // namespace

Tensor multi_head_attention(ParamStore& store, const std::string& name, const Tensor& tokens,
                            const TransformerEncoderConfig& cfg, AttentionProbe* probe) {
  cfg.validate();
  Tensor x = tokens;
  const bool squeezed = ensure_batched(x, "multi_head_attention");
  if (x.dim(2) != cfg.dim) {
    throw ShapeError("multi_head_attention '" + name + "': token dim " + std::to_string(x.dim(2)) +
                     " != configured " + std::to_string(cfg.dim));
  }
  const int b = x.dim(0), l = x.dim(1);
  const Tensor q = split_heads(linear(store, name + ".q", x, cfg.dim), cfg.heads);
  const Tensor k = split_heads(linear(store, name + ".k", x, cfg.dim), cfg.heads);
  const Tensor v = split_heads(linear(store, name + ".v", x, cfg.dim), cfg.heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.dim / cfg.heads));
  const Tensor weights = softmax(mul_scalar(matmul(q, transpose(k)), scale), -1);
  if (probe != nullptr) probe->weights.push_back(reshape(weights.detach(), {b, cfg.heads, l, l}));
  Tensor out = linear(store, name + ".out", merge_heads(matmul(weights, v), b, cfg.heads), cfg.dim);
  return squeezed ? reshape(out, {l, cfg.dim}) : out;
}

Tensor transformer_encoder(ParamStore& store, const std::string& name, const Tensor& tokens,
                           const TransformerEncoderConfig& cfg, AttentionProbe* probe) {
  cfg.validate();
  Tensor x = tokens;
  for (int i = 0; i < cfg.depth; ++i) {
    const std::string block = name + ".block" + std::to_string(i);
    x = add(x, multi_head_attention(store, block + ".attn", layer_norm(store, block + ".ln1", x), cfg, probe));
    const Tensor h = gelu(linear(store, block + ".fc1", layer_norm(store, block + ".ln2", x), cfg.mlp_hidden));
    x = add(x, linear(store, block + ".fc2", h, cfg.dim));
  }
  return x;
}

std::size_t transformer_encoder_parameter_count(const TransformerEncoderConfig& cfg) {
  const std::size_t d = static_cast<std::size_t>(cfg.dim);
  const std::size_t m = static_cast<std::size_t>(cfg.mlp_hidden);
  const std::size_t norms = 2 * (2 * d);
  const std::size_t attention = 4 * (d * d + d);
  const std::size_t mlp = (d * m + m) + (m * d + d);
  return static_cast<std::size_t>(cfg.depth) * (norms + attention + mlp);
}

Tensor positional_embedding(ParamStore& store, const std::string& name, int length, int dim) {
  if (length <= 0 || dim <= 0) throw ShapeError("positional_embedding: extents must be positive");
  return store.get_or_create(name, {length, dim}, Init::normal(0.02));
}

Tensor conv2d(ParamStore& store, const std::string& name, const Tensor& x, int out_channels, int kernel,
              int stride, int padding, bool bias, double weight_std) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw ShapeError("conv2d '" + name + "': expected (C,H,W) or (N,C,H,W), got " + to_string(x.shape()));
  }
  const int cin = x.dim(-3);
  const double fan_in = static_cast<double>(cin) * kernel * kernel;
  const double sd = weight_std >= 0.0 ? weight_std : std::sqrt(1.0 / fan_in);
  const Tensor w = store.get_or_create(name + ".weight", {out_channels, cin, kernel, kernel},
                                       sd == 0.0 ? Init::zeros() : Init::normal(sd));
  const Tensor b = bias ? store.get_or_create(name + ".bias", {out_channels}, Init::zeros()) : Tensor();
  return num::conv2d(x, w, b, stride, padding);
}

Tensor instance_norm(const Tensor& x, double eps) {
  const Tensor mu = mean(x, {-2, -1}, true);
  const Tensor sd = sqrt(add_scalar(var(x, {-2, -1}, true), eps));
  return div(sub(x, mu), sd);
}

Tensor conv_block(ParamStore& store, const std::string& name, const Tensor& x, ConvSpec spec, int out_channels) {
  Tensor y;
  if (spec == ConvSpec::k3s1) {
    y = conv2d(store, name + ".conv", x, out_channels, 3, 1, 1);
  } else {
    if (x.dim(-1) % 2 != 0 || x.dim(-2) % 2 != 0) {
      throw ShapeError("conv_block '" + name + "': k4s2 needs even spatial extents, got " + to_string(x.shape()));
    }
    y = conv2d(store, name + ".conv", x, out_channels, 4, 2, 1);
  }
  return leaky_relu(instance_norm(y), 0.2);
}

Tensor res_block(ParamStore& store, const std::string& name, const Tensor& x, int out_channels) {
  const Tensor h = conv_block(store, name + ".a", x, ConvSpec::k3s1, out_channels);
  const Tensor y = instance_norm(conv2d(store, name + ".b", h, out_channels, 3, 1, 1));
  const Tensor skip = x.dim(-3) == out_channels ? x : conv2d(store, name + ".skip", x, out_channels, 1, 1, 0);
  return leaky_relu(add(y, skip), 0.2);
}

}  // namespace cfftgan::nn
