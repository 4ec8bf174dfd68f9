#include "cfftgan/fusion/cfft.hpp"

#include "cfftgan/numcore/ops.hpp"

namespace cfftgan::fusion {

using namespace cfftgan::num;
using nn::TransformerEncoderConfig;

void CfftConfig::validate() const {
  if (channels < 1 || height < 1 || width < 1) throw ConfigError("cfft: feature scale must be positive");
  if (ffn_depth < 1 || hiformer_depth < 1 || levels < 1) {
    throw ConfigError("cfft: ffn_depth, hiformer_depth and levels must be >= 1");
  }
  if (heads < 1 || channels % heads != 0) {
    throw ConfigError("cfft: heads " + std::to_string(heads) + " must divide C=" + std::to_string(channels));
  }
  if (hiformer_enabled) {
    const int step = 1 << (levels - 1);
    if (height % step != 0 || width % step != 0) {
      throw ConfigError("cfft: H=" + std::to_string(height) + " and W=" + std::to_string(width) +
                        " must be divisible by 2^(levels-1)=" + std::to_string(step));
    }
  }
}

CfftConfig CfftConfig::desk() { return CfftConfig{}; }

CfftConfig CfftConfig::large() {
  CfftConfig c;
  c.channels = 64;
  c.height = 64;
  c.width = 64;
  return c;
}

CfftConfig CfftConfig::micro() {
  CfftConfig c;
  c.channels = 4;
  c.height = 4;
  c.width = 4;
  c.levels = 2;
  return c;
}

TokenSequence flatten_tokens(const Tensor& feature) {
  if (feature.rank() != 3 && feature.rank() != 4) {
    throw ShapeError("flatten_tokens: expected (C,H,W) or (B,C,H,W), got " + to_string(feature.shape()));
  }
  const int c = feature.dim(-3), h = feature.dim(-2), w = feature.dim(-1);
  TokenSequence seq;
  seq.origin_h = h;
  seq.origin_w = w;
  if (feature.rank() == 3) {
    seq.tokens = transpose(reshape(feature, {c, h * w}));
  } else {
    seq.tokens = transpose(reshape(feature, {feature.dim(0), c, h * w}));
  }
  return seq;
}

Tensor untokenize(const TokenSequence& seq) {
  const Tensor& t = seq.tokens;
  if (t.dim(-2) != seq.length()) {
    throw ShapeError("untokenize: " + std::to_string(t.dim(-2)) + " tokens for a " + std::to_string(seq.origin_h) +
                     "x" + std::to_string(seq.origin_w) + " grid");
  }
  const int d = t.dim(-1);
  if (t.rank() == 2) return reshape(transpose(t), {d, seq.origin_h, seq.origin_w});
  return reshape(transpose(t), {t.dim(0), d, seq.origin_h, seq.origin_w});
}

namespace {

void check_scale(const Tensor& f, const CfftConfig& cfg, const char* who) {
  if (f.dim(-3) != cfg.channels || f.dim(-2) != cfg.height || f.dim(-1) != cfg.width) {
    throw ShapeError(std::string(who) + ": feature " + to_string(f.shape()) + " does not match configured (" +
                     std::to_string(cfg.channels) + "," + std::to_string(cfg.height) + "," +
                     std::to_string(cfg.width) + ")");
  }
}

}  // namespace

TokenSequence tokenize(ParamStore& store, const std::string& name, const Tensor& x_f, const Tensor& y_f,
                       const CfftConfig& cfg) {
  if (x_f.shape() != y_f.shape()) {
    throw ShapeError("tokenize: x_F " + to_string(x_f.shape()) + " and y_F " + to_string(y_f.shape()) + " differ");
  }
  check_scale(x_f, cfg, "tokenize");
  TokenSequence seq = flatten_tokens(x_f);
  const Tensor joint = concat({seq.tokens, flatten_tokens(y_f).tokens}, -1);
  seq.tokens = add(joint, nn::positional_embedding(store, name + ".pos", cfg.tokens(), 2 * cfg.channels));
  return seq;
}

TokenSequence ffn_fuse(ParamStore& store, const std::string& name, const TokenSequence& seq, const CfftConfig& cfg) {
  if (seq.dim() != 2 * cfg.channels) {
    throw ShapeError("ffn_fuse: token dim " + std::to_string(seq.dim()) + " != 2C = " +
                     std::to_string(2 * cfg.channels));
  }
  const auto wide = TransformerEncoderConfig::make(cfg.ffn_depth, 2 * cfg.channels, cfg.heads);
  const auto narrow = TransformerEncoderConfig::make(cfg.ffn_depth, cfg.channels, cfg.heads);
  TokenSequence out = seq;
  Tensor t = nn::transformer_encoder(store, name + ".te1", seq.tokens, wide);
  t = nn::linear(store, name + ".compress", t, cfg.channels);
  out.tokens = nn::transformer_encoder(store, name + ".te2", t, narrow);
  return out;
}

std::vector<std::vector<int>> hiformer_regions(int height, int width, int level) {
  const int splits = 1 << level;
  if (level < 0 || height % splits != 0 || width % splits != 0) {
    throw ConfigError("hiformer_regions: " + std::to_string(height) + "x" + std::to_string(width) +
                      " grid is not divisible into " + std::to_string(splits) + "x" + std::to_string(splits));
  }
  const int rh = height / splits, rw = width / splits;
  const int count = splits * splits;
  std::vector<std::vector<int>> regions(static_cast<std::size_t>(count));
  for (int z = 0; z < count; ++z) {
    // De-interleave the Z-order index into region row and column.
    int ry = 0, rx = 0;
    for (int b = 0; b < level; ++b) {
      rx |= ((z >> (2 * b)) & 1) << b;
      ry |= ((z >> (2 * b + 1)) & 1) << b;
    }
    auto& r = regions[static_cast<std::size_t>(z)];
    for (int y = 0; y < rh; ++y) {
      for (int x = 0; x < rw; ++x) r.push_back((ry * rh + y) * width + rx * rw + x);
    }
  }
  return regions;
}

namespace {

// Runs one encoder independently over every region of `level`.
Tensor region_encoder(ParamStore& store, const std::string& path, const Tensor& tokens, const TokenSequence& seq,
                      int level, const TransformerEncoderConfig& te, HiformerTrace* trace) {
  const auto regions = hiformer_regions(seq.origin_h, seq.origin_w, level);
  const int r = static_cast<int>(regions.size());
  const int per = seq.length() / r;
  if (trace != nullptr) trace->stages.push_back({path, r, per});
  if (r == 1) return nn::transformer_encoder(store, path, tokens, te);

  std::vector<int> order;
  for (const auto& reg : regions) order.insert(order.end(), reg.begin(), reg.end());
  std::vector<int> inverse(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inverse[static_cast<std::size_t>(order[i])] = static_cast<int>(i);

  const bool batched = tokens.rank() == 3;
  const int b = batched ? tokens.dim(0) : 1;
  const int c = tokens.dim(-1);
  const Tensor grouped = reshape(gather(tokens, -2, order), {b * r, per, c});
  const Tensor encoded = nn::transformer_encoder(store, path, grouped, te);
  const Tensor flat = batched ? reshape(encoded, {b, seq.length(), c}) : reshape(encoded, {seq.length(), c});
  return gather(flat, -2, inverse);
}

}  // namespace

TokenSequence hiformer(ParamStore& store, const std::string& name, const TokenSequence& seq, const CfftConfig& cfg,
                       HiformerTrace* trace) {
  if (seq.dim() != cfg.channels) {
    throw ShapeError("hiformer: token dim " + std::to_string(seq.dim()) + " != C = " + std::to_string(cfg.channels));
  }
  const int step = 1 << (cfg.levels - 1);
  if (seq.origin_h % step != 0 || seq.origin_w % step != 0) {
    throw ConfigError("hiformer: grid " + std::to_string(seq.origin_h) + "x" + std::to_string(seq.origin_w) +
                      " not divisible by 2^(levels-1)=" + std::to_string(step));
  }
  const auto te = TransformerEncoderConfig::make(cfg.hiformer_depth, cfg.channels, cfg.heads);
  Tensor t = seq.tokens;
  for (int level = 0; level < cfg.levels; ++level) {
    t = region_encoder(store, name + ".split" + std::to_string(level), t, seq, level, te, trace);
  }
  for (int level = cfg.levels - 1; level >= 0; --level) {
    t = region_encoder(store, name + ".merge" + std::to_string(level), t, seq, level, te, trace);
  }
  TokenSequence out = seq;
  out.tokens = t;
  return out;
}

Tensor cfft_forward(ParamStore& store, const std::string& name, const Tensor& x_f, const Tensor& y_f,
                    const CfftConfig& cfg, HiformerTrace* trace) {
  cfg.validate();
  TokenSequence seq = tokenize(store, name, x_f, y_f, cfg);
  seq = ffn_fuse(store, name + ".ffn", seq, cfg);
  if (cfg.hiformer_enabled) seq = hiformer(store, name + ".hiformer", seq, cfg, trace);
  return untokenize(seq);
}

Tensor cascade_forward(ParamStore& store, const std::vector<Tensor>& features, const std::vector<CfftConfig>& cfgs,
                       const std::vector<std::string>& names) {
  if (features.size() < 2) throw ShapeError("cascade_forward: needs at least 2 features");
  const std::size_t stages = features.size() - 1;
  if (cfgs.size() != stages || names.size() != stages) {
    throw ConfigError("cascade_forward: " + std::to_string(features.size()) + " features need " +
                      std::to_string(stages) + " stage configs and names");
  }
  for (const Tensor& f : features) {
    if (f.shape() != features[0].shape()) {
      throw ShapeError("cascade_forward: feature " + to_string(f.shape()) + " differs from " +
                       to_string(features[0].shape()));
    }
  }
  Tensor f = cfft_forward(store, names[0], features[0], features[1], cfgs[0]);
  for (std::size_t i = 1; i < stages; ++i) f = cfft_forward(store, names[i], f, features[i + 1], cfgs[i]);
  return f;
}

}  // namespace cfftgan::fusion
