#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfftgan/data/scene.hpp"

namespace cfftgan::data {

/// One training batch: x_A and x_B from the same specs, x~_B = A(x_B) with the
/// recorded descriptors. Images are (B,3,S,S). `third` is the position mask
/// batch when the third domain is enabled, otherwise undefined.
struct PseudoTuple {
  Tensor x_a;
  Tensor x_tilde_b;
  Tensor x_b;
  Tensor third;
  std::vector<std::size_t> indices;
  std::vector<AugmentDescriptor> augment;
};

/// A list of scene specs rendered at one image size.
struct Dataset {
  int image_size = 32;
  std::vector<SceneSpec> specs;

  std::size_t size() const { return specs.size(); }
  ScenePair pair(std::size_t i) const { return synth_pair(specs.at(i), image_size); }
  Tensor mask(std::size_t i) const { return render_mask(specs.at(i), image_size); }

  /// Spec i is drawn from its own stream of (seed, split), so datasets of
  /// different sizes share their prefixes.
  static Dataset generate(std::uint64_t seed, std::size_t count, int image_size, std::uint32_t split = 0);
};

inline constexpr const char* kManifestFields =
    "kind,center_x,center_y,size,rotation,fill_hue,texture_freq,texture_angle,bg_hue,seed";

/// One line per spec with the fields of kManifestFields, after a header
/// comment carrying the image size. Doubles are written with 17 digits.
std::string format_manifest(const Dataset& ds);
Dataset parse_manifest(const std::string& text);
void write_manifest(const Dataset& ds, const std::string& path);
Dataset read_manifest(const std::string& path);

std::string format_spec(const SceneSpec& s);
SceneSpec parse_spec(const std::string& line);

struct BatchOptions {
  int batch_size = 1;
  std::uint64_t seed = 0;
  bool third_domain = false;
  bool augment = true;
  AugmentRanges ranges;
};

/// Endless stream of batches over shuffled epochs. Visit k (counted from the
/// start of the stream) uses scene perm_e[k mod N] of epoch e = k / N and
/// an augmentation stream derived from (seed, k), so every batch is a pure
/// function of (dataset, options, position).
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, BatchOptions options);

  PseudoTuple next();

  std::uint64_t position() const { return position_; }
  void seek(std::uint64_t visit) { position_ = visit; }
  std::uint64_t epoch() const { return position_ / dataset_->size(); }

  std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;
  std::size_t index_at(std::uint64_t visit) const;
  AugmentDescriptor augment_at(std::uint64_t visit) const;

 private:
  const ScenePair& cached(std::size_t i);
  const Tensor& cached_mask(std::size_t i);

  const Dataset* dataset_;
  BatchOptions options_;
  std::uint64_t position_ = 0;
  mutable std::uint64_t order_epoch_ = ~0ULL;
  mutable std::vector<std::size_t> order_;
  std::vector<std::optional<ScenePair>> pairs_;
  std::vector<Tensor> masks_;
};

/// Stacks (C,H,W) images into (N,C,H,W).
Tensor stack_images(const std::vector<Tensor>& images);
/// Image n of an (N,C,H,W) batch.
Tensor batch_item(const Tensor& batch, int n);

}  // namespace cfftgan::data
