#pragma once

#include <cstdint>
#include <string>

#include "cfftgan/numcore/rng.hpp"
#include "cfftgan/numcore/tensor.hpp"

namespace cfftgan::data {

using num::Rng;
using num::Tensor;

enum class ShapeKind { circle, rect, triangle };

std::string to_string(ShapeKind kind);
ShapeKind parse_shape_kind(const std::string& s);

/// One synthetic scene. Geometry is in canvas units ([0,1] across the image),
/// so the same spec renders at any size.
struct SceneSpec {
  ShapeKind kind = ShapeKind::circle;
  double center_x = 0.5;
  double center_y = 0.5;
  double size = 0.25;      // circle radius, rect half width, triangle circumradius
  double rotation = 0.0;   // radians
  double fill_hue = 0.0;   // [0, 1)
  double texture_freq = 1.0;  // cycles across the canvas, [1, 8]
  double texture_angle = 0.0;  // radians
  double bg_hue = 0.5;     // [0, 1)
  std::uint64_t seed = 0;  // texture phase

  /// Radius of the circle that contains the rotated shape.
  double circumradius() const;
  /// Throws ConfigError unless the shape keeps a 2 px margin at size S and the
  /// style parameters are in range.
  void validate(int image_size) const;
};

/// Random valid spec for canvases of at least `image_size` pixels.
SceneSpec random_scene(Rng& rng, int image_size);

// Fill and background share fixed luminances; hue and texture only move the
// chroma, so luminance edges depend on geometry alone.
inline constexpr double kFillLuma = 0.75;
inline constexpr double kBackgroundLuma = 0.2;
inline constexpr double kChroma = 0.1;

/// Anti-aliased (3,S,S) rendering in [-1,1].
Tensor render_scene(const SceneSpec& spec, int image_size);
/// Solid silhouette of the shape, replicated to 3 channels, in [-1,1].
Tensor render_mask(const SceneSpec& spec, int image_size);
/// Shape centre in pixel-index coordinates (x = column, y = row).
std::pair<double, double> mask_center(const SceneSpec& spec, int image_size);

/// Sobel magnitude of the luminance, divided by its maximum, thresholded at
/// 0.2, replicated to 3 channels: edge = 1, background = -1.
Tensor edge_extract(const Tensor& image);

struct ScenePair {
  Tensor x_a;  // edge map
  Tensor x_b;  // rendering
};

/// x_B = render_scene(spec), x_A = edge_extract(x_B). Requires S >= 16.
ScenePair synth_pair(const SceneSpec& spec, int image_size);

/// Exact description of one augmentation, applied as: optional horizontal
/// flip, then one affine resample (crop-and-resize, rotation about the centre,
/// translation) with bilinear sampling and mirrored borders.
struct AugmentDescriptor {
  bool flip = false;
  double scale = 1.0;     // crop side / image side, (0, 1]
  double crop_dx = 0.0;   // crop centre offset from the image centre, pixels
  double crop_dy = 0.0;
  double rotation = 0.0;  // degrees
  double shift_x = 0.0;   // output translation, pixels
  double shift_y = 0.0;

  bool is_identity_affine() const;
  std::string to_string() const;
};

struct AugmentRanges {
  double flip_probability = 0.5;
  double max_shift = 0.125;  // fraction of the side
  double min_scale = 0.8;
  double max_rotation = 10.0;  // degrees
};

AugmentDescriptor draw_augment(Rng& rng, int image_size, const AugmentRanges& ranges = {});
Tensor apply_augment(const Tensor& image, const AugmentDescriptor& d);
std::pair<Tensor, AugmentDescriptor> augment(const Tensor& image, Rng& rng, const AugmentRanges& ranges = {});

}  // namespace cfftgan::data
