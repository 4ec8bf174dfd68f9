#include "cfftgan/data/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <vector>

#include "cfftgan/numcore/error.hpp"

namespace cfftgan::data {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kRectAspect = 0.65;  // rect half height / half width
constexpr int kSupersample = 4;
constexpr double kTextureSwing = 0.25;  // hue units swept by the texture

struct Rgb {
  double r, g, b;
};

// Colour with luma exactly y (BT.601 weights) and chroma radius kChroma.
Rgb from_luma_hue(double y, double hue) {
  const double cb = kChroma * std::cos(2.0 * kPi * hue);
  const double cr = kChroma * std::sin(2.0 * kPi * hue);
  const double r = y + 1.402 * cr;
  const double b = y + 1.772 * cb;
  const double g = y - (0.299 * 1.402 * cr + 0.114 * 1.772 * cb) / 0.587;
  return {r, g, b};
}

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

bool inside(const SceneSpec& s, double x, double y) {
  const double dx = x - s.center_x, dy = y - s.center_y;
  const double c = std::cos(s.rotation), sn = std::sin(s.rotation);
  const double qx = c * dx + sn * dy;
  const double qy = -sn * dx + c * dy;
  switch (s.kind) {
    case ShapeKind::circle:
      return qx * qx + qy * qy <= s.size * s.size;
    case ShapeKind::rect:
      return std::abs(qx) <= s.size && std::abs(qy) <= kRectAspect * s.size;
    case ShapeKind::triangle: {
      // Equilateral, circumradius size, one vertex pointing up (-y).
      // Inside when on the inner side of all three edges; the inradius is size/2.
      for (int k = 0; k < 3; ++k) {
        const double a = kPi / 2.0 + 2.0 * kPi * k / 3.0;  // outward edge normal
        if (qx * std::cos(a) + qy * std::sin(a) > s.size / 2.0) return false;
      }
      return true;
    }
  }
  return false;
}

// Fraction of the pixel (i, j) covered by the shape.
double coverage(const SceneSpec& s, int i, int j, int size) {
  int hits = 0;
  for (int a = 0; a < kSupersample; ++a) {
    for (int b = 0; b < kSupersample; ++b) {
      const double y = (i + (a + 0.5) / kSupersample) / size;
      const double x = (j + (b + 0.5) / kSupersample) / size;
      hits += inside(s, x, y) ? 1 : 0;
    }
  }
  return static_cast<double>(hits) / (kSupersample * kSupersample);
}

double texture_phase(std::uint64_t seed) { return 2.0 * kPi * Rng(seed, 0x74657874ULL).uniform(); }

void require_image(const Tensor& image, const char* who) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) < 3 || image.dim(2) < 3) {
    throw ShapeError(std::string(who) + ": expected a (3,H,W) image, got " + num::to_string(image.shape()));
  }
}

}  // namespace

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::circle:
      return "circle";
    case ShapeKind::rect:
      return "rect";
    case ShapeKind::triangle:
      return "triangle";
  }
  return "?";
}

ShapeKind parse_shape_kind(const std::string& s) {
  if (s == "circle") return ShapeKind::circle;
  if (s == "rect") return ShapeKind::rect;
  if (s == "triangle") return ShapeKind::triangle;
  throw ConfigError("unknown shape kind '" + s + "'");
}

double SceneSpec::circumradius() const {
  return kind == ShapeKind::rect ? size * std::sqrt(1.0 + kRectAspect * kRectAspect) : size;
}

void SceneSpec::validate(int image_size) const {
  if (image_size < 16) throw ConfigError("scene: image size must be >= 16, got " + std::to_string(image_size));
  if (!(size > 0.0)) throw ConfigError("scene: size must be positive");
  const double r = circumradius() * image_size + 2.0;
  const double cx = center_x * image_size, cy = center_y * image_size;
  if (!(cx - r >= 0.0 && cx + r <= image_size && cy - r >= 0.0 && cy + r <= image_size)) {
    throw ConfigError("scene: shape does not keep a 2 px margin inside a " + std::to_string(image_size) +
                      " px canvas");
  }
  if (!(fill_hue >= 0.0 && fill_hue < 1.0) || !(bg_hue >= 0.0 && bg_hue < 1.0)) {
    throw ConfigError("scene: hues must lie in [0,1)");
  }
  if (!(texture_freq >= 1.0 && texture_freq <= 8.0)) throw ConfigError("scene: texture frequency must lie in [1,8]");
  if (!std::isfinite(rotation) || !std::isfinite(texture_angle)) throw ConfigError("scene: non-finite angle");
}

SceneSpec random_scene(Rng& rng, int image_size) {
  SceneSpec s;
  s.kind = static_cast<ShapeKind>(rng.below(3));
  s.size = rng.uniform(0.15, 0.28);
  s.rotation = rng.uniform(0.0, 2.0 * kPi);
  const double lo = s.circumradius() + 2.0 / image_size;
  s.center_x = rng.uniform(lo, 1.0 - lo);
  s.center_y = rng.uniform(lo, 1.0 - lo);
  s.fill_hue = rng.uniform();
  s.texture_freq = rng.uniform(1.0, 8.0);
  s.texture_angle = rng.uniform(0.0, kPi);
  s.bg_hue = rng.uniform();
  s.seed = rng.next_u64();
  s.validate(image_size);
  return s;
}

Tensor render_scene(const SceneSpec& spec, int image_size) {
  spec.validate(image_size);
  const int n = image_size;
  const double phase = texture_phase(spec.seed);
  const double ca = std::cos(spec.texture_angle), sa = std::sin(spec.texture_angle);
  const Rgb bg = from_luma_hue(kBackgroundLuma, spec.bg_hue);
  std::vector<double> px(static_cast<std::size_t>(3 * n * n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double cov = coverage(spec, i, j, n);
      const double x = (j + 0.5) / n, y = (i + 0.5) / n;
      const double t = std::sin(2.0 * kPi * spec.texture_freq * (x * ca + y * sa) + phase);
      const Rgb fg = from_luma_hue(kFillLuma, spec.fill_hue + kTextureSwing * t);
      const std::array<double, 3> c = {cov * fg.r + (1.0 - cov) * bg.r, cov * fg.g + (1.0 - cov) * bg.g,
                                       cov * fg.b + (1.0 - cov) * bg.b};
      for (int ch = 0; ch < 3; ++ch) {
        px[static_cast<std::size_t>((ch * n + i) * n + j)] = std::clamp(2.0 * c[ch] - 1.0, -1.0, 1.0);
      }
    }
  }
  return Tensor::from_values({3, n, n}, px);
}

Tensor render_mask(const SceneSpec& spec, int image_size) {
  spec.validate(image_size);
  const int n = image_size;
  std::vector<double> px(static_cast<std::size_t>(3 * n * n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double v = 2.0 * coverage(spec, i, j, n) - 1.0;
      for (int ch = 0; ch < 3; ++ch) px[static_cast<std::size_t>((ch * n + i) * n + j)] = v;
    }
  }
  return Tensor::from_values({3, n, n}, px);
}

std::pair<double, double> mask_center(const SceneSpec& spec, int image_size) {
  return {spec.center_x * image_size - 0.5, spec.center_y * image_size - 0.5};
}

Tensor edge_extract(const Tensor& image) {
  require_image(image, "edge_extract");
  const int h = image.dim(1), w = image.dim(2);
  const std::vector<double> src = image.to_vector();
  std::vector<double> y(static_cast<std::size_t>(h * w));
  for (int k = 0; k < h * w; ++k) {
    const double r = (src[k] + 1.0) / 2.0, g = (src[h * w + k] + 1.0) / 2.0, b = (src[2 * h * w + k] + 1.0) / 2.0;
    y[static_cast<std::size_t>(k)] = luma(r, g, b);
  }
  const auto at = [&](int i, int j) {
    i = std::clamp(i, 0, h - 1);
    j = std::clamp(j, 0, w - 1);
    return y[static_cast<std::size_t>(i * w + j)];
  };
  std::vector<double> mag(y.size());
  double peak = 0.0;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double gx = (at(i - 1, j + 1) + 2.0 * at(i, j + 1) + at(i + 1, j + 1)) -
                        (at(i - 1, j - 1) + 2.0 * at(i, j - 1) + at(i + 1, j - 1));
      const double gy = (at(i + 1, j - 1) + 2.0 * at(i + 1, j) + at(i + 1, j + 1)) -
                        (at(i - 1, j - 1) + 2.0 * at(i - 1, j) + at(i - 1, j + 1));
      const double m = std::sqrt(gx * gx + gy * gy);
      mag[static_cast<std::size_t>(i * w + j)] = m;
      peak = std::max(peak, m);
    }
  }
  std::vector<double> out(static_cast<std::size_t>(3 * h * w));
  for (int k = 0; k < h * w; ++k) {
    const bool edge = peak > 0.0 && mag[static_cast<std::size_t>(k)] / peak >= 0.2;
    for (int ch = 0; ch < 3; ++ch) out[static_cast<std::size_t>(ch * h * w + k)] = edge ? 1.0 : -1.0;
  }
  return Tensor::from_values({3, h, w}, out, image.dtype());
}

ScenePair synth_pair(const SceneSpec& spec, int image_size) {
  ScenePair p;
  p.x_b = render_scene(spec, image_size);
  p.x_a = edge_extract(p.x_b);
  return p;
}

bool AugmentDescriptor::is_identity_affine() const {
  return scale == 1.0 && crop_dx == 0.0 && crop_dy == 0.0 && rotation == 0.0 && shift_x == 0.0 && shift_y == 0.0;
}

std::string AugmentDescriptor::to_string() const {
  std::ostringstream os;
  os.precision(9);
  os << "flip=" << (flip ? 1 : 0) << " scale=" << scale << " crop=(" << crop_dx << "," << crop_dy
     << ") rot=" << rotation << " shift=(" << shift_x << "," << shift_y << ")";
  return os.str();
}

AugmentDescriptor draw_augment(Rng& rng, int image_size, const AugmentRanges& ranges) {
  AugmentDescriptor d;
  d.flip = rng.uniform() < ranges.flip_probability;
  d.scale = rng.uniform(ranges.min_scale, 1.0);
  const double slack = (1.0 - d.scale) * image_size / 2.0;
  d.crop_dx = rng.uniform(-slack, slack);
  d.crop_dy = rng.uniform(-slack, slack);
  d.rotation = rng.uniform(-ranges.max_rotation, ranges.max_rotation);
  const double shift = ranges.max_shift * image_size;
  d.shift_x = rng.uniform(-shift, shift);
  d.shift_y = rng.uniform(-shift, shift);
  return d;
}

namespace {

// Mirror about the first and last pixel centres.
double reflect(double x, int n) {
  if (n == 1) return 0.0;
  const double period = 2.0 * (n - 1);
  x = std::fmod(std::abs(x), period);
  return x > n - 1 ? period - x : x;
}

}  // namespace

Tensor apply_augment(const Tensor& image, const AugmentDescriptor& d) {
  require_image(image, "apply_augment");
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::vector<double> src = image.to_vector();
  std::vector<double> flipped(src.begin(), src.end());
  if (d.flip) {
    for (int ch = 0; ch < c; ++ch) {
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          flipped[static_cast<std::size_t>((ch * h + i) * w + j)] = src[static_cast<std::size_t>((ch * h + i) * w + (w - 1 - j))];
        }
      }
    }
  }
  if (d.is_identity_affine()) return Tensor::from_values(image.shape(), flipped, image.dtype());

  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double th = d.rotation * kPi / 180.0;
  const double ct = std::cos(th), st = std::sin(th);
  std::vector<double> out(flipped.size());
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      // Output pixel back to source coordinates.
      const double px = j - cx - d.shift_x, py = i - cy - d.shift_y;
      const double rx = ct * px + st * py, ry = -st * px + ct * py;
      const double sx = reflect(rx * d.scale + d.crop_dx + cx, w);
      const double sy = reflect(ry * d.scale + d.crop_dy + cy, h);
      const int x0 = std::min(static_cast<int>(sx), w - 1), y0 = std::min(static_cast<int>(sy), h - 1);
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (int ch = 0; ch < c; ++ch) {
        const auto v = [&](int yy, int xx) { return flipped[static_cast<std::size_t>((ch * h + yy) * w + xx)]; };
        const double top = v(y0, x0) * (1.0 - fx) + v(y0, x1) * fx;
        const double bot = v(y1, x0) * (1.0 - fx) + v(y1, x1) * fx;
        out[static_cast<std::size_t>((ch * h + i) * w + j)] = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  return Tensor::from_values(image.shape(), out, image.dtype());
}

std::pair<Tensor, AugmentDescriptor> augment(const Tensor& image, Rng& rng, const AugmentRanges& ranges) {
  require_image(image, "augment");
  const AugmentDescriptor d = draw_augment(rng, image.dim(1), ranges);
  return {apply_augment(image, d), d};
}

}  // namespace cfftgan::data
