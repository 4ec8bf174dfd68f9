#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfftgan/data/dataset.hpp"
#include "cfftgan/losses/losses.hpp"
#include "cfftgan/numcore/rng.hpp"
#include "cfftgan/translation/model.hpp"

namespace cfftgan::train {

using num::Rng;
using num::Tensor;

using PointSet = std::vector<std::vector<double>>;

/// Exact W1 between two 1-D empirical distributions: mean |a_(k) - b_(k)|
/// over sorted samples. Unequal counts are resampled to the larger count
/// through the empirical quantile functions.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

/// `count` directions drawn uniformly on the unit sphere in `dim` dimensions.
PointSet random_directions(int count, int dim, Rng& rng);

/// Mean over `directions` of the 1-D W1 between the projected point sets.
double sliced_wasserstein(const PointSet& a, const PointSet& b, const PointSet& directions);

struct SwdOptions {
  int patch_size = 7;
  int projections = 64;
  int patches_per_image = 32;
  std::uint64_t seed = 0;
};

/// Flattened (C * p * p) patches at seeded positions. Image k of any set uses
/// the same positions, so identical sets give identical descriptors.
PointSet extract_patches(const std::vector<Tensor>& images, int patch_size, int per_image, std::uint64_t seed);

/// Sliced Wasserstein distance between the patch distributions of two image
/// sets (each image (3,S,S) in [-1,1]). Patches keep their pixel scale.
double swd(const std::vector<Tensor>& a, const std::vector<Tensor>& b, const SwdOptions& options = {});

/// Mean cosine similarity of channel vectors at corresponding positions of
/// two (C,H,W) or (N,C,H,W) feature maps. Two zero vectors count as 1, one
/// zero vector against a nonzero one as 0.
double feature_cosine(const Tensor& a, const Tensor& b);

/// feature_cosine averaged over the extractor's high-level stages.
double semantic_consistency(const loss::SurrogateExtractor& ext, const Tensor& image, const Tensor& reference);
/// feature_cosine averaged over the extractor's low-level stages.
double style_similarity(const loss::SurrogateExtractor& ext, const Tensor& image, const Tensor& reference);

/// Held-out evaluation: image i is translated from content x_A(i) with the
/// rendering of spec (i + 1) mod N as exemplar.
struct EvalSample {
  Tensor x_a, x_b, exemplar, output;
};

std::vector<EvalSample> translate_set(model::TranslationModel& model, const data::Dataset& ds,
                                      std::size_t limit = 0);

struct EvalReport {
  double swd = 0.0;                   // outputs vs ground-truth renderings
  double semantic_consistency = 0.0;  // mean over samples, output vs x_A
  double style_similarity = 0.0;      // mean over samples, output vs exemplar
  std::size_t samples = 0;

  /// The three `key=value` lines printed by `eval`.
  std::string format() const;
};

EvalReport evaluate(model::TranslationModel& model, const loss::SurrogateExtractor& ext, const data::Dataset& ds,
                    std::size_t limit = 0, const SwdOptions& swd_options = {});

}  // namespace cfftgan::train
