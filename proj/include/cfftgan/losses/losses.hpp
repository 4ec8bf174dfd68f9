#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cfftgan/data/dataset.hpp"
#include "cfftgan/translation/model.hpp"

namespace cfftgan::loss {

using num::Shape;
using num::Tensor;

/// Multi-scale features of one image (or batch), shallow to deep.
struct FeaturePyramid {
  std::vector<std::pair<std::string, Tensor>> levels;
  std::vector<int> low_level_ids;   // used by the contextual loss
  std::vector<int> high_level_ids;  // used by the semantic metric
  int perceptual_id = 0;            // deepest stage

  const Tensor& at(int i) const { return levels.at(static_cast<std::size_t>(i)).second; }
  int size() const { return static_cast<int>(levels.size()); }
};

/// Fixed random conv pyramid: per stage k3s1 conv -> relu -> 2x2 average
/// pool. Weights come from normal(0, sqrt(2 / fan_in)) seeded by `seed` and
/// never receive gradients.
class SurrogateExtractor {
 public:
  explicit SurrogateExtractor(std::uint64_t seed, int in_channels = 3, std::vector<int> widths = {8, 16, 32, 32, 32});

  /// (C,H,W) or (N,C,H,W) image -> pyramid. Differentiable with respect to
  /// the image only.
  FeaturePyramid operator()(const Tensor& image) const;

  std::uint64_t seed() const { return seed_; }
  int stages() const { return static_cast<int>(widths_.size()); }
  /// Weight tensors at the requested width, for inspection.
  const std::vector<Tensor>& weights(num::DType dtype) const;

 private:
  std::uint64_t seed_;
  std::vector<int> widths_;
  std::vector<Tensor> weights32_, weights64_;
};

struct LossWeights {
  double align = 10.0;
  double match = 10.0;
  double perc = 0.001;
  double cx = 10.0;
  double adv = 10.0;
  std::vector<double> mu{0.2, 0.2, 0.2, 0.2, 0.2};  // per extractor stage in l_match
  std::vector<double> omega{0.5, 0.5};              // per low-level stage in l_cx

  /// Throws ConfigError on a negative weight.
  void validate() const;
};

/// mean |a - b| over all elements.
Tensor mean_abs_diff(const Tensor& a, const Tensor& b);

/// mean |E_A(x_A) - E_B(x_B)| given the two encoder outputs.
Tensor l_align(const Tensor& content_feature, const Tensor& target_feature);
Tensor l_align(model::TranslationModel& model, const Tensor& x_a, const Tensor& x_b);

/// sum_l mu_l * mean |phi_l(x_hat) - phi_l(x_b)|.
Tensor l_match(const SurrogateExtractor& ext, const Tensor& x_hat, const Tensor& x_b,
               const std::vector<double>& mu);
Tensor l_match(const FeaturePyramid& a, const FeaturePyramid& b, const std::vector<double>& mu);

/// sqrt(mean (phi_h(x_hat) - phi_h(x_b))^2) on the deepest stage.
Tensor l_perc(const SurrogateExtractor& ext, const Tensor& x_hat, const Tensor& x_b);
Tensor l_perc(const FeaturePyramid& a, const FeaturePyramid& b);

struct CxOptions {
  double bandwidth = 0.5;  // h
  double eps = 1e-5;
};

/// Contextual similarity of feature sets X (N,D) and Y (M,D), or batched
/// (B,N,D) and (B,M,D) giving (B). Both sets are centred on Y's mean.
Tensor cx_similarity(const Tensor& x, const Tensor& y, const CxOptions& opts = {});

/// (C,H,W) -> (H*W, C), (N,C,H,W) -> (N, H*W, C).
Tensor feature_set(const Tensor& feature);

/// sum_l omega_l * mean over the batch of -log CX(phi_l(x_hat), phi_l(y)).
Tensor l_cx(const SurrogateExtractor& ext, const Tensor& x_hat, const Tensor& y, const std::vector<double>& omega,
            const CxOptions& opts = {});
Tensor l_cx(const FeaturePyramid& a, const FeaturePyramid& b, const std::vector<double>& omega,
            const CxOptions& opts = {});

/// Hinge losses on raw score maps: mean relu(1 - real) + mean relu(1 + fake),
/// and -mean fake.
Tensor hinge_d(const Tensor& real_scores, const Tensor& fake_scores);
Tensor hinge_g(const Tensor& fake_scores);

/// D-side loss with `fake` detached from any generator graph.
Tensor l_adv_d(model::TranslationModel& model, const Tensor& real, const Tensor& fake);
Tensor l_adv_g(model::TranslationModel& model, const Tensor& fake);

/// Training triple: content x_A, augmented exemplar x~_B, target x_B, plus
/// the optional third-domain input.
using data::PseudoTuple;

struct LossTerms {
  Tensor align, match, perc, cx, adv_g;
  Tensor generator;  // weighted sum
  Tensor output;     // generated image
};

/// Generator-side objective on one batch; the exemplar fed to the model and
/// the style target are both x~_B, the reconstruction target is x_B. Throws
/// NumericError naming the first non-finite term.
LossTerms generator_loss(model::TranslationModel& model, const SurrogateExtractor& ext, const PseudoTuple& batch,
                         const LossWeights& w);

/// The two halves of generator_loss, for callers that update D in between:
/// runs the model and fills every term except adv_g and the total.
LossTerms generator_content_terms(model::TranslationModel& model, const SurrogateExtractor& ext,
                                  const PseudoTuple& batch, const LossWeights& w);
/// Adds adv_g with the current discriminator and the weighted total.
void finish_generator_loss(model::TranslationModel& model, LossTerms& terms, const LossWeights& w);

/// adv * hinge_d(D(x_B), D(fake)). Throws NumericError when non-finite.
Tensor discriminator_loss(model::TranslationModel& model, const PseudoTuple& batch, const Tensor& fake,
                          const LossWeights& w);

struct TotalLoss {
  LossTerms g;
  Tensor d;
};

/// Both sides on one batch; the D side sees the generated image detached.
TotalLoss total_loss(model::TranslationModel& model, const SurrogateExtractor& ext, const PseudoTuple& batch,
                     const LossWeights& w);

}  // namespace cfftgan::loss
