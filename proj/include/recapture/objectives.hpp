#pragma once

// Discriminators and every loss term of the two-stage objective.
//
//   L_D = l1 * L_D^S + l2 * L_D^H
//   L_G = l1 * L_G^S + l2 * L_G^H + l3 * (L_1 + L_p) + l4 * L_s
//
// where the ^S terms use the layout discriminator D1 (conditioned on K_B) and
// the ^H terms sum the pose discriminator D2 (conditioned on K_B) and the
// identity discriminator D3 (conditioned on H_A).

#include <functional>
#include <string>
#include <torch/torch.h>

#include "recapture/spectral_norm.hpp"

namespace recapture {

inline constexpr double kLogEps = 1e-8;

struct DiscriminatorConfig {
  int in_channels = 3;
  int cond_channels = 18;
  int base_width = 32;
  int layers = 3;  // stride-2 convolutions before the probability head
  bool spectral = true;
};

/// Downsampling conv stack ending in a sigmoid probability map, averaged to
/// one probability per sample. The condition is concatenated channel-wise.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorConfig& config);
  /// Returns B probabilities in (0, 1).
  torch::Tensor forward(const torch::Tensor& input, const torch::Tensor& cond);

 private:
  std::vector<SNConv2d> convs_;
  SNConv2d head_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Anything mapping (input, condition) to B probabilities.
using ProbabilityFn = std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;

inline ProbabilityFn as_fn(Discriminator& d) {
  return [d](const torch::Tensor& x, const torch::Tensor& c) mutable { return d->forward(x, c); };
}

/// -log D(real|c) - log(1 - D(fake|c)), batch-averaged.
torch::Tensor adv_loss_d(const ProbabilityFn& d, const torch::Tensor& fake, const torch::Tensor& real,
                         const torch::Tensor& cond);

enum class GeneratorLossMode { kSaturating, kNonSaturating };

/// Saturating: log(1 - D(fake|c)). Non-saturating: -log D(fake|c).
torch::Tensor adv_loss_g(const ProbabilityFn& d, const torch::Tensor& fake, const torch::Tensor& cond,
                         GeneratorLossMode mode = GeneratorLossMode::kSaturating);

struct LossPair {
  torch::Tensor d;  // discriminator-side
  torch::Tensor g;  // generator-side
};

/// Layout adversarial terms (D1, condition K_B). `fake_for_d` should be detached.
LossPair geo_losses(const ProbabilityFn& d1, const torch::Tensor& fake_layout, const torch::Tensor& real_layout,
                    const torch::Tensor& target_pose, GeneratorLossMode mode = GeneratorLossMode::kSaturating);

/// Image adversarial terms: D2 (condition K_B) plus D3 (condition H_A), each
/// scaled by its weight (d3_weight = 0 gives a pose-only conditional GAN).
LossPair app_losses(const ProbabilityFn& d2, const ProbabilityFn& d3, const torch::Tensor& fake_image,
                    const torch::Tensor& real_image, const torch::Tensor& target_pose,
                    const torch::Tensor& source_image, GeneratorLossMode mode = GeneratorLossMode::kSaturating,
                    double d3_weight = 1.0);

torch::Tensor l1_loss(const torch::Tensor& generated, const torch::Tensor& truth);

/// Fixed (frozen) convolutional feature map used by the perceptual loss.
class FeatureExtractor {
 public:
  struct Stage {
    torch::Tensor weight;  // out x in x k x k
    torch::Tensor bias;    // out (may be undefined)
    bool relu = true;
  };

  FeatureExtractor(std::vector<Stage> stages, std::string provenance);

  /// Two 3x3 conv + ReLU stages with seed-deterministic random weights.
  static FeatureExtractor seeded_random(uint64_t seed, int channels = 16);
  /// One k x k box filter per colour channel, no nonlinearity.
  static FeatureExtractor box_average(int kernel);

  torch::Tensor operator()(const torch::Tensor& images) const;
  const std::string& provenance() const { return provenance_; }

 private:
  std::vector<Stage> stages_;
  std::string provenance_;
};

/// Mean |v(a) - v(b)|.
torch::Tensor perceptual_loss(const FeatureExtractor& extractor, const torch::Tensor& generated,
                              const torch::Tensor& truth);

struct LossWeights {
  double lambda1 = 1.0;   // layout adversarial
  double lambda2 = 5.0;   // image adversarial
  double lambda3 = 2.0;   // L1 + perceptual
  double lambda4 = 50.0;  // layout cross-entropy

  static LossWeights deepfashion() { return {1.0, 5.0, 2.0, 50.0}; }
  static LossWeights market() { return {1.0, 5.0, 10.0, 50.0}; }
  void validate() const;
};

struct LossParts {
  torch::Tensor d_layout;   // L_D^S
  torch::Tensor g_layout;   // L_G^S
  torch::Tensor d_image;    // L_D^H
  torch::Tensor g_image;    // L_G^H
  torch::Tensor l1;         // L_1
  torch::Tensor perceptual; // L_p
  torch::Tensor ce;         // L_s
};

struct TotalLosses {
  torch::Tensor d;
  torch::Tensor g;
};

/// `use_d_image_in_g` substitutes L_D^H for L_G^H in the generator total, the
/// literal reading of the published objective.
TotalLosses total_losses(const LossWeights& weights, const LossParts& parts, bool use_d_image_in_g = false);

}  // namespace recapture
