#include "recapture/objectives.hpp"

#include "recapture/error.hpp"

namespace recapture {

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& config) {
  require(config.layers >= 1, "discriminator needs at least one layer");
  int in = config.in_channels + config.cond_channels;
  int width = config.base_width;
  for (int i = 0; i < config.layers; ++i) {
    convs_.push_back(
        register_module("conv" + std::to_string(i), SNConv2d(ConvOptions{in, width, 4, 2, true, config.spectral})));
    in = width;
    width = std::min(width * 2, 256);
  }
  head_ = register_module("head", SNConv2d(ConvOptions{in, 1, 3, 1, true, config.spectral}));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& input, const torch::Tensor& cond) {
  auto x = torch::cat({input, cond}, 1);
  for (auto& conv : convs_) x = leaky(conv->forward(x));
  return torch::sigmoid(head_->forward(x)).mean({1, 2, 3});
}

torch::Tensor adv_loss_d(const ProbabilityFn& d, const torch::Tensor& fake, const torch::Tensor& real,
                         const torch::Tensor& cond) {
  const auto p_real = d(real, cond);
  const auto p_fake = d(fake, cond);
  return (-torch::log(p_real.clamp_min(kLogEps)) - torch::log((1.0 - p_fake).clamp_min(kLogEps))).mean();
}

torch::Tensor adv_loss_g(const ProbabilityFn& d, const torch::Tensor& fake, const torch::Tensor& cond,
                         GeneratorLossMode mode) {
  const auto p_fake = d(fake, cond);
  if (mode == GeneratorLossMode::kNonSaturating) return (-torch::log(p_fake.clamp_min(kLogEps))).mean();
  return torch::log((1.0 - p_fake).clamp_min(kLogEps)).mean();
}

LossPair geo_losses(const ProbabilityFn& d1, const torch::Tensor& fake_layout, const torch::Tensor& real_layout,
                    const torch::Tensor& target_pose, GeneratorLossMode mode) {
  return {adv_loss_d(d1, fake_layout.detach(), real_layout, target_pose), adv_loss_g(d1, fake_layout, target_pose, mode)};
}

LossPair app_losses(const ProbabilityFn& d2, const ProbabilityFn& d3, const torch::Tensor& fake_image,
                    const torch::Tensor& real_image, const torch::Tensor& target_pose,
                    const torch::Tensor& source_image, GeneratorLossMode mode, double d3_weight) {
  const auto fake_detached = fake_image.detach();
  auto d = adv_loss_d(d2, fake_detached, real_image, target_pose);
  auto g = adv_loss_g(d2, fake_image, target_pose, mode);
  if (d3_weight != 0.0) {
    d = d + d3_weight * adv_loss_d(d3, fake_detached, real_image, source_image);
    g = g + d3_weight * adv_loss_g(d3, fake_image, source_image, mode);
  }
  return {d, g};
}

torch::Tensor l1_loss(const torch::Tensor& generated, const torch::Tensor& truth) {
  if (!generated.sizes().equals(truth.sizes())) fail(ErrorKind::kInvalidArgument, "L1 loss shape mismatch");
  return (generated - truth).abs().mean();
}

FeatureExtractor::FeatureExtractor(std::vector<Stage> stages, std::string provenance)
    : stages_(std::move(stages)), provenance_(std::move(provenance)) {
  for (auto& s : stages_) {
    s.weight = s.weight.detach().set_requires_grad(false);
    if (s.bias.defined()) s.bias = s.bias.detach().set_requires_grad(false);
  }
}

FeatureExtractor FeatureExtractor::seeded_random(uint64_t seed, int channels) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto conv = [&](int in, int out) {
    const double bound = std::sqrt(6.0 / (in * 9));
    auto w = at::empty({out, in, 3, 3}).uniform_(-bound, bound, gen);
    return Stage{w, torch::zeros({out}), true};
  };
  return FeatureExtractor({conv(3, channels), conv(channels, channels)}, "seeded-random:" + std::to_string(seed));
}

FeatureExtractor FeatureExtractor::box_average(int kernel) {
  auto w = torch::zeros({3, 3, kernel, kernel});
  for (int c = 0; c < 3; ++c) w[c][c].fill_(1.0 / (kernel * kernel));
  return FeatureExtractor({Stage{w, {}, false}}, "box-average:" + std::to_string(kernel));
}

torch::Tensor FeatureExtractor::operator()(const torch::Tensor& images) const {
  auto x = images;
  for (const auto& s : stages_) {
    const auto k = s.weight.size(2);
    const auto bias = s.bias.defined() ? s.bias.to(x.dtype()) : torch::Tensor();
    // Odd kernels keep the size; even kernels tile the input (stride = kernel).
    const int64_t stride = k % 2 == 1 ? 1 : k;
    const int64_t pad = k % 2 == 1 ? k / 2 : 0;
    x = torch::conv2d(x, s.weight.to(x.dtype()), bias, torch::IntArrayRef{stride}, torch::IntArrayRef{pad});
    if (s.relu) x = torch::relu(x);
  }
  return x;
}

torch::Tensor perceptual_loss(const FeatureExtractor& extractor, const torch::Tensor& generated,
                              const torch::Tensor& truth) {
  if (!generated.sizes().equals(truth.sizes())) fail(ErrorKind::kInvalidArgument, "perceptual loss shape mismatch");
  return (extractor(generated) - extractor(truth)).abs().mean();
}

void LossWeights::validate() const {
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0) {
    fail(ErrorKind::kInvalidArgument, "loss weights must be non-negative");
  }
}

TotalLosses total_losses(const LossWeights& w, const LossParts& p, bool use_d_image_in_g) {
  w.validate();
  const auto& image_term = use_d_image_in_g ? p.d_image : p.g_image;
  return {w.lambda1 * p.d_layout + w.lambda2 * p.d_image,
          w.lambda1 * p.g_layout + w.lambda2 * image_term + w.lambda3 * (p.l1 + p.perceptual) + w.lambda4 * p.ce};
}

}  // namespace recapture
