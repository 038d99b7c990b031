#pragma once

// Spectral normalization of learned linear maps and the layers built on it.

#include <torch/torch.h>

namespace recapture {

/// Divides a 2-D weight by its largest singular value, estimated by
/// `iterations` power-iteration steps. `u` (rows) and `v` (cols) persist
/// between calls; pass `update = false` to reuse them as-is (evaluation).
/// Gradients flow through the weight, not through the iterates. A zero
/// matrix is returned unchanged.
torch::Tensor spectral_normalize(const torch::Tensor& weight, torch::Tensor& u, torch::Tensor& v,
                                 int iterations = 1, bool update = true);

/// The current sigma estimate u^T W v for the stored iterates.
double spectral_sigma(const torch::Tensor& weight, const torch::Tensor& u, const torch::Tensor& v);

/// Holds a weight parameter plus its power-iteration buffers, registered on
/// the owning module under `<name>`, `<name>_u`, `<name>_v`.
class SpectralWeight {
 public:
  SpectralWeight() = default;
  SpectralWeight(torch::nn::Module& owner, const std::string& name, torch::Tensor init, bool enabled);

  /// The weight as used in forward: normalized when enabled. Runs one power
  /// iteration first when `training` is set.
  torch::Tensor get(bool training) const;
  const torch::Tensor& raw() const { return weight_; }
  bool enabled() const { return enabled_; }

 private:
  torch::Tensor weight_;
  mutable torch::Tensor u_;
  mutable torch::Tensor v_;
  bool enabled_ = false;
};

struct ConvOptions {
  int64_t in = 0;
  int64_t out = 0;
  int64_t kernel = 3;
  int64_t stride = 1;
  bool bias = true;
  bool spectral = true;
  bool norm = false;  // per-sample, per-channel normalization with a learned affine
};

/// 2-D convolution with padding (kernel - stride + 1) / 2, so even-sized
/// inputs shrink exactly by the stride, and optional spectral normalization
/// of the flattened kernel, optionally followed by instance normalization.
class SNConv2dImpl : public torch::nn::Module {
 public:
  explicit SNConv2dImpl(const ConvOptions& options);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor effective_weight() const;

  ConvOptions options;

 private:
  SpectralWeight weight_;
  torch::Tensor bias_;
  torch::Tensor norm_weight_;
  torch::Tensor norm_bias_;
};
TORCH_MODULE(SNConv2d);

/// Bias-free linear map (out x in) with optional spectral normalization.
/// Applies over the channel axis of B x C x H x W tensors or the last axis of
/// matrices.
class SNLinearMapImpl : public torch::nn::Module {
 public:
  SNLinearMapImpl(int64_t in, int64_t out, bool spectral, torch::Tensor init = {});
  torch::Tensor weight() const;
  torch::Tensor forward(const torch::Tensor& x);

 private:
  SpectralWeight weight_;
};
TORCH_MODULE(SNLinearMap);

inline torch::Tensor leaky(const torch::Tensor& x, double slope = 0.2) {
  return torch::leaky_relu(x, slope);
}

}  // namespace recapture
