#pragma once

// Layout prediction: maps (source layout, source pose, target pose) to a
// per-pixel class distribution for the target pose.

#include <torch/torch.h>

#include "recapture/domain.hpp"
#include "recapture/spectral_norm.hpp"

namespace recapture {

struct GeoNetConfig {
  int num_classes = 20;
  int base_width = 32;
  int max_width = 128;
  int depth = 4;
  int height = 64;
  int width = 64;
  bool spectral = true;
  bool norm = true;  // instance normalization after hidden convolutions

  void validate() const;
  int width_at(int level) const;
};

/// U-Net over S_A (+) K_A (+) K_B with a softmax head.
class GeometricNetImpl : public torch::nn::Module {
 public:
  explicit GeometricNetImpl(const GeoNetConfig& config);

  /// Batched logits, B x N x H x W.
  torch::Tensor logits(const torch::Tensor& source_layout, const torch::Tensor& source_pose,
                       const torch::Tensor& target_pose);
  /// Batched per-pixel distribution (softmax of logits).
  torch::Tensor forward(const torch::Tensor& source_layout, const torch::Tensor& source_pose,
                        const torch::Tensor& target_pose);

  const GeoNetConfig& config() const { return config_; }

 private:
  GeoNetConfig config_;
  SNConv2d stem_{nullptr};
  std::vector<SNConv2d> down_;
  std::vector<SNConv2d> down_refine_;
  std::vector<SNConv2d> up_;
  std::vector<SNConv2d> up_refine_;
  SNConv2d head_{nullptr};
};
TORCH_MODULE(GeometricNet);

/// Single-sample prediction in evaluation mode. Returns a soft layout.
SemanticLayout predict_layout(GeometricNet& net, const SemanticLayout& source_layout, const PoseHeatmap& source_pose,
                              const PoseHeatmap& target_pose);

/// Per-pixel argmax one-hot; ties go to the lower class index.
SemanticLayout harden(const SemanticLayout& layout);
/// Batched variant on B x N x H x W distributions.
torch::Tensor harden(const torch::Tensor& distribution);

/// Mean over pixels (and batch) of -sum_c truth_c * log(max(pred_c, eps)).
/// Accepts N x H x W or B x N x H x W.
torch::Tensor cross_entropy_loss(const torch::Tensor& pred, const torch::Tensor& truth, double eps = 1e-8);

}  // namespace recapture
