#pragma once

#include <optional>
#include <vector>
#include <torch/torch.h>

#include "recapture/domain.hpp"

namespace recapture {

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Per-pixel SSIM map (double) over the valid window centres of a C x H x W
/// pair already mapped to [0, 1], averaged across channels. Size (H-w+1) x (W-w+1).
torch::Tensor ssim_map(const torch::Tensor& a01, const torch::Tensor& b01, const SsimParams& params = {});

/// Mean SSIM of two portraits (pixel range [-1, 1] is mapped to [0, 1]).
double ssim(const PortraitImage& a, const PortraitImage& b, const SsimParams& params = {});

/// SSIM of the mask-multiplied images, averaged over window centres inside the
/// mask. Empty mask (no valid centre inside it) yields nullopt.
std::optional<double> masked_ssim(const PortraitImage& a, const PortraitImage& b, const PoseMask& mask,
                                  const SsimParams& params = {});

double mean_l1(const PortraitImage& a, const PortraitImage& b);

/// Fraction of pixels whose labels agree.
double pixel_accuracy(const torch::Tensor& predicted_labels, const torch::Tensor& truth_labels);

struct IouAccumulator {
  explicit IouAccumulator(int num_classes);
  void add(const torch::Tensor& predicted_labels, const torch::Tensor& truth_labels);
  /// Per-class IoU; nullopt where the class never appears in either map.
  std::vector<std::optional<double>> per_class() const;
  /// Mean over classes that appeared.
  double mean() const;

  std::vector<int64_t> intersection;
  std::vector<int64_t> uni;
};

}  // namespace recapture
