#pragma once

// Appearance generator: a source encoder over H_A (+) S_A (+) K_A, a target
// signal encoder over S_B (+) K_B, and a decoder that consumes both. SAT
// output is concatenated at decoder level `sat_level`, LGR output at
// `lgr_level`. Level k has spatial size resolution / 2^k.

#include <torch/torch.h>

#include "recapture/domain.hpp"
#include "recapture/lgr.hpp"
#include "recapture/sat.hpp"
#include "recapture/spectral_norm.hpp"

namespace recapture {

struct AppearanceConfig {
  int num_classes = 20;
  int height = 64;
  int width = 64;
  int depth = 4;           // L
  int base_width = 16;
  int max_width = 128;
  int signal_width = 8;    // target-signal channels at level 0
  int sat_level = 1;       // l
  int lgr_level = 4;       // r
  int lgr_steps = 2;       // n
  int node_dim = 0;        // D; 0 means "same as the channel count at lgr_level"
  int key_dim = 0;         // C_k; 0 means half the channel count at sat_level
  bool use_sat = true;
  bool use_lgr = true;
  bool spectral = true;
  bool norm = true;  // instance normalization after hidden convolutions

  void validate() const;
  int width_at(int level) const;
  int signal_width_at(int level) const;
};

/// Multi-scale features. Source pyramids hold levels 1 .. depth at indices
/// 0 .. depth-1; target-signal pyramids hold levels 0 .. depth.
using FeaturePyramid = std::vector<torch::Tensor>;

class AppearanceNetImpl : public torch::nn::Module {
 public:
  AppearanceNetImpl(const AppearanceConfig& config, const PartGraph& graph);

  FeaturePyramid encode_source(const torch::Tensor& image, const torch::Tensor& layout, const torch::Tensor& pose);
  FeaturePyramid encode_target_signal(const torch::Tensor& layout, const torch::Tensor& pose);

  /// All inputs batched. Layouts are one-hot B x N x H x W; target layout hard.
  torch::Tensor forward(const torch::Tensor& source_image, const torch::Tensor& source_layout,
                        const torch::Tensor& source_pose, const torch::Tensor& target_layout,
                        const torch::Tensor& target_pose);

  const AppearanceConfig& config() const { return config_; }
  SatModule& sat() { return sat_; }
  LgrModule& lgr() { return lgr_; }

  /// Decoder feature at the SAT level captured by the last forward (for
  /// attention inspection). Undefined before the first forward.
  const torch::Tensor& last_sat_decoder_feature() const { return last_sat_dec_; }
  const torch::Tensor& last_sat_encoder_feature() const { return last_sat_enc_; }

 private:
  AppearanceConfig config_;
  SNConv2d source_stem_{nullptr};
  std::vector<SNConv2d> source_down_;
  std::vector<SNConv2d> source_refine_;
  SNConv2d target_stem_{nullptr};
  std::vector<SNConv2d> target_down_;
  std::vector<SNConv2d> decoder_in_;      // index = level
  std::vector<SNConv2d> decoder_refine_;  // index = level
  SNConv2d to_rgb_{nullptr};
  SatModule sat_{nullptr};
  LgrModule lgr_{nullptr};
  torch::Tensor last_sat_dec_;
  torch::Tensor last_sat_enc_;
};
TORCH_MODULE(AppearanceNet);

/// Single-sample generation in evaluation mode.
PortraitImage generate(AppearanceNet& net, const PortraitImage& source_image, const SemanticLayout& source_layout,
                       const PoseHeatmap& source_pose, const SemanticLayout& target_layout,
                       const PoseHeatmap& target_pose);

}  // namespace recapture
