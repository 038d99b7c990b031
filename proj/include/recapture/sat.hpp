#pragma once

// Semantic-aware attentive transfer.
//
// For every part class c and every target pixel j of that class, the output
// feature is a softmax-weighted mean of the encoder features at the source
// pixels of the same class:
//
//   out_j = sum_{i in src(c)} W_ji * enc_i,   W_j = softmax_i( <g(dec_j), theta(enc_i)> )
//
// Background pixels, and target pixels whose class is absent from the source,
// receive zeros. Per-class target regions are disjoint, so the per-class
// outputs are scattered into one tensor.

#include <nlohmann/json.hpp>
#include <optional>
#include <torch/torch.h>
#include <vector>

#include "recapture/domain.hpp"
#include "recapture/spectral_norm.hpp"

namespace recapture {

/// Key maps of the attention scores, each C_k x C, applied per pixel.
struct SatWeights {
  torch::Tensor g;      // applied to decoder features
  torch::Tensor theta;  // applied to encoder features
};

/// s_i = <g(dec at j), theta(enc at i)> for each i in `source`, in order.
/// Features are C x H x W.
torch::Tensor sat_scores(const SatWeights& weights, const torch::Tensor& dec_feat, const torch::Tensor& enc_feat,
                         Pixel j, const std::vector<Pixel>& source);

/// Max-subtracted softmax over a non-empty score vector.
torch::Tensor masked_softmax(const torch::Tensor& scores);

/// Transfers one sample. `enc_feat`, `dec_feat` are C x H x W; the label maps
/// are H x W int64 at the feature resolution.
torch::Tensor sat_transfer(const SatWeights& weights, const torch::Tensor& enc_feat, const torch::Tensor& dec_feat,
                           const torch::Tensor& source_labels, const torch::Tensor& target_labels, int num_classes);

/// Batched variant: features B x C x H x W, labels B x H x W.
torch::Tensor sat_transfer_batch(const SatWeights& weights, const torch::Tensor& enc_feat,
                                 const torch::Tensor& dec_feat, const torch::Tensor& source_labels,
                                 const torch::Tensor& target_labels, int num_classes);

struct AttentionRecord {
  Pixel pixel;
  int part = 0;
  std::vector<Pixel> coords;
  std::vector<double> weights;

  nlohmann::json to_json() const;
};

/// The weights sat_transfer uses at target pixel `j`; nullopt when `j` is
/// background or its class is absent from the source.
std::optional<AttentionRecord> sat_attention_map(const SatWeights& weights, const torch::Tensor& enc_feat,
                                                 const torch::Tensor& dec_feat, const torch::Tensor& source_labels,
                                                 const torch::Tensor& target_labels, Pixel j);

/// Learned SAT block: owns g and theta (spectrally normalized) and resizes
/// layouts to the feature grid by nearest neighbour.
class SatModuleImpl : public torch::nn::Module {
 public:
  SatModuleImpl(int64_t channels, int64_t key_channels, int num_classes, bool spectral);

  /// enc/dec: B x C x h x w. Labels: B x H x W at any resolution.
  torch::Tensor forward(const torch::Tensor& enc_feat, const torch::Tensor& dec_feat,
                        const torch::Tensor& source_labels, const torch::Tensor& target_labels);
  SatWeights weights() const;

 private:
  int num_classes_;
  SNLinearMap g_{nullptr};
  SNLinearMap theta_{nullptr};
};
TORCH_MODULE(SatModule);

/// B x H x W labels resized to h x w by nearest neighbour.
torch::Tensor resize_labels(const torch::Tensor& labels, int64_t height, int64_t width);

}  // namespace recapture
