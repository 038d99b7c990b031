#pragma once

// Layout graph reasoning: gather part-node features from a coordinate-space
// feature map, propagate them over the body-part graph, distribute them back.
//
//   Q_p = A V(feat)^T                   projection; A = softmax over pixels of
//                                       learned per-node spatial logits
//   Q_s[c] = mean of feat over part c   layout-guided pooling (zero when empty)
//   Q   = act([Q_p, Q_s] F^T)           fuse
//   Q  <- act(E_hat Q W_t), t = 1..n    propagate, E_hat = D^-1/2 (E + I) D^-1/2
//   out = O ((M Q')^T (A + P))          distribute; M mixes nodes, P is the
//                                       one-hot layout, O maps D -> C

#include <nlohmann/json.hpp>
#include <string>
#include <torch/torch.h>
#include <vector>

#include "recapture/spectral_norm.hpp"

namespace recapture {

struct PartGraph {
  torch::Tensor adjacency;  // N x N, {0, 1}, symmetric, zero diagonal
  std::vector<std::string> node_names;

  int num_nodes() const { return static_cast<int>(node_names.size()); }
  int num_edges() const;
  void validate() const;

  nlohmann::json to_json() const;
  static PartGraph from_json(const nlohmann::json& j);
};

/// The fixed skeleton graph for a known class scheme (20 or 7 classes).
PartGraph build_skeleton_graph(const std::vector<std::string>& class_names);

/// D^-1/2 (E + I) D^-1/2.
torch::Tensor normalized_adjacency(const torch::Tensor& adjacency);

/// Leaky rectifier with configurable slope; slope 1 is the identity.
struct GraphActivation {
  double slope = 0.2;
  torch::Tensor operator()(const torch::Tensor& x) const { return slope == 1.0 ? x : torch::leaky_relu(x, slope); }
};

struct LgrWeights {
  torch::Tensor assign_logits;            // N x (H*W)
  torch::Tensor value;                    // D x C
  torch::Tensor fuse;                     // D x (D + C)
  std::vector<torch::Tensor> propagate;   // n x (D x D)
  torch::Tensor node_mix;                 // N x N
  torch::Tensor out;                      // C x D
};

/// Spatial attention maps A (N x HW): softmax of the assignment logits over pixels.
torch::Tensor assignment_maps(const LgrWeights& weights);

/// feat: C x H x W -> N x D.
torch::Tensor gather_project(const LgrWeights& weights, const torch::Tensor& feat);
/// feat: C x H x W, labels: H x W int64 at the feature resolution -> N x C.
torch::Tensor gather_sample(const torch::Tensor& feat, const torch::Tensor& labels, int num_nodes);
torch::Tensor fuse(const LgrWeights& weights, const torch::Tensor& projected, const torch::Tensor& sampled,
                   const GraphActivation& act);
torch::Tensor propagate(const LgrWeights& weights, const torch::Tensor& nodes, const torch::Tensor& norm_adjacency,
                        int steps, const GraphActivation& act);
/// nodes: N x D -> C x H x W.
torch::Tensor distribute(const LgrWeights& weights, const torch::Tensor& nodes, const torch::Tensor& labels,
                         int64_t height, int64_t width);

/// The whole chain for one sample.
torch::Tensor lgr_forward(const LgrWeights& weights, const torch::Tensor& feat, const torch::Tensor& labels,
                          const torch::Tensor& norm_adjacency, int steps, const GraphActivation& act);

class LgrModuleImpl : public torch::nn::Module {
 public:
  LgrModuleImpl(const PartGraph& graph, int64_t channels, int64_t node_dim, int64_t height, int64_t width, int steps,
                bool spectral);

  /// feat: B x C x h x w; labels: B x H x W at any resolution.
  torch::Tensor forward(const torch::Tensor& feat, const torch::Tensor& labels);
  LgrWeights weights() const;
  int steps() const { return steps_; }

 private:
  int num_nodes_;
  int steps_;
  int64_t height_;
  int64_t width_;
  torch::Tensor norm_adjacency_;
  torch::Tensor assign_logits_;
  SNLinearMap value_{nullptr};
  SNLinearMap fuse_{nullptr};
  std::vector<SNLinearMap> propagate_;
  SNLinearMap node_mix_{nullptr};
  SNLinearMap out_{nullptr};
  GraphActivation act_;
};
TORCH_MODULE(LgrModule);

}  // namespace recapture
