#include "recapture/lgr.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include "recapture/domain.hpp"
#include "recapture/error.hpp"
#include "recapture/sat.hpp"

namespace recapture {

namespace {

using Edge = std::pair<const char*, const char*>;

// Anatomical adjacency plus left/right counterpart edges.
const std::vector<Edge>& lip20_edges() {
  static const std::vector<Edge> edges = {
      {"hat", "hair"},           {"hat", "face"},           {"hair", "face"},
      {"sunglasses", "face"},    {"face", "upper_clothes"}, {"face", "coat"},
      {"face", "dress"},         {"face", "jumpsuits"},     {"face", "scarf"},
      {"scarf", "upper_clothes"}, {"scarf", "coat"},        {"upper_clothes", "coat"},
      {"upper_clothes", "left_arm"}, {"upper_clothes", "right_arm"}, {"coat", "left_arm"},
      {"coat", "right_arm"},     {"dress", "left_arm"},     {"dress", "right_arm"},
      {"jumpsuits", "left_arm"}, {"jumpsuits", "right_arm"}, {"glove", "left_arm"},
      {"glove", "right_arm"},    {"upper_clothes", "pants"}, {"upper_clothes", "skirt"},
      {"coat", "pants"},         {"coat", "skirt"},         {"dress", "left_leg"},
      {"dress", "right_leg"},    {"jumpsuits", "left_leg"}, {"jumpsuits", "right_leg"},
      {"pants", "left_leg"},     {"pants", "right_leg"},    {"skirt", "left_leg"},
      {"skirt", "right_leg"},    {"socks", "left_leg"},     {"socks", "right_leg"},
      {"socks", "left_shoe"},    {"socks", "right_shoe"},   {"left_leg", "left_shoe"},
      {"right_leg", "right_shoe"}, {"left_arm", "right_arm"}, {"left_leg", "right_leg"},
      {"left_shoe", "right_shoe"},
  };
  return edges;
}

const std::vector<Edge>& coarse7_edges() {
  static const std::vector<Edge> edges = {
      {"head", "upper_body"}, {"upper_body", "arms"}, {"upper_body", "lower_body"},
      {"lower_body", "legs"}, {"legs", "shoes"},
  };
  return edges;
}

}  // namespace

int PartGraph::num_edges() const { return static_cast<int>(adjacency.triu(1).sum().item<double>()); }

void PartGraph::validate() const {
  const auto n = num_nodes();
  require(adjacency.dim() == 2 && adjacency.size(0) == n && adjacency.size(1) == n,
          "adjacency must be N x N with one name per node");
  require(((adjacency == 0) | (adjacency == 1)).all().item<bool>(), "adjacency entries must be 0 or 1");
  require(adjacency.equal(adjacency.t()), "adjacency must be symmetric");
  require((adjacency.diagonal() == 0).all().item<bool>(), "adjacency diagonal must be zero");
}

nlohmann::json PartGraph::to_json() const {
  nlohmann::json edges = nlohmann::json::array();
  const auto a = adjacency.to(torch::kFloat32).contiguous();
  auto acc = a.accessor<float, 2>();
  for (int i = 0; i < num_nodes(); ++i) {
    for (int j = i + 1; j < num_nodes(); ++j) {
      if (acc[i][j] != 0.0f) edges.push_back({i, j});
    }
  }
  return {{"node_names", node_names}, {"edges", edges}};
}

PartGraph PartGraph::from_json(const nlohmann::json& j) {
  PartGraph g;
  g.node_names = j.at("node_names").get<std::vector<std::string>>();
  const auto n = static_cast<int64_t>(g.node_names.size());
  g.adjacency = torch::zeros({n, n}, torch::kFloat32);
  for (const auto& e : j.at("edges")) {
    const auto a = e.at(0).get<int64_t>();
    const auto b = e.at(1).get<int64_t>();
    require(a >= 0 && a < n && b >= 0 && b < n && a != b, "graph edge out of range");
    g.adjacency[a][b] = 1.0f;
    g.adjacency[b][a] = 1.0f;
  }
  g.validate();
  return g;
}

PartGraph build_skeleton_graph(const std::vector<std::string>& class_names) {
  const std::vector<Edge>* edges = nullptr;
  if (class_names == lip20_class_names()) {
    edges = &lip20_edges();
  } else if (class_names == coarse7_class_names()) {
    edges = &coarse7_edges();
  } else {
    fail(ErrorKind::kInvalidArgument, "no skeleton graph for this class scheme");
  }
  PartGraph g;
  g.node_names = class_names;
  const auto n = static_cast<int64_t>(class_names.size());
  g.adjacency = torch::zeros({n, n}, torch::kFloat32);
  for (const auto& [a, b] : *edges) {
    const int i = class_index(class_names, a);
    const int j = class_index(class_names, b);
    g.adjacency[i][j] = 1.0f;
    g.adjacency[j][i] = 1.0f;
  }
  g.validate();
  return g;
}

torch::Tensor normalized_adjacency(const torch::Tensor& adjacency) {
  require(adjacency.dim() == 2 && adjacency.size(0) == adjacency.size(1), "adjacency must be square");
  const auto with_loops = adjacency + torch::eye(adjacency.size(0), adjacency.options());
  const auto inv_sqrt_degree = with_loops.sum(1).rsqrt();
  return inv_sqrt_degree.unsqueeze(1) * with_loops * inv_sqrt_degree.unsqueeze(0);
}

torch::Tensor assignment_maps(const LgrWeights& weights) { return torch::softmax(weights.assign_logits, 1); }

torch::Tensor gather_project(const LgrWeights& weights, const torch::Tensor& feat) {
  require(feat.dim() == 3, "LGR features must be C x H x W");
  const auto channels = feat.size(0);
  if (weights.value.size(1) != channels || weights.assign_logits.size(1) != feat.size(1) * feat.size(2)) {
    fail(ErrorKind::kInvalidArgument, "LGR projection weights do not match the feature shape");
  }
  const auto values = torch::mm(weights.value, feat.reshape({channels, -1}));  // D x HW
  return torch::mm(assignment_maps(weights), values.t());                      // N x D
}

torch::Tensor gather_sample(const torch::Tensor& feat, const torch::Tensor& labels, int num_nodes) {
  require(feat.dim() == 3, "LGR features must be C x H x W");
  if (labels.dim() != 2 || labels.size(0) != feat.size(1) || labels.size(1) != feat.size(2)) {
    fail(ErrorKind::kInvalidArgument, "layout resolution does not match the feature grid");
  }
  const auto membership = torch::one_hot(labels.reshape({-1}).to(torch::kLong), num_nodes).t().to(feat.dtype());
  const auto counts = membership.sum(1, /*keepdim=*/true);
  const auto sums = torch::mm(membership, feat.reshape({feat.size(0), -1}).t());  // N x C
  return sums / counts.clamp_min(1.0);
}

torch::Tensor fuse(const LgrWeights& weights, const torch::Tensor& projected, const torch::Tensor& sampled,
                   const GraphActivation& act) {
  require(projected.size(0) == sampled.size(0), "fuse inputs must have the same node count");
  return act(torch::mm(torch::cat({projected, sampled}, 1), weights.fuse.t()));
}

torch::Tensor propagate(const LgrWeights& weights, const torch::Tensor& nodes, const torch::Tensor& norm_adjacency,
                        int steps, const GraphActivation& act) {
  require(steps >= 1, "propagation needs at least one step");
  require(static_cast<size_t>(steps) <= weights.propagate.size(), "more propagation steps than weight matrices");
  auto q = nodes;
  for (int t = 0; t < steps; ++t) q = act(torch::mm(torch::mm(norm_adjacency, q), weights.propagate[t]));
  return q;
}

torch::Tensor distribute(const LgrWeights& weights, const torch::Tensor& nodes, const torch::Tensor& labels,
                         int64_t height, int64_t width) {
  const auto n = weights.assign_logits.size(0);
  if (nodes.dim() != 2 || nodes.size(0) != n || nodes.size(1) != weights.out.size(1)) {
    fail(ErrorKind::kInvalidArgument, "distributed node features have the wrong shape");
  }
  if (weights.assign_logits.size(1) != height * width || labels.dim() != 2 || labels.size(0) != height ||
      labels.size(1) != width) {
    fail(ErrorKind::kInvalidArgument, "distribution target shape does not match the weights/layout");
  }
  const auto placement = assignment_maps(weights) +
                         torch::one_hot(labels.reshape({-1}).to(torch::kLong), n).t().to(nodes.dtype());
  const auto mixed = torch::mm(weights.node_mix, nodes);                // N x D
  const auto coords = torch::mm(mixed.t(), placement);                  // D x HW
  return torch::mm(weights.out, coords).view({weights.out.size(0), height, width});
}

torch::Tensor lgr_forward(const LgrWeights& weights, const torch::Tensor& feat, const torch::Tensor& labels,
                          const torch::Tensor& norm_adjacency, int steps, const GraphActivation& act) {
  const auto n = static_cast<int>(weights.assign_logits.size(0));
  const auto q = fuse(weights, gather_project(weights, feat), gather_sample(feat, labels, n), act);
  const auto q_prime = propagate(weights, q, norm_adjacency, steps, act);
  return distribute(weights, q_prime, labels, feat.size(1), feat.size(2));
}

LgrModuleImpl::LgrModuleImpl(const PartGraph& graph, int64_t channels, int64_t node_dim, int64_t height,
                             int64_t width, int steps, bool spectral)
    : num_nodes_(graph.num_nodes()), steps_(steps), height_(height), width_(width) {
  graph.validate();
  require(steps >= 1, "LGR needs at least one propagation step");
  norm_adjacency_ = register_buffer("norm_adjacency", normalized_adjacency(graph.adjacency.to(torch::kFloat32)));
  assign_logits_ = register_parameter("assign_logits", torch::zeros({num_nodes_, height * width}));
  value_ = register_module("value", SNLinearMap(channels, node_dim, spectral));
  fuse_ = register_module("fuse", SNLinearMap(node_dim + channels, node_dim, spectral));
  for (int t = 0; t < steps; ++t) {
    propagate_.push_back(register_module("propagate" + std::to_string(t), SNLinearMap(node_dim, node_dim, spectral)));
  }
  node_mix_ = register_module("node_mix", SNLinearMap(num_nodes_, num_nodes_, spectral, torch::eye(num_nodes_)));
  out_ = register_module("out", SNLinearMap(node_dim, channels, spectral));
}

LgrWeights LgrModuleImpl::weights() const {
  LgrWeights w;
  w.assign_logits = assign_logits_;
  w.value = value_->weight();
  w.fuse = fuse_->weight();
  for (const auto& p : propagate_) w.propagate.push_back(p->weight().t());
  w.node_mix = node_mix_->weight();
  w.out = out_->weight();
  return w;
}

torch::Tensor LgrModuleImpl::forward(const torch::Tensor& feat, const torch::Tensor& labels) {
  require(feat.dim() == 4 && feat.size(2) == height_ && feat.size(3) == width_,
          "LGR feature map does not match its configured grid");
  const auto w = weights();
  const auto small = resize_labels(labels, height_, width_);
  std::vector<torch::Tensor> outs;
  for (int64_t b = 0; b < feat.size(0); ++b) {
    outs.push_back(lgr_forward(w, feat[b], small[b], norm_adjacency_, steps_, act_));
  }
  return torch::stack(outs);
}

}  // namespace recapture
