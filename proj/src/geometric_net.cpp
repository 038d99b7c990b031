#include "recapture/geometric_net.hpp"

#include "recapture/error.hpp"

namespace recapture {

void GeoNetConfig::validate() const {
  require(num_classes >= 2, "geometric net needs at least 2 classes");
  require(depth >= 1 && base_width >= 1, "geometric net depth/width must be positive");
  const int factor = 1 << depth;
  require(height % factor == 0 && width % factor == 0, "resolution must be divisible by 2^depth");
}

int GeoNetConfig::width_at(int level) const { return std::min(max_width, base_width << level); }

GeometricNetImpl::GeometricNetImpl(const GeoNetConfig& config) : config_(config) {
  config_.validate();
  const bool sn = config_.spectral;
  const bool nm = config_.norm;
  const int in_channels = config_.num_classes + 2 * kNumKeypoints;
  stem_ = register_module("stem", SNConv2d(ConvOptions{in_channels, config_.width_at(0), 3, 1, true, sn, nm}));
  for (int level = 1; level <= config_.depth; ++level) {
    const int in = config_.width_at(level - 1);
    const int out = config_.width_at(level);
    down_.push_back(register_module("down" + std::to_string(level), SNConv2d(ConvOptions{in, out, 4, 2, true, sn, nm})));
    down_refine_.push_back(
        register_module("down_refine" + std::to_string(level), SNConv2d(ConvOptions{out, out, 3, 1, true, sn, nm})));
  }
  for (int level = config_.depth - 1; level >= 0; --level) {
    const int below = config_.width_at(level + 1);
    const int skip = config_.width_at(level);
    up_.push_back(
        register_module("up" + std::to_string(level), SNConv2d(ConvOptions{below + skip, skip, 3, 1, true, sn, nm})));
    up_refine_.push_back(
        register_module("up_refine" + std::to_string(level), SNConv2d(ConvOptions{skip, skip, 3, 1, true, sn, nm})));
  }
  head_ = register_module("head", SNConv2d(ConvOptions{config_.width_at(0), config_.num_classes, 1, 1, true, sn}));
}

torch::Tensor GeometricNetImpl::logits(const torch::Tensor& source_layout, const torch::Tensor& source_pose,
                                       const torch::Tensor& target_pose) {
  require(source_layout.dim() == 4 && source_pose.dim() == 4 && target_pose.dim() == 4,
          "geometric net expects batched B x C x H x W inputs");
  require(source_layout.size(1) == config_.num_classes, "source layout class count mismatch");
  const auto h = source_layout.size(2);
  const auto w = source_layout.size(3);
  if (h != config_.height || w != config_.width || source_pose.size(2) != h || source_pose.size(3) != w ||
      target_pose.size(2) != h || target_pose.size(3) != w) {
    fail(ErrorKind::kInvalidArgument, "geometric net input resolution mismatch");
  }

  auto x = leaky(stem_->forward(torch::cat({source_layout, source_pose, target_pose}, 1)));
  std::vector<torch::Tensor> skips = {x};
  for (int level = 1; level <= config_.depth; ++level) {
    x = leaky(down_[level - 1]->forward(x));
    x = leaky(down_refine_[level - 1]->forward(x));
    skips.push_back(x);
  }
  for (int i = 0; i < config_.depth; ++i) {
    const int level = config_.depth - 1 - i;
    x = torch::upsample_nearest2d(x, {}, std::vector<double>{2.0, 2.0});
    x = leaky(up_[i]->forward(torch::cat({x, skips[level]}, 1)));
    x = leaky(up_refine_[i]->forward(x));
  }
  return head_->forward(x);
}

torch::Tensor GeometricNetImpl::forward(const torch::Tensor& source_layout, const torch::Tensor& source_pose,
                                        const torch::Tensor& target_pose) {
  return torch::softmax(logits(source_layout, source_pose, target_pose), 1);
}

SemanticLayout predict_layout(GeometricNet& net, const SemanticLayout& source_layout, const PoseHeatmap& source_pose,
                              const PoseHeatmap& target_pose) {
  if (!source_layout.is_hard()) fail(ErrorKind::kInvalidArgument, "source layout must be hard");
  const auto h = source_layout.height();
  const auto w = source_layout.width();
  if (source_pose.channels.size(1) != h || source_pose.channels.size(2) != w || target_pose.channels.size(1) != h ||
      target_pose.channels.size(2) != w) {
    fail(ErrorKind::kInvalidArgument, "layout and pose resolutions differ");
  }
  torch::NoGradGuard no_grad;
  const bool was_training = net->is_training();
  net->eval();
  auto out = net->forward(source_layout.onehot.unsqueeze(0), source_pose.channels.unsqueeze(0),
                          target_pose.channels.unsqueeze(0));
  net->train(was_training);
  return {out.squeeze(0).contiguous(), source_layout.class_names};
}

torch::Tensor harden(const torch::Tensor& distribution) {
  require(distribution.dim() == 4, "batched harden expects B x N x H x W");
  const auto n = distribution.size(1);
  auto max_values = std::get<0>(distribution.max(1, /*keepdim=*/true));
  auto index = torch::arange(n, torch::TensorOptions().dtype(torch::kLong)).view({1, -1, 1, 1}).expand_as(distribution);
  auto labels = torch::where(distribution == max_values, index, torch::full_like(index, n)).amin(1);
  return torch::one_hot(labels, n).permute({0, 3, 1, 2}).to(distribution.scalar_type()).contiguous();
}

SemanticLayout harden(const SemanticLayout& layout) {
  return {harden(layout.onehot.unsqueeze(0)).squeeze(0), layout.class_names};
}

torch::Tensor cross_entropy_loss(const torch::Tensor& pred, const torch::Tensor& truth, double eps) {
  if (!pred.sizes().equals(truth.sizes())) fail(ErrorKind::kInvalidArgument, "cross-entropy shape mismatch");
  require(pred.dim() == 3 || pred.dim() == 4, "cross-entropy expects N x H x W or B x N x H x W");
  const int class_dim = pred.dim() == 4 ? 1 : 0;
  auto per_pixel = -(truth * torch::log(pred.clamp_min(eps))).sum(class_dim);
  return per_pixel.mean();
}

}  // namespace recapture
