#include "recapture/appearance_net.hpp"

#include "recapture/error.hpp"

namespace recapture {

void AppearanceConfig::validate() const {
  require(depth >= 1 && base_width >= 1 && signal_width >= 1, "appearance depth/widths must be positive");
  const int factor = 1 << depth;
  require(height % factor == 0 && width % factor == 0, "resolution must be divisible by 2^depth");
  require(sat_level >= 1 && sat_level <= depth, "SAT level must lie in [1, depth]");
  require(lgr_level >= 1 && lgr_level <= depth, "LGR level must lie in [1, depth]");
  require(lgr_steps >= 1, "LGR needs at least one propagation step");
}

int AppearanceConfig::width_at(int level) const { return std::min(max_width, base_width << level); }

int AppearanceConfig::signal_width_at(int level) const { return std::min(max_width / 2, signal_width << level); }

AppearanceNetImpl::AppearanceNetImpl(const AppearanceConfig& config, const PartGraph& graph) : config_(config) {
  config_.validate();
  require(graph.num_nodes() == config_.num_classes, "part graph size must equal the class count");
  const bool sn = config_.spectral;
  const bool nm = config_.norm;
  const int n = config_.num_classes;
  const int depth = config_.depth;

  source_stem_ = register_module("source_stem", SNConv2d(ConvOptions{3 + n + kNumKeypoints, config_.width_at(0), 3, 1, true, sn, nm}));
  target_stem_ = register_module("target_stem", SNConv2d(ConvOptions{n + kNumKeypoints, config_.signal_width_at(0), 3, 1, true, sn, nm}));
  for (int k = 1; k <= depth; ++k) {
    const auto tag = std::to_string(k);
    source_down_.push_back(register_module(
        "source_down" + tag, SNConv2d(ConvOptions{config_.width_at(k - 1), config_.width_at(k), 4, 2, true, sn, nm})));
    source_refine_.push_back(register_module(
        "source_refine" + tag, SNConv2d(ConvOptions{config_.width_at(k), config_.width_at(k), 3, 1, true, sn, nm})));
    target_down_.push_back(register_module(
        "target_down" + tag,
        SNConv2d(ConvOptions{config_.signal_width_at(k - 1), config_.signal_width_at(k), 4, 2, true, sn, nm})));
  }

  auto extra = [&](int level) {
    return config_.width_at(level) * ((config_.lgr_level == level ? 1 : 0) + (config_.sat_level == level ? 1 : 0));
  };
  decoder_in_.resize(depth + 1, nullptr);
  decoder_refine_.resize(depth + 1, nullptr);
  for (int level = depth; level >= 0; --level) {
    const int w = config_.width_at(level);
    int in = config_.signal_width_at(level);
    if (level == depth) {
      in += w;  // deepest source feature
    } else {
      in += config_.width_at(level + 1) + extra(level + 1);  // upsampled decoder stream
      if (level >= 1) in += w;                                // source skip
    }
    const auto tag = std::to_string(level);
    decoder_in_[level] = register_module("decoder_in" + tag, SNConv2d(ConvOptions{in, w, 3, 1, true, sn, nm}));
    decoder_refine_[level] = register_module("decoder_refine" + tag, SNConv2d(ConvOptions{w, w, 3, 1, true, sn, nm}));
  }
  to_rgb_ = register_module("to_rgb", SNConv2d(ConvOptions{config_.width_at(0) + extra(0), 3, 3, 1, true, sn}));

  const int sat_channels = config_.width_at(config_.sat_level);
  const int key = config_.key_dim > 0 ? config_.key_dim : std::max(1, sat_channels / 2);
  sat_ = register_module("sat", SatModule(sat_channels, key, n, sn));

  const int lgr_channels = config_.width_at(config_.lgr_level);
  const int node_dim = config_.node_dim > 0 ? config_.node_dim : lgr_channels;
  lgr_ = register_module("lgr", LgrModule(graph, lgr_channels, node_dim, config_.height >> config_.lgr_level,
                                          config_.width >> config_.lgr_level, config_.lgr_steps, sn));
}

FeaturePyramid AppearanceNetImpl::encode_source(const torch::Tensor& image, const torch::Tensor& layout,
                                                const torch::Tensor& pose) {
  require(image.dim() == 4 && layout.dim() == 4 && pose.dim() == 4, "encoder expects batched inputs");
  if (image.size(2) != config_.height || image.size(3) != config_.width || layout.size(2) != config_.height ||
      layout.size(3) != config_.width || pose.size(2) != config_.height || pose.size(3) != config_.width) {
    fail(ErrorKind::kInvalidArgument, "source inputs do not match the configured resolution");
  }
  require(image.size(1) == 3 && layout.size(1) == config_.num_classes && pose.size(1) == kNumKeypoints,
          "source input channel counts are wrong");
  auto x = leaky(source_stem_->forward(torch::cat({image, layout, pose}, 1)));
  FeaturePyramid pyramid;
  for (int k = 1; k <= config_.depth; ++k) {
    x = leaky(source_down_[k - 1]->forward(x));
    x = leaky(source_refine_[k - 1]->forward(x));
    pyramid.push_back(x);
  }
  return pyramid;
}

FeaturePyramid AppearanceNetImpl::encode_target_signal(const torch::Tensor& layout, const torch::Tensor& pose) {
  require(layout.dim() == 4 && pose.dim() == 4, "target encoder expects batched inputs");
  if (layout.size(2) != config_.height || layout.size(3) != config_.width || pose.size(2) != config_.height ||
      pose.size(3) != config_.width) {
    fail(ErrorKind::kInvalidArgument, "target inputs do not match the configured resolution");
  }
  auto x = leaky(target_stem_->forward(torch::cat({layout, pose}, 1)));
  FeaturePyramid signals = {x};
  for (int k = 1; k <= config_.depth; ++k) {
    x = leaky(target_down_[k - 1]->forward(x));
    signals.push_back(x);
  }
  return signals;
}

torch::Tensor AppearanceNetImpl::forward(const torch::Tensor& source_image, const torch::Tensor& source_layout,
                                         const torch::Tensor& source_pose, const torch::Tensor& target_layout,
                                         const torch::Tensor& target_pose) {
  const auto source = encode_source(source_image, source_layout, source_pose);
  const auto signals = encode_target_signal(target_layout, target_pose);
  const auto source_labels = source_layout.argmax(1);
  const auto target_labels = target_layout.argmax(1);

  torch::Tensor x;
  for (int level = config_.depth; level >= 0; --level) {
    if (level == config_.depth) {
      x = torch::cat({source[level - 1], signals[level]}, 1);
    } else {
      x = torch::upsample_nearest2d(x, {}, std::vector<double>{2.0, 2.0});
      x = level >= 1 ? torch::cat({x, signals[level], source[level - 1]}, 1) : torch::cat({x, signals[level]}, 1);
    }
    x = leaky(decoder_in_[level]->forward(x));
    x = leaky(decoder_refine_[level]->forward(x));

    std::vector<torch::Tensor> parts = {x};
    if (level == config_.lgr_level) {
      parts.push_back(config_.use_lgr ? lgr_->forward(x, target_labels) : torch::zeros_like(x));
    }
    if (level == config_.sat_level) {
      const auto& enc = source[level - 1];
      last_sat_enc_ = enc.detach();
      last_sat_dec_ = x.detach();
      parts.push_back(config_.use_sat ? sat_->forward(enc, x, source_labels, target_labels) : torch::zeros_like(x));
    }
    if (parts.size() > 1) x = torch::cat(parts, 1);
  }
  return torch::tanh(to_rgb_->forward(x));
}

PortraitImage generate(AppearanceNet& net, const PortraitImage& source_image, const SemanticLayout& source_layout,
                       const PoseHeatmap& source_pose, const SemanticLayout& target_layout,
                       const PoseHeatmap& target_pose) {
  if (!target_layout.is_hard()) fail(ErrorKind::kInvalidArgument, "target layout must be hard");
  if (source_layout.num_classes() != net->config().num_classes ||
      target_layout.num_classes() != net->config().num_classes) {
    fail(ErrorKind::kInvalidArgument, "layout class count does not match the model");
  }
  torch::NoGradGuard no_grad;
  const bool was_training = net->is_training();
  net->eval();
  auto out = net->forward(source_image.pixels.unsqueeze(0), source_layout.onehot.unsqueeze(0),
                          source_pose.channels.unsqueeze(0), target_layout.onehot.unsqueeze(0),
                          target_pose.channels.unsqueeze(0));
  net->train(was_training);
  return {out.squeeze(0).contiguous()};
}

}  // namespace recapture
