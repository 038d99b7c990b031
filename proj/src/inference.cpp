#include "recapture/inference.hpp"

#include <cmath>

#include "recapture/error.hpp"
#include "recapture/geometric_net.hpp"

namespace recapture {

PoseKeypoints rescale_pose(const PoseKeypoints& pose, int from_h, int from_w, int to_h, int to_w) {
  PoseKeypoints out = pose;
  const double sy = static_cast<double>(to_h) / from_h;
  const double sx = static_cast<double>(to_w) / from_w;
  for (auto& p : out.points) {
    p.x *= sx;
    p.y *= sy;
  }
  return out;
}

SourceSample resize_sample(const SourceSample& sample, int height, int width) {
  const auto h = sample.image.height();
  const auto w = sample.image.width();
  if (h == height && w == width) return sample;
  SourceSample out;
  out.image.pixels = torch::nn::functional::interpolate(
                         sample.image.pixels.unsqueeze(0),
                         torch::nn::functional::InterpolateFuncOptions()
                             .size(std::vector<int64_t>{height, width})
                             .mode(torch::kBilinear)
                             .align_corners(false))
                         .squeeze(0)
                         .clamp(-1.0, 1.0)
                         .contiguous();
  out.layout = labels_to_onehot(downsample_labels(sample.layout.labels(), height, width),
                                sample.layout.num_classes(), sample.layout.class_names);
  out.pose = rescale_pose(sample.pose, h, w, height, width);
  return out;
}

RecaptureModel::RecaptureModel(std::unique_ptr<Trainer> trainer) : trainer_(std::move(trainer)) {
  require(trainer_ != nullptr, "model needs a trainer");
}

std::shared_ptr<RecaptureModel> RecaptureModel::load(const std::filesystem::path& checkpoint) {
  return std::make_shared<RecaptureModel>(Trainer::load(checkpoint));
}

int RecaptureModel::height() const { return trainer_->config().height; }
int RecaptureModel::width() const { return trainer_->config().width; }
int RecaptureModel::num_classes() const { return static_cast<int>(trainer_->config().class_names.size()); }
const std::vector<std::string>& RecaptureModel::class_names() const { return trainer_->config().class_names; }
int64_t RecaptureModel::step() const { return trainer_->step(); }

SourceSample RecaptureModel::normalize(const SourceSample& sample) const {
  sample.pose.validate();
  sample.layout.validate();
  if (sample.layout.num_classes() != num_classes()) {
    fail(ErrorKind::kUnprocessable, "layout has " + std::to_string(sample.layout.num_classes()) +
                                        " classes but the model expects " + std::to_string(num_classes()));
  }
  if (!sample.layout.is_hard()) fail(ErrorKind::kUnprocessable, "layout is not hard (one class per pixel)");
  if (sample.image.height() != sample.layout.height() || sample.image.width() != sample.layout.width()) {
    fail(ErrorKind::kUnprocessable, "image and layout sizes differ");
  }
  auto out = resize_sample(sample, height(), width());
  out.layout.class_names = class_names();
  return out;
}

PoseHeatmap RecaptureModel::heatmap(const PoseKeypoints& pose) const {
  return keypoints_to_heatmap(pose, height(), width(), trainer_->heatmap_radius());
}

SemanticLayout RecaptureModel::predict_layout(const SourceSample& source, const PoseKeypoints& target_pose) {
  target_pose.validate();
  std::lock_guard lock(mutex_);
  auto soft = recapture::predict_layout(trainer_->geo(), source.layout, heatmap(source.pose), heatmap(target_pose));
  auto hard = harden(soft);
  hard.class_names = class_names();
  return hard;
}

PortraitImage RecaptureModel::render(const SourceSample& source, const SemanticLayout& target_layout,
                                     const PoseKeypoints& target_pose) {
  target_pose.validate();
  if (target_layout.height() != height() || target_layout.width() != width()) {
    fail(ErrorKind::kUnprocessable, "target layout is not at the working resolution");
  }
  std::lock_guard lock(mutex_);
  return generate(trainer_->app(), source.image, source.layout, heatmap(source.pose), target_layout,
                  heatmap(target_pose));
}

nlohmann::json RecaptureModel::attention(const SourceSample& source, const SemanticLayout& target_layout,
                                         const PoseKeypoints& target_pose, Pixel pixel) {
  if (pixel.y < 0 || pixel.x < 0 || pixel.y >= height() || pixel.x >= width()) {
    fail(ErrorKind::kInvalidArgument, "attention pixel is outside the image");
  }
  render(source, target_layout, target_pose);
  std::lock_guard lock(mutex_);
  auto& app = trainer_->app();
  const auto enc = app->last_sat_encoder_feature()[0];
  const auto dec = app->last_sat_decoder_feature()[0];
  const auto gh = dec.size(1);
  const auto gw = dec.size(2);
  const auto src = downsample_labels(source.layout.labels(), static_cast<int>(gh), static_cast<int>(gw));
  const auto tgt = downsample_labels(target_layout.labels(), static_cast<int>(gh), static_cast<int>(gw));
  const Pixel cell{static_cast<int>(pixel.y * gh / height()), static_cast<int>(pixel.x * gw / width())};
  torch::NoGradGuard no_grad;
  const auto record = sat_attention_map(app->sat()->weights(), enc, dec, src, tgt, cell);
  nlohmann::json out = {{"grid", {gh, gw}}, {"cell", {cell.x, cell.y}}};
  out["record"] = record ? record->to_json() : nlohmann::json(nullptr);
  return out;
}

std::vector<PortraitImage> recapture_video(RecaptureModel& model, const SourceSample& source,
                                           const std::vector<PoseKeypoints>& poses,
                                           const std::function<void(size_t, const PortraitImage&)>& on_frame) {
  std::vector<PortraitImage> frames;
  for (size_t i = 0; i < poses.size(); ++i) {
    try {
      const auto layout = model.predict_layout(source, poses[i]);
      frames.push_back(model.render(source, layout, poses[i]));
    } catch (const Error& e) {
      fail(e.kind(), "frame " + std::to_string(i) + ": " + e.what());
    }
    if (on_frame) on_frame(i, frames.back());
  }
  return frames;
}

}  // namespace recapture
