#pragma once

// Checkpoint-backed inference: layout prediction, rendering and frame-wise
// video recapture on inputs normalized to the model's working resolution.

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "recapture/domain.hpp"
#include "recapture/trainer.hpp"

namespace recapture {

struct SourceSample {
  PortraitImage image;
  SemanticLayout layout;  // hard
  PoseKeypoints pose;
};

/// Bilinear image resize, nearest-neighbour label resize, keypoint rescale.
SourceSample resize_sample(const SourceSample& sample, int height, int width);
PoseKeypoints rescale_pose(const PoseKeypoints& pose, int from_h, int from_w, int to_h, int to_w);

class RecaptureModel {
 public:
  explicit RecaptureModel(std::unique_ptr<Trainer> trainer);
  /// Raises kNotFound naming the path when the checkpoint is missing.
  static std::shared_ptr<RecaptureModel> load(const std::filesystem::path& checkpoint);

  int height() const;
  int width() const;
  int num_classes() const;
  const std::vector<std::string>& class_names() const;
  int64_t step() const;

  /// Validates class scheme and hardness (kUnprocessable) and resizes to the
  /// working resolution. Poses are given in the sample's own pixel frame.
  SourceSample normalize(const SourceSample& sample) const;

  /// Hardened predicted target layout. Inputs must already be normalized.
  SemanticLayout predict_layout(const SourceSample& source, const PoseKeypoints& target_pose);
  PortraitImage render(const SourceSample& source, const SemanticLayout& target_layout,
                       const PoseKeypoints& target_pose);

  /// Runs the SAT attention probe for the last render at one output pixel
  /// (working-resolution coordinates). Empty JSON when not applicable.
  nlohmann::json attention(const SourceSample& source, const SemanticLayout& target_layout,
                           const PoseKeypoints& target_pose, Pixel pixel);

  Trainer& trainer() { return *trainer_; }

 private:
  PoseHeatmap heatmap(const PoseKeypoints& pose) const;

  std::unique_ptr<Trainer> trainer_;
  std::mutex mutex_;
};

/// Predicts and renders every pose in order; `on_frame(index, image)` is
/// called per frame. A failing frame raises an error naming its index.
std::vector<PortraitImage> recapture_video(RecaptureModel& model, const SourceSample& source,
                                           const std::vector<PoseKeypoints>& poses,
                                           const std::function<void(size_t, const PortraitImage&)>& on_frame = {});

}  // namespace recapture
