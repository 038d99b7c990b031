#pragma once

// Core value types shared by every stage of the recapture pipeline, plus the
// pose/layout encodings and the layout-editing primitives.
//
// Tensors follow the channel-first convention. A single sample is C x H x W;
// network code batches them to B x C x H x W.

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace recapture {

inline constexpr int kNumKeypoints = 18;

/// Joint ordering of PoseKeypoints (the 18-point COCO/OpenPose convention).
/// "Right" is the figure's own right side.
enum Joint : int {
  kNose = 0,
  kNeck,
  kRightShoulder,
  kRightElbow,
  kRightWrist,
  kLeftShoulder,
  kLeftElbow,
  kLeftWrist,
  kRightHip,
  kRightKnee,
  kRightAnkle,
  kLeftHip,
  kLeftKnee,
  kLeftAnkle,
  kRightEye,
  kLeftEye,
  kRightEar,
  kLeftEar,
};

const std::array<std::string, kNumKeypoints>& joint_names();

struct Keypoint {
  double x = 0.0;  // pixel column
  double y = 0.0;  // pixel row
  bool visible = false;

  bool operator==(const Keypoint&) const = default;
};

struct PoseKeypoints {
  std::vector<Keypoint> points;

  /// Throws kInvalidArgument unless there are exactly 18 entries.
  void validate() const;
  bool operator==(const PoseKeypoints&) const = default;
};

struct Pixel {
  int y = 0;
  int x = 0;

  bool operator==(const Pixel&) const = default;
};

/// 3 x H x W float image with values in [-1, 1].
struct PortraitImage {
  torch::Tensor pixels;

  int height() const { return static_cast<int>(pixels.size(1)); }
  int width() const { return static_cast<int>(pixels.size(2)); }
  void validate() const;
};

/// 18 x H x W binary keypoint disks.
struct PoseHeatmap {
  torch::Tensor channels;
};

/// H x W binary foreground mask.
struct PoseMask {
  torch::Tensor mask;
};

/// N x H x W per-pixel class distribution. Hard layouts are one-hot.
struct SemanticLayout {
  torch::Tensor onehot;
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(onehot.size(0)); }
  int height() const { return static_cast<int>(onehot.size(1)); }
  int width() const { return static_cast<int>(onehot.size(2)); }

  /// Every pixel has exactly one channel equal to 1 and the rest 0.
  bool is_hard() const;
  /// Argmax label map (H x W, int64); ties go to the lower class index.
  torch::Tensor labels() const;
  /// Throws kUnprocessable when the names disagree with the channel count or
  /// class 0 is not background.
  void validate() const;
};

struct LayoutEdit {
  enum class Kind { kRelabel, kDilate, kErode };

  Kind kind = Kind::kRelabel;
  int part = 1;
  int target_part = 1;  // relabel only
  int amount = 1;       // dilate/erode only, in pixels
  /// Classes a dilation may overwrite in addition to background.
  std::vector<int> yieldable;

  void validate(int num_classes) const;
};

// --- class schemes -----------------------------------------------------------

/// The 20-class human-parsing scheme (LIP ordering, background first).
const std::vector<std::string>& lip20_class_names();
/// The coarse 7-class scheme used for low-resolution data.
const std::vector<std::string>& coarse7_class_names();
/// Maps each 20-class index onto its 7-class cluster.
const std::array<int, 20>& lip20_to_coarse7();

/// Index of `name` in `names`, or -1.
int class_index(const std::vector<std::string>& names, std::string_view name);

// --- operations -------------------------------------------------------------

PoseHeatmap keypoints_to_heatmap(const PoseKeypoints& kp, int height, int width, int radius);

/// `label_map` is an H x W integer tensor. `class_names` defaults to the
/// 20-class names for N = 20 and the 7-class names for N = 7.
SemanticLayout labels_to_onehot(const torch::Tensor& label_map, int num_classes,
                                std::vector<std::string> class_names = {});

/// Row-major coordinates whose argmax class is `c`.
std::vector<Pixel> part_indices(const SemanticLayout& layout, int c);

SemanticLayout apply_edit(const SemanticLayout& layout, const LayoutEdit& edit);

PoseMask foreground_mask_from_layout(const SemanticLayout& layout);

/// Remaps a 20-class layout onto the 7-class scheme.
SemanticLayout cluster_to_coarse7(const SemanticLayout& layout);

/// Nearest-neighbour resize of a hard layout's label map to height x width.
/// Returns an int64 label map.
torch::Tensor downsample_labels(const torch::Tensor& labels, int height, int width);

}  // namespace recapture
