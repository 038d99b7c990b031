#pragma once

// Procedural articulated "puppet" figures: paired renders of one identity in
// two poses, with exact layouts, keypoints and masks.
//
// Geometry is specified in a 128 x 128 reference frame and scaled to the
// requested resolution at render time.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <random>
#include <string>

#include "recapture/domain.hpp"

namespace recapture {

struct Rgb {
  uint8_t r = 0;
  uint8_t g = 0;
  uint8_t b = 0;

  bool operator==(const Rgb&) const = default;
};

struct PartAppearance {
  Rgb base;
  std::optional<Rgb> stripe;  // alternating stripe colour, along the body axis
  double stripe_period = 6.0;  // reference-frame pixels per stripe

  bool operator==(const PartAppearance&) const = default;
};

inline constexpr int kPuppetClasses = 20;

struct PuppetSpec {
  std::array<PartAppearance, kPuppetClasses> part_colors;

  // Bone lengths (reference-frame pixels).
  double spine = 34.0;
  double neck = 7.0;
  double upper_arm = 18.0;
  double forearm = 16.0;
  double thigh = 22.0;
  double shin = 21.0;

  // Half-widths (reference-frame pixels).
  double shoulder_half_width = 13.0;
  double hip_half_width = 9.0;
  double arm_girth = 3.2;
  double leg_girth = 3.8;
  double head_radius = 8.0;
  double foot_length = 7.0;

  int upper_class = 5;   // upper_clothes or coat
  int lower_class = 9;   // pants or skirt
  bool has_hat = false;
  uint64_t seed = 0;

  bool operator==(const PuppetSpec&) const = default;
};

/// Joint angles are radians. Limb angles are measured from straight down,
/// positive toward the figure's left (image +x for a frontal figure).
struct PoseParams {
  double torso_lean = 0.0;
  double head_tilt = 0.0;
  double right_upper_arm = -0.3;
  double right_forearm = 0.0;  // relative bend
  double left_upper_arm = 0.3;
  double left_forearm = 0.0;
  double right_thigh = -0.1;
  double right_shin = 0.0;  // relative bend
  double left_thigh = 0.1;
  double left_shin = 0.0;
  double root_x = 64.0;  // pelvis centre, reference frame
  double root_y = 66.0;
  double scale = 1.0;
  int facing = 1;  // +1: feet point to image +x, -1: toward -x
};

struct PuppetRender {
  PortraitImage image;
  SemanticLayout layout;
  PoseKeypoints keypoints;
  /// H x W exact coverage of the drawn figure (1 where any part was drawn).
  torch::Tensor coverage;
};

struct TrainSample {
  PortraitImage image;
  SemanticLayout layout;
  PoseHeatmap heatmap;
  PoseMask mask;
  PoseKeypoints keypoints;
};

struct TrainSamplePair {
  TrainSample source;
  TrainSample target;
  std::string puppet_id;
  bool source_cropped = false;
};

struct PuppetConfig {
  int height = 64;
  int width = 64;
  int heatmap_radius = 0;  // 0: derive from resolution (4 px at 256)
  double crop_probability = 0.25;
  double stripe_probability = 0.5;
  Rgb background{236, 236, 236};
  double min_girth_scale = 0.85;
  double max_girth_scale = 1.2;

  int effective_radius() const;
};

PuppetSpec sample_puppet(uint64_t seed, const PuppetConfig& config = {});
PoseParams sample_pose(std::mt19937_64& rng);

/// Throws kInvalidArgument when any part would leave the frame.
PuppetRender render(const PuppetSpec& spec, const PoseParams& pose, int height, int width,
                    const PuppetConfig& config = {});

/// Keeps only rows above `crop_row` (reference frame units are not used here:
/// `crop_row` is in output pixels). Cropped-away keypoints become invisible.
PuppetRender crop_below(const PuppetRender& render, int crop_row, const PuppetConfig& config);

TrainSample to_sample(const PuppetRender& render, int heatmap_radius);

TrainSamplePair make_pair(uint64_t seed, const PuppetConfig& config = {});

/// Named presets for the service's pose library; each renders in frame.
std::vector<std::pair<std::string, PoseParams>> pose_presets();
PoseKeypoints preset_keypoints(const PoseParams& pose, int height, int width);

struct DatasetEntry {
  std::string id;
  std::string puppet_id;
  std::string split;  // "train" or "test"
  bool source_cropped = false;
};

/// Writes `count` pairs under `directory` and returns the manifest JSON.
nlohmann::json write_dataset(int count, uint64_t seed, const std::filesystem::path& directory,
                             const PuppetConfig& config = {});

/// Per-pair seed derivation used by write_dataset.
uint64_t pair_seed(uint64_t dataset_seed, int index);

/// Split rule: every tenth pair (index % 10 == 9) is held out.
std::string split_for_index(int index);

struct LoadedPair {
  TrainSamplePair pair;
  DatasetEntry entry;
};

/// Reads a dataset directory written by write_dataset (or any directory in the
/// same layout). `split` filters entries; empty means all.
std::vector<LoadedPair> load_dataset(const std::filesystem::path& directory, const std::string& split = "",
                                     int heatmap_radius = 0);

/// Streams the same pairs as load_dataset, one at a time, in manifest order.
void for_each_pair(const std::filesystem::path& directory, const std::string& split, int heatmap_radius,
                   const std::function<void(LoadedPair&&)>& visit);

}  // namespace recapture
