#pragma once

// Joint training of the geometric and appearance stages against the three
// discriminators, plus checkpointing and held-out evaluation.

#include <filesystem>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <random>
#include <string>
#include <torch/torch.h>

#include "recapture/appearance_net.hpp"
#include "recapture/geometric_net.hpp"
#include "recapture/lgr.hpp"
#include "recapture/objectives.hpp"
#include "recapture/puppet.hpp"

namespace recapture {

struct TrainConfig {
  int height = 64;
  int width = 64;
  int batch_size = 16;
  int steps = 2000;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights weights = LossWeights::deepfashion();
  uint64_t seed = 0;
  /// Fraction of `steps` during which the appearance stage sees ground-truth S_B.
  double teacher_forcing = 0.5;
  int eval_every = 0;  // 0 disables periodic evaluation
  GeneratorLossMode generator_loss = GeneratorLossMode::kSaturating;
  bool literal_image_term = false;  // use L_D^H inside L_G
  double d3_weight = 1.0;
  uint64_t perceptual_seed = 7;
  int perceptual_channels = 16;
  std::string train_data;
  std::string test_data;
  std::vector<std::string> class_names = lip20_class_names();
  GeoNetConfig geo;
  AppearanceConfig app;
  DiscriminatorConfig disc;

  /// Keeps resolution and class count consistent across the sub-configs.
  void sync();
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Named variants of the appearance stage used by the ablation runs.
void apply_variant(TrainConfig& config, const std::string& variant);

/// One pair held as image tensors, 8-bit labels and keypoints; expanded to
/// one-hot layouts and heatmaps only when batched.
struct CompactSample {
  torch::Tensor image;   // 3 x H x W float in [-1, 1]
  torch::Tensor labels;  // H x W uint8
  PoseKeypoints keypoints;
};

struct CompactPair {
  std::string id;
  CompactSample source;
  CompactSample target;
};

CompactPair compact(const TrainSamplePair& pair, const std::string& id);
std::vector<CompactPair> load_compact(const std::filesystem::path& directory, const std::string& split);

struct Batch {
  torch::Tensor source_image, source_layout, source_pose;
  torch::Tensor target_image, target_layout, target_pose;
  torch::Tensor target_mask;  // B x H x W
};

Batch make_batch(const std::vector<const CompactPair*>& pairs, int num_classes, int heatmap_radius);

/// Hand-rolled Adam so that its state is plain tensors we checkpoint exactly.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<std::pair<std::string, torch::Tensor>> params, double lr, double beta1, double beta2, double eps);

  void zero_grad();
  void step();

  int64_t steps_taken() const { return t_; }
  void set_steps_taken(int64_t t) { t_ = t; }
  std::vector<std::pair<std::string, torch::Tensor>> state();

 private:
  std::vector<std::pair<std::string, torch::Tensor>> params_;
  std::vector<torch::Tensor> m_;
  std::vector<torch::Tensor> v_;
  double lr_ = 0, beta1_ = 0, beta2_ = 0, eps_ = 0;
  int64_t t_ = 0;
};

/// Every scalar of one train step, named after the objective terms.
struct LossRecord {
  int64_t step = 0;
  bool teacher_forced = false;
  std::map<std::string, double> values;  // L_D, L_G, L_D^S, L_G^S, L_D^H, L_G^H, L_1, L_p, L_s

  nlohmann::json to_json() const;
  bool finite() const;
};

struct EvalReport {
  int64_t step = 0;
  int pairs = 0;
  double ssim = 0;
  double m_ssim = 0;
  double l1 = 0;
  double accuracy = 0;
  double mean_iou = 0;
  std::vector<std::optional<double>> iou;
  std::optional<double> identity_l1;

  nlohmann::json to_json() const;
};

struct EvalOptions {
  bool identity = true;      // also run the identity-pose reconstruction
  bool ground_truth = false; // score the targets against themselves
};

class Trainer {
 public:
  explicit Trainer(TrainConfig config);

  LossRecord train_step(const std::vector<const CompactPair*>& batch);

  /// Returns the pairs for training step `step` (0-based) from a seeded
  /// per-epoch permutation.
  std::vector<const CompactPair*> batch_for_step(const std::vector<CompactPair>& data, int64_t step) const;

  EvalReport evaluate(const std::vector<CompactPair>& test, const EvalOptions& options = {});

  void save(const std::filesystem::path& path);
  static std::unique_ptr<Trainer> load(const std::filesystem::path& path);

  const TrainConfig& config() const { return config_; }
  int64_t step() const { return step_; }
  int heatmap_radius() const;

  GeometricNet& geo() { return geo_; }
  AppearanceNet& app() { return app_; }
  Discriminator& d1() { return d1_; }
  Discriminator& d2() { return d2_; }
  Discriminator& d3() { return d3_; }
  const PartGraph& graph() const { return graph_; }

  /// Parameter and buffer tensors grouped as they appear in a checkpoint.
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, torch::Tensor>>>> tensor_groups();

 private:
  TrainConfig config_;
  PartGraph graph_;
  GeometricNet geo_{nullptr};
  AppearanceNet app_{nullptr};
  Discriminator d1_{nullptr};
  Discriminator d2_{nullptr};
  Discriminator d3_{nullptr};
  FeatureExtractor extractor_;
  Adam opt_g_;
  Adam opt_d_;
  int64_t step_ = 0;
};

/// Appends one JSON document per line.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path, bool append = false);
  void write(const nlohmann::json& record);

 private:
  std::filesystem::path path_;
};

struct TrainRunOptions {
  std::filesystem::path log_path;
  std::filesystem::path checkpoint_path;
  int checkpoint_every = 0;
  std::function<void(const LossRecord&)> on_step;
};

/// Trains from the trainer's current step up to config.steps. Throws
/// Error(kNonFinite) after logging the offending record.
void run_training(Trainer& trainer, const std::vector<CompactPair>& train, const std::vector<CompactPair>& test,
                  const TrainRunOptions& options);

/// Rejects test sets that share pair ids with the training set.
void check_disjoint(const std::vector<CompactPair>& train, const std::vector<CompactPair>& test);

}  // namespace recapture
