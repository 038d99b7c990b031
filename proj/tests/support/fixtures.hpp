#pragma once

// Shared helpers for the test programs: scratch directories, random
// instances and a small trainer configuration that runs in milliseconds.

#include <filesystem>
#include <random>
#include <string>
#include <torch/torch.h>

#include "recapture/trainer.hpp"

namespace fixtures {

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "recapture");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// H x W int64 labels drawn uniformly from [0, num_classes).
torch::Tensor random_labels(std::mt19937_64& rng, int height, int width, int num_classes);

/// 32 x 32, shallow nets, batch 2.
recapture::TrainConfig tiny_config(uint64_t seed = 0);

/// Writes a 32 x 32 dataset of `count` pairs and returns its directory.
std::filesystem::path tiny_dataset(const std::filesystem::path& root, int count, uint64_t seed = 5);

}  // namespace fixtures
