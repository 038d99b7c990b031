#include "fixtures.hpp"

#include <atomic>
#include <unistd.h>

#include "recapture/puppet.hpp"

namespace fixtures {

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

torch::Tensor random_labels(std::mt19937_64& rng, int height, int width, int num_classes) {
  std::uniform_int_distribution<int> pick(0, num_classes - 1);
  auto t = torch::empty({height, width}, torch::kLong);
  auto acc = t.accessor<int64_t, 2>();
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) acc[y][x] = pick(rng);
  }
  return t;
}

recapture::TrainConfig tiny_config(uint64_t seed) {
  recapture::TrainConfig c;
  c.height = 32;
  c.width = 32;
  c.batch_size = 2;
  c.steps = 4;
  c.seed = seed;
  c.perceptual_channels = 4;
  c.geo.base_width = 4;
  c.geo.max_width = 16;
  c.geo.depth = 3;
  c.app.base_width = 4;
  c.app.max_width = 16;
  c.app.signal_width = 2;
  c.app.depth = 3;
  c.app.sat_level = 1;
  c.app.lgr_level = 3;
  c.disc.base_width = 4;
  c.disc.layers = 2;
  c.sync();
  c.validate();
  return c;
}

std::filesystem::path tiny_dataset(const std::filesystem::path& root, int count, uint64_t seed) {
  recapture::PuppetConfig pc;
  pc.height = 32;
  pc.width = 32;
  const auto dir = root / "data";
  recapture::write_dataset(count, seed, dir, pc);
  return dir;
}

}  // namespace fixtures
