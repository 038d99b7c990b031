#pragma once

// On-disk formats:
//   image   RGB PNG, 8 bits per channel, value v <-> v / 127.5 - 1
//   layout  8-bit single-channel PNG (byte = class index) + JSON sidecar
//           {"num_classes": N, "class_names": [...]}
//   pose    JSON array of 18 [x, y, visible] triples

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "recapture/domain.hpp"

namespace recapture {

struct RasterImage {
  int height = 0;
  int width = 0;
  int channels = 0;           // 1 (gray) or 3 (RGB)
  std::vector<uint8_t> data;  // row-major, interleaved
};

std::string encode_png(const RasterImage& image);
RasterImage decode_png(const std::string& bytes);

std::string read_file(const std::filesystem::path& path);
/// Writes atomically enough for our purposes: to a sibling temp file, then renames.
void write_file(const std::filesystem::path& path, const std::string& bytes);

RasterImage image_to_raster(const PortraitImage& image);
PortraitImage raster_to_image(const RasterImage& raster);

/// Label raster (1 channel) from a hard layout's argmax.
RasterImage layout_to_raster(const SemanticLayout& layout);
SemanticLayout raster_to_layout(const RasterImage& raster, int num_classes,
                                std::vector<std::string> class_names);

nlohmann::json layout_sidecar(const SemanticLayout& layout);

nlohmann::json pose_to_json(const PoseKeypoints& pose);
PoseKeypoints pose_from_json(const nlohmann::json& j);

// File-level helpers.
void save_image(const std::filesystem::path& path, const PortraitImage& image);
PortraitImage load_image(const std::filesystem::path& path);
/// Writes the label PNG; the sidecar goes next to it unless `sidecar` is false.
void save_layout(const std::filesystem::path& path, const SemanticLayout& layout, bool sidecar = true);
/// Reads a label PNG. The class scheme comes from `sidecar_path` when given,
/// else from "<path>.json" if present, else the 20-class default.
SemanticLayout load_layout(const std::filesystem::path& path,
                           const std::filesystem::path& sidecar_path = {});
void save_pose(const std::filesystem::path& path, const PoseKeypoints& pose);
PoseKeypoints load_pose(const std::filesystem::path& path);

/// Canonical JSON text (2-space indent, trailing newline).
std::string dump_json(const nlohmann::json& j);

}  // namespace recapture
