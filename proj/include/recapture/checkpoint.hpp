#pragma once

// Single-file tensor archive:
//
//   bytes 0..7    magic "RCAPCKPT"
//   bytes 8..11   format version, uint32 little-endian
//   bytes 12..19  manifest length M, uint64 little-endian
//   next M bytes  UTF-8 JSON manifest
//   remainder     raw little-endian float32 buffers, concatenated
//
// The manifest is {"format_version", "meta", "groups": [{"name", "tensors":
// [{"name", "shape", "offset", "numel"}]}]}; offsets count floats from the
// start of the buffer section.

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <torch/torch.h>
#include <utility>
#include <vector>

namespace recapture {

inline constexpr char kArchiveMagic[9] = "RCAPCKPT";
inline constexpr uint32_t kArchiveVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;
using TensorGroups = std::vector<std::pair<std::string, NamedTensors>>;

struct TensorArchive {
  nlohmann::json meta;
  TensorGroups groups;

  /// Looks up a tensor; throws kNotFound when absent.
  const torch::Tensor& at(const std::string& group, const std::string& name) const;
};

std::string encode_archive(const TensorArchive& archive);
TensorArchive decode_archive(const std::string& bytes);

void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
/// Missing files raise kNotFound naming the path; corrupt ones kInvalidArgument.
TensorArchive read_archive(const std::filesystem::path& path);

}  // namespace recapture
