#include "recapture/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "recapture/error.hpp"
#include "recapture/formats.hpp"

namespace recapture {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& bytes, size_t offset) {
  if (offset + sizeof(T) > bytes.size()) fail(ErrorKind::kInvalidArgument, "checkpoint header is truncated");
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

}  // namespace

const torch::Tensor& TensorArchive::at(const std::string& group, const std::string& name) const {
  for (const auto& [g, tensors] : groups) {
    if (g != group) continue;
    for (const auto& [n, t] : tensors) {
      if (n == name) return t;
    }
  }
  fail(ErrorKind::kNotFound, "checkpoint has no tensor " + group + "/" + name);
}

std::string encode_archive(const TensorArchive& archive) {
  nlohmann::json groups = nlohmann::json::array();
  std::vector<torch::Tensor> buffers;
  int64_t offset = 0;
  for (const auto& [group, tensors] : archive.groups) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [name, tensor] : tensors) {
      auto flat = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
      entries.push_back({{"name", name}, {"shape", flat.sizes().vec()}, {"offset", offset}, {"numel", flat.numel()}});
      offset += flat.numel();
      buffers.push_back(flat);
    }
    groups.push_back({{"name", group}, {"tensors", entries}});
  }
  const nlohmann::json manifest = {
      {"format_version", kArchiveVersion}, {"meta", archive.meta}, {"groups", groups}};
  const std::string text = manifest.dump();

  std::string out(kArchiveMagic, 8);
  put<uint32_t>(out, kArchiveVersion);
  put<uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + offset * sizeof(float));
  for (const auto& b : buffers) {
    out.append(reinterpret_cast<const char*>(b.data_ptr<float>()), b.numel() * sizeof(float));
  }
  return out;
}

TensorArchive decode_archive(const std::string& bytes) {
  if (bytes.size() < 20 || bytes.compare(0, 8, kArchiveMagic) != 0) {
    fail(ErrorKind::kInvalidArgument, "not a checkpoint archive (bad magic)");
  }
  const auto version = take<uint32_t>(bytes, 8);
  if (version != kArchiveVersion) {
    fail(ErrorKind::kInvalidArgument, "unsupported checkpoint format version " + std::to_string(version));
  }
  const auto length = take<uint64_t>(bytes, 12);
  if (20 + length > bytes.size()) fail(ErrorKind::kInvalidArgument, "checkpoint manifest is truncated");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(20, length));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidArgument, std::string("checkpoint manifest is not JSON: ") + e.what());
  }
  const size_t data_start = 20 + length;
  const size_t data_floats = (bytes.size() - data_start) / sizeof(float);

  TensorArchive archive;
  archive.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& g : manifest.at("groups")) {
    NamedTensors tensors;
    for (const auto& t : g.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<int64_t>>();
      const auto offset = t.at("offset").get<int64_t>();
      const auto numel = t.at("numel").get<int64_t>();
      int64_t expected = 1;
      for (auto d : shape) expected *= d;
      if (expected != numel || offset < 0 || static_cast<size_t>(offset + numel) > data_floats) {
        fail(ErrorKind::kInvalidArgument, "checkpoint tensor " + t.at("name").get<std::string>() + " is out of bounds");
      }
      auto tensor = torch::empty(shape, torch::kFloat32);
      std::memcpy(tensor.data_ptr<float>(), bytes.data() + data_start + offset * sizeof(float), numel * sizeof(float));
      tensors.emplace_back(t.at("name").get<std::string>(), tensor);
    }
    archive.groups.emplace_back(g.at("name").get<std::string>(), std::move(tensors));
  }
  return archive;
}

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  write_file(path, encode_archive(archive));
}

TensorArchive read_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::kNotFound, "checkpoint not found: " + path.string());
  return decode_archive(read_file(path));
}

}  // namespace recapture
