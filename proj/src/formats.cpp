#include "recapture/formats.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "recapture/error.hpp"

namespace recapture {

namespace fs = std::filesystem;

namespace {

void png_write_to_string(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

void png_flush_noop(png_structp) {}

struct ReadCursor {
  const std::string* bytes;
  size_t offset;
};

void png_read_from_string(png_structp png, png_bytep data, png_size_t length) {
  auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + length > cursor->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(data, cursor->bytes->data() + cursor->offset, length);
  cursor->offset += length;
}

[[noreturn]] void png_error_throw(png_structp, png_const_charp message) {
  throw Error(ErrorKind::kUnprocessable, std::string("PNG: ") + message);
}

void png_warning_ignore(png_structp, png_const_charp) {}

}  // namespace

std::string encode_png(const RasterImage& image) {
  require(image.channels == 1 || image.channels == 3, "PNG encode supports 1 or 3 channels");
  require(image.data.size() == static_cast<size_t>(image.height) * image.width * image.channels,
          "raster size mismatch");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw,
                                            png_warning_ignore);
  png_infop info = png_create_info_struct(png);
  std::string out;
  try {
    png_set_write_fn(png, &out, png_write_to_string, png_flush_noop);
    png_set_IHDR(png, info, image.width, image.height, 8,
                 image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const size_t stride = static_cast<size_t>(image.width) * image.channels;
    for (int y = 0; y < image.height; ++y) {
      png_write_row(png, const_cast<png_bytep>(image.data.data() + y * stride));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

RasterImage decode_png(const std::string& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    fail(ErrorKind::kUnprocessable, "not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw,
                                           png_warning_ignore);
  png_infop info = png_create_info_struct(png);
  RasterImage image;
  try {
    ReadCursor cursor{&bytes, 0};
    png_set_read_fn(png, &cursor, png_read_from_string);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    image.width = static_cast<int>(png_get_image_width(png, info));
    image.height = static_cast<int>(png_get_image_height(png, info));
    image.channels = png_get_channels(png, info);
    if (image.channels != 1 && image.channels != 3) fail(ErrorKind::kUnprocessable, "unsupported PNG layout");
    const size_t stride = png_get_rowbytes(png, info);
    image.data.resize(stride * image.height);
    std::vector<png_bytep> rows(image.height);
    for (int y = 0; y < image.height; ++y) rows[y] = image.data.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

std::string read_file(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::kNotFound, "no such file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorKind::kIo, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::kIo, "cannot rename into " + path.string() + ": " + ec.message());
}

RasterImage image_to_raster(const PortraitImage& image) {
  require(image.pixels.dim() == 3 && image.pixels.size(0) == 3, "portrait image must be 3 x H x W");
  auto bytes = ((image.pixels.detach().to(torch::kFloat32).clamp(-1.0, 1.0) + 1.0) * 127.5)
                   .round()
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();
  RasterImage raster{image.height(), image.width(), 3, {}};
  raster.data.assign(bytes.data_ptr<uint8_t>(), bytes.data_ptr<uint8_t>() + bytes.numel());
  return raster;
}

PortraitImage raster_to_image(const RasterImage& raster) {
  if (raster.channels != 3) fail(ErrorKind::kUnprocessable, "portrait image PNG must be RGB");
  auto bytes = torch::from_blob(const_cast<uint8_t*>(raster.data.data()), {raster.height, raster.width, 3},
                                torch::kUInt8)
                   .clone();
  return {bytes.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous()};
}

RasterImage layout_to_raster(const SemanticLayout& layout) {
  require(layout.num_classes() <= 256, "layout has too many classes for an 8-bit label image");
  auto labels = layout.labels().to(torch::kUInt8).contiguous();
  RasterImage raster{layout.height(), layout.width(), 1, {}};
  raster.data.assign(labels.data_ptr<uint8_t>(), labels.data_ptr<uint8_t>() + labels.numel());
  return raster;
}

SemanticLayout raster_to_layout(const RasterImage& raster, int num_classes,
                                std::vector<std::string> class_names) {
  if (raster.channels != 1) fail(ErrorKind::kUnprocessable, "layout PNG must be single-channel");
  auto labels = torch::from_blob(const_cast<uint8_t*>(raster.data.data()), {raster.height, raster.width},
                                 torch::kUInt8)
                    .to(torch::kLong);
  return labels_to_onehot(labels, num_classes, std::move(class_names));
}

nlohmann::json layout_sidecar(const SemanticLayout& layout) {
  return {{"num_classes", layout.num_classes()}, {"class_names", layout.class_names}};
}

nlohmann::json pose_to_json(const PoseKeypoints& pose) {
  pose.validate();
  auto arr = nlohmann::json::array();
  for (const auto& p : pose.points) arr.push_back({p.x, p.y, p.visible ? 1 : 0});
  return arr;
}

PoseKeypoints pose_from_json(const nlohmann::json& j) {
  if (!j.is_array()) fail(ErrorKind::kInvalidArgument, "pose JSON must be an array");
  PoseKeypoints pose;
  for (const auto& entry : j) {
    if (!entry.is_array() || entry.size() != 3) {
      fail(ErrorKind::kInvalidArgument, "pose entries must be [x, y, visible] triples");
    }
    const auto& v = entry[2];
    const bool visible = v.is_boolean() ? v.get<bool>() : v.get<double>() != 0.0;
    pose.points.push_back({entry[0].get<double>(), entry[1].get<double>(), visible});
  }
  pose.validate();
  return pose;
}

void save_image(const fs::path& path, const PortraitImage& image) {
  write_file(path, encode_png(image_to_raster(image)));
}

PortraitImage load_image(const fs::path& path) { return raster_to_image(decode_png(read_file(path))); }

void save_layout(const fs::path& path, const SemanticLayout& layout, bool sidecar) {
  write_file(path, encode_png(layout_to_raster(layout)));
  if (sidecar) write_file(path.string() + ".json", dump_json(layout_sidecar(layout)));
}

SemanticLayout load_layout(const fs::path& path, const fs::path& sidecar_path) {
  fs::path sidecar = sidecar_path;
  if (sidecar.empty() && fs::exists(path.string() + ".json")) sidecar = path.string() + ".json";
  int num_classes = 20;
  std::vector<std::string> names = lip20_class_names();
  if (!sidecar.empty()) {
    auto meta = nlohmann::json::parse(read_file(sidecar));
    num_classes = meta.at("num_classes").get<int>();
    names = meta.at("class_names").get<std::vector<std::string>>();
  }
  return raster_to_layout(decode_png(read_file(path)), num_classes, std::move(names));
}

void save_pose(const fs::path& path, const PoseKeypoints& pose) { write_file(path, dump_json(pose_to_json(pose))); }

PoseKeypoints load_pose(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kInvalidArgument, path.string() + ": " + e.what());
  }
  return pose_from_json(j);
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace recapture
