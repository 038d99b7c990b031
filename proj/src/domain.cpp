#include "recapture/domain.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "recapture/error.hpp"

namespace recapture {

const std::array<std::string, kNumKeypoints>& joint_names() {
  static const std::array<std::string, kNumKeypoints> names = {
      "nose",      "neck",       "right_shoulder", "right_elbow", "right_wrist", "left_shoulder",
      "left_elbow", "left_wrist", "right_hip",      "right_knee",  "right_ankle", "left_hip",
      "left_knee",  "left_ankle", "right_eye",      "left_eye",    "right_ear",   "left_ear"};
  return names;
}

void PoseKeypoints::validate() const {
  if (points.size() != kNumKeypoints) {
    fail(ErrorKind::kInvalidArgument,
         "pose must have 18 keypoints, got " + std::to_string(points.size()));
  }
}

void PortraitImage::validate() const {
  require(pixels.defined() && pixels.dim() == 3 && pixels.size(0) == 3,
          "portrait image must be 3 x H x W");
  auto lo = pixels.min().item<float>();
  auto hi = pixels.max().item<float>();
  if (lo < -1.0f || hi > 1.0f) fail(ErrorKind::kInvalidArgument, "portrait values outside [-1, 1]");
}

bool SemanticLayout::is_hard() const {
  if (!onehot.defined() || onehot.dim() != 3) return false;
  auto binary = (onehot == 0) | (onehot == 1);
  if (!binary.all().item<bool>()) return false;
  return (onehot.sum(0) == 1).all().item<bool>();
}

torch::Tensor SemanticLayout::labels() const {
  // torch::argmax does not promise the first maximal index, so break ties
  // explicitly toward the lower class.
  auto max_values = std::get<0>(onehot.max(0, /*keepdim=*/true));
  auto is_max = onehot == max_values;
  auto index = torch::arange(onehot.size(0), torch::TensorOptions().dtype(torch::kLong)).view({-1, 1, 1}).expand_as(onehot);
  auto sentinel = torch::full_like(index, onehot.size(0));
  return torch::where(is_max, index, sentinel).amin(0);
}

void SemanticLayout::validate() const {
  if (!onehot.defined() || onehot.dim() != 3) fail(ErrorKind::kUnprocessable, "layout must be N x H x W");
  if (static_cast<int>(class_names.size()) != num_classes()) {
    fail(ErrorKind::kUnprocessable, "layout has " + std::to_string(num_classes()) + " channels but " +
                                        std::to_string(class_names.size()) + " class names");
  }
  if (class_names.empty() || class_names[0] != "background") {
    fail(ErrorKind::kUnprocessable, "class 0 must be background");
  }
}

void LayoutEdit::validate(int num_classes) const {
  auto valid = [&](int c) { return c >= 0 && c < num_classes; };
  if (!valid(part)) fail(ErrorKind::kUnprocessable, "edit part " + std::to_string(part) + " out of range");
  if (part == 0) fail(ErrorKind::kUnprocessable, "edits on the background class are not allowed");
  if (kind == Kind::kRelabel && !valid(target_part)) {
    fail(ErrorKind::kUnprocessable, "edit target part " + std::to_string(target_part) + " out of range");
  }
  if (kind != Kind::kRelabel && amount < 1) {
    fail(ErrorKind::kUnprocessable, "edit amount must be >= 1");
  }
  for (int c : yieldable) {
    if (!valid(c)) fail(ErrorKind::kUnprocessable, "yieldable class " + std::to_string(c) + " out of range");
  }
}

const std::vector<std::string>& lip20_class_names() {
  static const std::vector<std::string> names = {
      "background", "hat",       "hair",      "glove", "sunglasses", "upper_clothes", "dress",
      "coat",       "socks",     "pants",     "jumpsuits", "scarf",  "skirt",         "face",
      "left_arm",   "right_arm", "left_leg",  "right_leg", "left_shoe", "right_shoe"};
  return names;
}

const std::vector<std::string>& coarse7_class_names() {
  static const std::vector<std::string> names = {"background", "head", "upper_body", "arms",
                                                 "lower_body", "legs", "shoes"};
  return names;
}

const std::array<int, 20>& lip20_to_coarse7() {
  static const std::array<int, 20> map = {0, 1, 1, 3, 1, 2, 2, 2, 5, 4, 2, 2, 4, 1, 3, 3, 5, 5, 6, 6};
  return map;
}

int class_index(const std::vector<std::string>& names, std::string_view name) {
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

PoseHeatmap keypoints_to_heatmap(const PoseKeypoints& kp, int height, int width, int radius) {
  kp.validate();
  require(radius >= 1, "heatmap radius must be >= 1");
  require(height >= 2 * radius && width >= 2 * radius, "heatmap too small for radius");

  auto channels = torch::zeros({kNumKeypoints, height, width}, torch::kFloat32);
  auto acc = channels.accessor<float, 3>();
  const double r2 = static_cast<double>(radius) * radius;
  for (int c = 0; c < kNumKeypoints; ++c) {
    const auto& p = kp.points[c];
    if (!p.visible) continue;
    const int y0 = std::max(0, static_cast<int>(std::floor(p.y - radius)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(p.y + radius)));
    const int x0 = std::max(0, static_cast<int>(std::floor(p.x - radius)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(p.x + radius)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dy = y - p.y;
        const double dx = x - p.x;
        if (dx * dx + dy * dy <= r2) acc[c][y][x] = 1.0f;
      }
    }
  }
  return {channels};
}

SemanticLayout labels_to_onehot(const torch::Tensor& label_map, int num_classes,
                                std::vector<std::string> class_names) {
  require(label_map.dim() == 2, "label map must be H x W");
  require(num_classes >= 1, "num_classes must be positive");
  auto labels = label_map.to(torch::kLong).contiguous();

  auto out_of_range = (labels < 0) | (labels >= num_classes);
  if (out_of_range.any().item<bool>()) {
    auto where = out_of_range.nonzero()[0];
    const auto y = where[0].item<int64_t>();
    const auto x = where[1].item<int64_t>();
    std::ostringstream msg;
    msg << "label " << labels[y][x].item<int64_t>() << " at (y=" << y << ", x=" << x
        << ") outside [0, " << num_classes << ")";
    fail(ErrorKind::kUnprocessable, msg.str());
  }

  if (class_names.empty()) {
    if (num_classes == 20) {
      class_names = lip20_class_names();
    } else if (num_classes == 7) {
      class_names = coarse7_class_names();
    } else {
      class_names.push_back("background");
      for (int c = 1; c < num_classes; ++c) class_names.push_back("class_" + std::to_string(c));
    }
  }
  auto onehot = torch::one_hot(labels, num_classes).permute({2, 0, 1}).to(torch::kFloat32).contiguous();
  SemanticLayout layout{onehot, std::move(class_names)};
  layout.validate();
  return layout;
}

std::vector<Pixel> part_indices(const SemanticLayout& layout, int c) {
  require(c >= 0 && c < layout.num_classes(), "class index out of range");
  auto labels = layout.labels().contiguous();
  auto acc = labels.accessor<int64_t, 2>();
  std::vector<Pixel> out;
  for (int y = 0; y < labels.size(0); ++y) {
    for (int x = 0; x < labels.size(1); ++x) {
      if (acc[y][x] == c) out.push_back({y, x});
    }
  }
  return out;
}

namespace {

std::vector<Pixel> disk_offsets(int radius) {
  std::vector<Pixel> offsets;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) offsets.push_back({dy, dx});
    }
  }
  return offsets;
}

}  // namespace

SemanticLayout apply_edit(const SemanticLayout& layout, const LayoutEdit& edit) {
  if (!layout.is_hard()) fail(ErrorKind::kUnprocessable, "edits require a hard layout");
  edit.validate(layout.num_classes());

  auto labels = layout.labels().clone();
  auto acc = labels.accessor<int64_t, 2>();
  const int height = layout.height();
  const int width = layout.width();
  const auto part = static_cast<int64_t>(edit.part);

  switch (edit.kind) {
    case LayoutEdit::Kind::kRelabel:
      labels.masked_fill_(labels == part, edit.target_part);
      break;
    case LayoutEdit::Kind::kDilate: {
      std::vector<bool> may_take(layout.num_classes(), false);
      may_take[0] = true;
      for (int c : edit.yieldable) may_take[c] = c != edit.part;
      const auto source = labels.clone();
      auto src = source.accessor<int64_t, 2>();
      const auto offsets = disk_offsets(edit.amount);
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          if (src[y][x] != part) continue;
          for (const auto& o : offsets) {
            const int yy = y + o.y;
            const int xx = x + o.x;
            if (yy < 0 || yy >= height || xx < 0 || xx >= width) continue;
            if (src[yy][xx] != part && may_take[src[yy][xx]]) acc[yy][xx] = part;
          }
        }
      }
      break;
    }
    case LayoutEdit::Kind::kErode: {
      // Pixels outside the frame count as not belonging to the part.
      const auto source = labels.clone();
      auto src = source.accessor<int64_t, 2>();
      const auto offsets = disk_offsets(edit.amount);
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          if (src[y][x] != part) continue;
          for (const auto& o : offsets) {
            const int yy = y + o.y;
            const int xx = x + o.x;
            if (yy < 0 || yy >= height || xx < 0 || xx >= width || src[yy][xx] != part) {
              acc[y][x] = 0;
              break;
            }
          }
        }
      }
      break;
    }
  }
  return labels_to_onehot(labels, layout.num_classes(), layout.class_names);
}

PoseMask foreground_mask_from_layout(const SemanticLayout& layout) {
  if (!layout.is_hard()) fail(ErrorKind::kUnprocessable, "foreground mask requires a hard layout");
  return {(layout.labels() != 0).to(torch::kFloat32)};
}

SemanticLayout cluster_to_coarse7(const SemanticLayout& layout) {
  require(layout.num_classes() == 20, "clustering expects a 20-class layout");
  const auto& map = lip20_to_coarse7();
  auto table = torch::tensor(std::vector<int64_t>(map.begin(), map.end()), torch::kLong);
  auto labels = table.index({layout.labels()});
  return labels_to_onehot(labels, 7, coarse7_class_names());
}

torch::Tensor downsample_labels(const torch::Tensor& labels, int height, int width) {
  require(labels.dim() == 2, "label map must be H x W");
  const auto in_h = labels.size(0);
  const auto in_w = labels.size(1);
  if (in_h == height && in_w == width) return labels.to(torch::kLong);
  // Nearest neighbour at cell centres: output (y, x) samples input
  // (floor((y + 1/2) * in_h / h), floor((x + 1/2) * in_w / w)).
  const auto opts = torch::TensorOptions().dtype(torch::kLong);
  auto ys = torch::div((2 * torch::arange(height, opts) + 1) * in_h, 2 * height, "floor");
  auto xs = torch::div((2 * torch::arange(width, opts) + 1) * in_w, 2 * width, "floor");
  return labels.to(torch::kLong).index({ys.view({-1, 1}), xs.view({1, -1})});
}

}  // namespace recapture
