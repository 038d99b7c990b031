#include "recapture/puppet.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "recapture/error.hpp"
#include "recapture/formats.hpp"

namespace recapture {

namespace fs = std::filesystem;

namespace {

constexpr double kReference = 128.0;

// Class indices of the 20-class scheme used by the renderer.
constexpr int kHat = 1;
constexpr int kHair = 2;
constexpr int kUpperClothes = 5;
constexpr int kCoat = 7;
constexpr int kPants = 9;
constexpr int kSkirt = 12;
constexpr int kFace = 13;
constexpr int kLeftArm = 14;
constexpr int kRightArm = 15;
constexpr int kLeftLeg = 16;
constexpr int kRightLeg = 17;
constexpr int kLeftShoe = 18;
constexpr int kRightShoe = 19;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
};

// Unit vector at `angle` from straight down (image +y), positive toward +x.
Vec2 down_dir(double angle) { return {std::sin(angle), std::cos(angle)}; }

double segment_distance2(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 d = p - (a + ab * t);
  return d.dot(d);
}

// Convex polygon, vertices in consistent winding.
bool inside_convex(Vec2 p, const std::vector<Vec2>& poly) {
  int sign = 0;
  for (size_t i = 0; i < poly.size(); ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % poly.size()];
    const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    if (cross == 0.0) continue;
    const int s = cross > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

struct Shape {
  enum class Kind { kCapsule, kDisk, kPolygon } kind;
  int cls;
  Vec2 a, b;  // capsule ends or disk centre (a)
  double radius = 0.0;
  std::vector<Vec2> polygon;

  bool contains(Vec2 p) const {
    switch (kind) {
      case Kind::kCapsule:
        return segment_distance2(p, a, b) <= radius * radius;
      case Kind::kDisk:
        return (p - a).dot(p - a) <= radius * radius;
      case Kind::kPolygon:
        return inside_convex(p, polygon);
    }
    return false;
  }

  // Conservative bounding box.
  void bounds(double& x0, double& y0, double& x1, double& y1) const {
    if (kind == Kind::kPolygon) {
      x0 = x1 = polygon[0].x;
      y0 = y1 = polygon[0].y;
      for (const auto& v : polygon) {
        x0 = std::min(x0, v.x);
        x1 = std::max(x1, v.x);
        y0 = std::min(y0, v.y);
        y1 = std::max(y1, v.y);
      }
      return;
    }
    const Vec2 e = kind == Kind::kDisk ? a : b;
    x0 = std::min(a.x, e.x) - radius;
    x1 = std::max(a.x, e.x) + radius;
    y0 = std::min(a.y, e.y) - radius;
    y1 = std::max(a.y, e.y) + radius;
  }
};

Shape capsule(int cls, Vec2 a, Vec2 b, double r) { return {Shape::Kind::kCapsule, cls, a, b, r, {}}; }
Shape disk(int cls, Vec2 c, double r) { return {Shape::Kind::kDisk, cls, c, c, r, {}}; }
Shape polygon(int cls, std::vector<Vec2> pts) { return {Shape::Kind::kPolygon, cls, {}, {}, 0.0, std::move(pts)}; }

// Posed skeleton and drawable shapes, in output pixel coordinates.
struct Figure {
  std::array<Vec2, kNumKeypoints> joints;
  std::vector<Shape> shapes;  // back to front
  Vec2 neck;
  Vec2 spine_down;  // unit, neck -> pelvis
  double stripe_period = 6.0;
};

Figure pose_figure(const PuppetSpec& spec, const PoseParams& pose, int height, int width) {
  const double sx = width / kReference;
  const double sy = height / kReference;
  const double s = pose.scale;
  auto out = [&](Vec2 p) { return Vec2{p.x * sx, p.y * sy}; };

  const Vec2 pelvis{pose.root_x, pose.root_y};
  const Vec2 up = down_dir(pose.torso_lean) * -1.0;
  const Vec2 perp{std::cos(pose.torso_lean), -std::sin(pose.torso_lean)};  // toward figure's left (+x)
  const Vec2 neck = pelvis + up * (spec.spine * s);
  const Vec2 head_up = down_dir(pose.torso_lean + pose.head_tilt) * -1.0;
  const Vec2 head_perp{std::cos(pose.torso_lean + pose.head_tilt), -std::sin(pose.torso_lean + pose.head_tilt)};
  const double hr = spec.head_radius * s;
  const Vec2 head = neck + head_up * (spec.neck * s + hr);

  const Vec2 shoulder_line = neck - up * (2.0 * s);
  const Vec2 r_shoulder = shoulder_line - perp * (spec.shoulder_half_width * s);
  const Vec2 l_shoulder = shoulder_line + perp * (spec.shoulder_half_width * s);
  const Vec2 r_hip = pelvis - perp * (spec.hip_half_width * s);
  const Vec2 l_hip = pelvis + perp * (spec.hip_half_width * s);

  const Vec2 r_elbow = r_shoulder + down_dir(pose.torso_lean + pose.right_upper_arm) * (spec.upper_arm * s);
  const Vec2 r_wrist =
      r_elbow + down_dir(pose.torso_lean + pose.right_upper_arm + pose.right_forearm) * (spec.forearm * s);
  const Vec2 l_elbow = l_shoulder + down_dir(pose.torso_lean + pose.left_upper_arm) * (spec.upper_arm * s);
  const Vec2 l_wrist =
      l_elbow + down_dir(pose.torso_lean + pose.left_upper_arm + pose.left_forearm) * (spec.forearm * s);

  const Vec2 r_knee = r_hip + down_dir(pose.right_thigh) * (spec.thigh * s);
  const Vec2 r_ankle = r_knee + down_dir(pose.right_thigh + pose.right_shin) * (spec.shin * s);
  const Vec2 l_knee = l_hip + down_dir(pose.left_thigh) * (spec.thigh * s);
  const Vec2 l_ankle = l_knee + down_dir(pose.left_thigh + pose.left_shin) * (spec.shin * s);

  const Vec2 nose = head - head_up * (0.15 * hr);
  Figure fig;
  auto& j = fig.joints;
  j[kNose] = nose;
  j[kNeck] = neck;
  j[kRightShoulder] = r_shoulder;
  j[kRightElbow] = r_elbow;
  j[kRightWrist] = r_wrist;
  j[kLeftShoulder] = l_shoulder;
  j[kLeftElbow] = l_elbow;
  j[kLeftWrist] = l_wrist;
  j[kRightHip] = r_hip;
  j[kRightKnee] = r_knee;
  j[kRightAnkle] = r_ankle;
  j[kLeftHip] = l_hip;
  j[kLeftKnee] = l_knee;
  j[kLeftAnkle] = l_ankle;
  j[kRightEye] = head - head_perp * (0.4 * hr) + head_up * (0.2 * hr);
  j[kLeftEye] = head + head_perp * (0.4 * hr) + head_up * (0.2 * hr);
  j[kRightEar] = head - head_perp * (0.85 * hr);
  j[kLeftEar] = head + head_perp * (0.85 * hr);
  for (auto& p : j) p = out(p);

  const double arm_r = spec.arm_girth * s;
  const double leg_r = spec.leg_girth * s;
  auto& shapes = fig.shapes;

  // Torso: quad from shoulders to hips, with rounded shoulders.
  const Vec2 waist_r = r_hip - perp * (1.5 * s) - up * (1.0 * s);
  const Vec2 waist_l = l_hip + perp * (1.5 * s) - up * (1.0 * s);
  shapes.push_back(polygon(spec.upper_class, {out(r_shoulder), out(l_shoulder), out(waist_l), out(waist_r)}));
  shapes.push_back(capsule(spec.upper_class, out(r_shoulder), out(l_shoulder), arm_r * 1.2 * std::sqrt(sx * sy)));

  // Legs (skin), then the lower garment over the thighs.
  const double rs = std::sqrt(sx * sy);
  shapes.push_back(capsule(kRightLeg, out(r_hip), out(r_knee), leg_r * rs));
  shapes.push_back(capsule(kRightLeg, out(r_knee), out(r_ankle), leg_r * rs));
  shapes.push_back(capsule(kLeftLeg, out(l_hip), out(l_knee), leg_r * rs));
  shapes.push_back(capsule(kLeftLeg, out(l_knee), out(l_ankle), leg_r * rs));
  const Vec2 band_top_r = r_hip - perp * (leg_r * 1.1) + up * (4.0 * s);
  const Vec2 band_top_l = l_hip + perp * (leg_r * 1.1) + up * (4.0 * s);
  if (spec.lower_class == kSkirt) {
    const double hem = spec.thigh * 0.8 * s;
    const Vec2 hem_r = pelvis - perp * (spec.hip_half_width * 1.7 * s) - up * hem;
    const Vec2 hem_l = pelvis + perp * (spec.hip_half_width * 1.7 * s) - up * hem;
    shapes.push_back(polygon(kSkirt, {out(band_top_r), out(band_top_l), out(hem_l), out(hem_r)}));
  } else {
    const Vec2 band_bottom_r = r_hip - perp * (leg_r * 1.1) - up * (2.0 * s);
    const Vec2 band_bottom_l = l_hip + perp * (leg_r * 1.1) - up * (2.0 * s);
    shapes.push_back(polygon(kPants, {out(band_top_r), out(band_top_l), out(band_bottom_l), out(band_bottom_r)}));
    shapes.push_back(capsule(kPants, out(r_hip), out(r_knee), leg_r * 1.25 * rs));
    shapes.push_back(capsule(kPants, out(l_hip), out(l_knee), leg_r * 1.25 * rs));
  }

  // Shoes point along `facing`.
  const Vec2 toe{pose.facing * spec.foot_length * s, 0.0};
  const Vec2 sole{0.0, leg_r * 0.6};
  shapes.push_back(capsule(kRightShoe, out(r_ankle + sole), out(r_ankle + sole + toe), leg_r * 0.95 * rs));
  shapes.push_back(capsule(kLeftShoe, out(l_ankle + sole), out(l_ankle + sole + toe), leg_r * 0.95 * rs));

  // Arms in front of the torso.
  shapes.push_back(capsule(kRightArm, out(r_shoulder), out(r_elbow), arm_r * rs));
  shapes.push_back(capsule(kRightArm, out(r_elbow), out(r_wrist), arm_r * rs));
  shapes.push_back(capsule(kLeftArm, out(l_shoulder), out(l_elbow), arm_r * rs));
  shapes.push_back(capsule(kLeftArm, out(l_elbow), out(l_wrist), arm_r * rs));

  // Head: neck, hair behind the face, optional hat on the crown.
  shapes.push_back(capsule(kFace, out(neck - up * (3.0 * s)), out(head), hr * 0.38 * rs));
  shapes.push_back(disk(kHair, out(head + head_up * (0.22 * hr)), hr * 1.08 * rs));
  shapes.push_back(disk(kFace, out(head - head_up * (0.05 * hr)), hr * 0.9 * rs));
  if (spec.has_hat) {
    const Vec2 crown = head + head_up * (0.95 * hr);
    shapes.push_back(capsule(kHat, out(crown - head_perp * (0.8 * hr)), out(crown + head_perp * (0.8 * hr)),
                             hr * 0.38 * rs));
  }

  fig.neck = out(neck);
  const Vec2 down_out = out(pelvis) - out(neck);
  const double len = std::sqrt(down_out.dot(down_out));
  fig.spine_down = down_out * (1.0 / len);
  fig.stripe_period = spec.part_colors[spec.upper_class].stripe_period * s * sy;
  return fig;
}

bool fits(const Figure& fig, int height, int width) {
  for (const auto& shape : fig.shapes) {
    double x0, y0, x1, y1;
    shape.bounds(x0, y0, x1, y1);
    if (x0 < 0.0 || y0 < 0.0 || x1 > width - 1 || y1 > height - 1) return false;
  }
  return true;
}

Rgb random_color(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> channel(20, 230);
  return {static_cast<uint8_t>(channel(rng)), static_cast<uint8_t>(channel(rng)), static_cast<uint8_t>(channel(rng))};
}

double color_distance(Rgb a, Rgb b) {
  const double dr = a.r - b.r, dg = a.g - b.g, db = a.b - b.b;
  return std::sqrt(dr * dr + dg * dg + db * db);
}

Rgb distinct_color(std::mt19937_64& rng, const std::vector<Rgb>& avoid, double min_distance) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const Rgb c = random_color(rng);
    bool ok = true;
    for (const auto& a : avoid) ok = ok && color_distance(c, a) >= min_distance;
    if (ok) return c;
  }
  return random_color(rng);
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

PoseParams fitting_pose(std::mt19937_64& rng, const PuppetSpec& spec, int height, int width) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    auto pose = sample_pose(rng);
    if (fits(pose_figure(spec, pose, height, width), height, width)) return pose;
  }
  fail(ErrorKind::kInvalidArgument, "could not sample an in-frame pose for puppet " + std::to_string(spec.seed));
}

}  // namespace

int PuppetConfig::effective_radius() const {
  if (heatmap_radius > 0) return heatmap_radius;
  return std::max(1, static_cast<int>(std::lround(4.0 * height / 256.0)));
}

PuppetSpec sample_puppet(uint64_t seed, const PuppetConfig& config) {
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> girth(config.min_girth_scale, config.max_girth_scale);
  std::uniform_real_distribution<double> length(0.92, 1.08);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  PuppetSpec spec;
  spec.seed = seed;
  spec.spine *= length(rng);
  spec.upper_arm *= length(rng);
  spec.forearm *= length(rng);
  spec.thigh *= length(rng);
  spec.shin *= length(rng);
  spec.shoulder_half_width *= girth(rng);
  spec.hip_half_width *= girth(rng);
  spec.arm_girth *= girth(rng);
  spec.leg_girth *= girth(rng);
  spec.head_radius *= length(rng);

  spec.upper_class = unit(rng) < 0.5 ? kUpperClothes : kCoat;
  spec.lower_class = unit(rng) < 0.6 ? kPants : kSkirt;
  spec.has_hat = unit(rng) < 0.25;

  static const std::array<Rgb, 6> skin_tones = {
      Rgb{241, 194, 160}, Rgb{224, 172, 135}, Rgb{198, 134, 96}, Rgb{160, 103, 70}, Rgb{115, 72, 46}, Rgb{250, 214, 190}};
  static const std::array<Rgb, 5> hair_tones = {Rgb{30, 25, 22}, Rgb{90, 56, 30}, Rgb{160, 110, 50},
                                                Rgb{200, 170, 90}, Rgb{120, 40, 30}};
  const Rgb skin = skin_tones[std::uniform_int_distribution<int>(0, 5)(rng)];
  const Rgb hair = hair_tones[std::uniform_int_distribution<int>(0, 4)(rng)];

  std::vector<Rgb> used = {config.background, skin, hair};
  auto next_color = [&]() {
    const Rgb c = distinct_color(rng, used, 70.0);
    used.push_back(c);
    return c;
  };

  for (auto& appearance : spec.part_colors) appearance.base = next_color();
  spec.part_colors[kFace].base = skin;
  spec.part_colors[kLeftArm].base = skin;
  spec.part_colors[kRightArm].base = skin;
  spec.part_colors[kLeftLeg].base = skin;
  spec.part_colors[kRightLeg].base = skin;
  spec.part_colors[kHair].base = hair;
  // Both shoes share one colour, matched to the hair.
  spec.part_colors[kLeftShoe].base = hair;
  spec.part_colors[kRightShoe].base = hair;
  spec.part_colors[0].base = config.background;

  if (unit(rng) < config.stripe_probability) {
    auto& upper = spec.part_colors[spec.upper_class];
    upper.stripe = distinct_color(rng, {config.background, upper.base}, 90.0);
    upper.stripe_period = std::uniform_real_distribution<double>(4.0, 8.0)(rng);
  }
  return spec;
}

PoseParams sample_pose(std::mt19937_64& rng) {
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  PoseParams pose;
  pose.torso_lean = uniform(-0.15, 0.15);
  pose.head_tilt = uniform(-0.25, 0.25);
  pose.right_upper_arm = uniform(-2.4, 0.45);
  pose.right_forearm = uniform(-1.4, 1.4);
  pose.left_upper_arm = uniform(-0.45, 2.4);
  pose.left_forearm = uniform(-1.4, 1.4);
  pose.right_thigh = uniform(-0.6, 0.3);
  pose.right_shin = uniform(-0.5, 0.5);
  pose.left_thigh = uniform(-0.3, 0.6);
  pose.left_shin = uniform(-0.5, 0.5);
  pose.root_x = uniform(56.0, 72.0);
  pose.root_y = uniform(62.0, 68.0);
  pose.scale = uniform(0.82, 0.98);
  pose.facing = uniform(0.0, 1.0) < 0.5 ? -1 : 1;
  return pose;
}

PuppetRender render(const PuppetSpec& spec, const PoseParams& pose, int height, int width,
                    const PuppetConfig& config) {
  require(height >= 8 && width >= 8, "render resolution too small");
  const Figure fig = pose_figure(spec, pose, height, width);
  if (!fits(fig, height, width)) fail(ErrorKind::kInvalidArgument, "pose leaves the frame");

  auto labels = torch::zeros({height, width}, torch::kLong);
  auto coverage = torch::zeros({height, width}, torch::kFloat32);
  auto rgb = torch::empty({height, width, 3}, torch::kUInt8);
  auto lab = labels.accessor<int64_t, 2>();
  auto cov = coverage.accessor<float, 2>();
  auto pix = rgb.accessor<uint8_t, 3>();

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Vec2 p{static_cast<double>(x), static_cast<double>(y)};
      int cls = 0;
      for (const auto& shape : fig.shapes) {
        if (shape.contains(p)) cls = shape.cls;
      }
      lab[y][x] = cls;
      cov[y][x] = cls != 0 ? 1.0f : 0.0f;
      const auto& look = spec.part_colors[cls];
      Rgb c = cls == 0 ? config.background : look.base;
      if (cls != 0 && look.stripe) {
        const double t = (p - fig.neck).dot(fig.spine_down);
        const auto band = static_cast<long>(std::floor(t / fig.stripe_period));
        if (band % 2 != 0) c = *look.stripe;
      }
      pix[y][x][0] = c.r;
      pix[y][x][1] = c.g;
      pix[y][x][2] = c.b;
    }
  }

  PuppetRender out;
  out.image.pixels = rgb.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous();
  out.layout = labels_to_onehot(labels, kPuppetClasses, lip20_class_names());
  out.coverage = coverage;
  for (const auto& j : fig.joints) out.keypoints.points.push_back({j.x, j.y, true});
  return out;
}

PuppetRender crop_below(const PuppetRender& full, int crop_row, const PuppetConfig& config) {
  PuppetRender out = full;
  const int height = full.layout.height();
  crop_row = std::clamp(crop_row, 0, height);
  auto labels = full.layout.labels().clone();
  labels.slice(0, crop_row).fill_(0);
  out.layout = labels_to_onehot(labels, full.layout.num_classes(), full.layout.class_names);
  out.coverage = full.coverage.clone();
  out.coverage.slice(0, crop_row).fill_(0.0f);
  out.image.pixels = full.image.pixels.clone();
  const float bg[3] = {config.background.r / 127.5f - 1.0f, config.background.g / 127.5f - 1.0f,
                       config.background.b / 127.5f - 1.0f};
  for (int c = 0; c < 3; ++c) out.image.pixels[c].slice(0, crop_row).fill_(bg[c]);
  for (auto& p : out.keypoints.points) {
    if (p.y >= crop_row - 0.5) p.visible = false;
  }
  return out;
}

TrainSample to_sample(const PuppetRender& r, int heatmap_radius) {
  TrainSample sample;
  sample.image = r.image;
  sample.layout = r.layout;
  sample.keypoints = r.keypoints;
  sample.heatmap = keypoints_to_heatmap(r.keypoints, r.layout.height(), r.layout.width(), heatmap_radius);
  sample.mask = foreground_mask_from_layout(r.layout);
  return sample;
}

TrainSamplePair make_pair(uint64_t seed, const PuppetConfig& config) {
  const PuppetSpec spec = sample_puppet(seed, config);
  std::mt19937_64 rng(splitmix64(seed ^ 0x5A5A5A5A5A5A5A5AULL));
  const PoseParams source_pose = fitting_pose(rng, spec, config.height, config.width);
  const PoseParams target_pose = fitting_pose(rng, spec, config.height, config.width);
  const bool crop = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < config.crop_probability;

  PuppetRender source = render(spec, source_pose, config.height, config.width, config);
  const PuppetRender target = render(spec, target_pose, config.height, config.width, config);
  if (crop) {
    // Cut just above the first row that shows a lower leg or shoe, and no lower
    // than a third of the way down the thighs.
    const auto labels = source.layout.labels();
    const auto legs = (labels >= kLeftLeg) & (labels <= kRightShoe);
    const auto rows = legs.any(1).nonzero();
    const auto& kp = source.keypoints.points;
    const double hip = std::max(kp[kRightHip].y, kp[kLeftHip].y);
    const double knee = std::max(kp[kRightKnee].y, kp[kLeftKnee].y);
    int crop_row = static_cast<int>(std::ceil(hip + 0.35 * (knee - hip)));
    if (rows.numel() > 0) crop_row = std::min(crop_row, static_cast<int>(rows[0][0].item<int64_t>()));
    source = crop_below(source, crop_row, config);
  }

  const int radius = config.effective_radius();
  TrainSamplePair pair;
  pair.source = to_sample(source, radius);
  pair.target = to_sample(target, radius);
  pair.puppet_id = "puppet-" + std::to_string(seed);
  pair.source_cropped = crop;
  return pair;
}

std::vector<std::pair<std::string, PoseParams>> pose_presets() {
  std::vector<std::pair<std::string, PoseParams>> presets;
  PoseParams standing;
  presets.emplace_back("standing", standing);

  PoseParams arms_up = standing;
  arms_up.right_upper_arm = -2.1;
  arms_up.left_upper_arm = 2.1;
  arms_up.right_forearm = -0.3;
  arms_up.left_forearm = 0.3;
  arms_up.scale = 0.9;
  presets.emplace_back("arms-up", arms_up);

  PoseParams t_pose = standing;
  t_pose.right_upper_arm = -1.5708;
  t_pose.left_upper_arm = 1.5708;
  t_pose.scale = 0.92;
  presets.emplace_back("t-pose", t_pose);

  PoseParams walking = standing;
  walking.right_thigh = -0.45;
  walking.right_shin = 0.3;
  walking.left_thigh = 0.35;
  walking.left_shin = -0.2;
  walking.right_upper_arm = 0.3;
  walking.left_upper_arm = -0.3;
  walking.facing = 1;
  presets.emplace_back("walking", walking);

  PoseParams side = standing;
  side.torso_lean = 0.12;
  side.head_tilt = 0.15;
  side.right_upper_arm = -0.6;
  side.right_forearm = -0.8;
  side.left_upper_arm = 0.2;
  side.facing = -1;
  presets.emplace_back("side", side);

  PoseParams kick = standing;
  kick.left_thigh = 0.6;
  kick.left_shin = 0.4;
  kick.right_upper_arm = -1.0;
  kick.left_upper_arm = 1.0;
  kick.scale = 0.9;
  presets.emplace_back("kick", kick);
  return presets;
}

PoseKeypoints preset_keypoints(const PoseParams& pose, int height, int width) {
  const Figure fig = pose_figure(PuppetSpec{}, pose, height, width);
  PoseKeypoints kp;
  for (const auto& j : fig.joints) kp.points.push_back({j.x, j.y, true});
  return kp;
}

uint64_t pair_seed(uint64_t dataset_seed, int index) {
  return splitmix64(dataset_seed * 0x100000001B3ULL + static_cast<uint64_t>(index));
}

std::string split_for_index(int index) { return index % 10 == 9 ? "test" : "train"; }

namespace {

std::string pair_id(int index) {
  std::ostringstream id;
  id << std::setw(6) << std::setfill('0') << index;
  return id.str();
}

}  // namespace

nlohmann::json write_dataset(int count, uint64_t seed, const fs::path& directory, const PuppetConfig& config) {
  require(count >= 0, "dataset count must be non-negative");
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + directory.string() + ": " + ec.message());

  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["seed"] = seed;
  manifest["count"] = count;
  manifest["resolution"] = {config.height, config.width};
  manifest["heatmap_radius"] = config.effective_radius();
  manifest["crop_probability"] = config.crop_probability;
  manifest["num_classes"] = kPuppetClasses;
  manifest["class_names"] = lip20_class_names();
  manifest["pairs"] = nlohmann::json::array();

  for (int i = 0; i < count; ++i) {
    const auto pair = make_pair(pair_seed(seed, i), config);
    const std::string id = pair_id(i);
    const fs::path rel = fs::path("pairs") / id;
    nlohmann::json entry;
    entry["id"] = id;
    entry["puppet_id"] = pair.puppet_id;
    entry["split"] = split_for_index(i);
    entry["source_cropped"] = pair.source_cropped;
    for (const auto& [role, sample] : {std::pair<std::string, const TrainSample*>{"source", &pair.source},
                                       std::pair<std::string, const TrainSample*>{"target", &pair.target}}) {
      const auto image = (rel / (role + "_image.png")).generic_string();
      const auto layout = (rel / (role + "_layout.png")).generic_string();
      const auto pose = (rel / (role + "_pose.json")).generic_string();
      try {
        save_image(directory / image, sample->image);
        save_layout(directory / layout, sample->layout, /*sidecar=*/false);
        save_pose(directory / pose, sample->keypoints);
      } catch (const Error& e) {
        fail(ErrorKind::kIo, "writing pair " + id + " under " + directory.string() + ": " + e.what());
      }
      entry[role] = {{"image", image}, {"layout", layout}, {"pose", pose}};
    }
    manifest["pairs"].push_back(entry);
  }
  write_file(directory / "classes.json",
             dump_json({{"num_classes", kPuppetClasses}, {"class_names", lip20_class_names()}}));
  write_file(directory / "manifest.json", dump_json(manifest));
  return manifest;
}

void for_each_pair(const fs::path& directory, const std::string& split, int heatmap_radius,
                   const std::function<void(LoadedPair&&)>& visit) {
  const fs::path manifest_path = directory / "manifest.json";
  if (!fs::exists(manifest_path)) fail(ErrorKind::kNotFound, "no manifest at " + manifest_path.string());
  const auto manifest = nlohmann::json::parse(read_file(manifest_path));
  const int num_classes = manifest.at("num_classes").get<int>();
  const auto names = manifest.at("class_names").get<std::vector<std::string>>();
  const int radius = heatmap_radius > 0 ? heatmap_radius : manifest.value("heatmap_radius", 1);

  for (const auto& entry : manifest.at("pairs")) {
    DatasetEntry e{entry.at("id").get<std::string>(), entry.at("puppet_id").get<std::string>(),
                   entry.at("split").get<std::string>(), entry.value("source_cropped", false)};
    if (!split.empty() && e.split != split) continue;
    auto load_sample = [&](const nlohmann::json& files) {
      TrainSample s;
      s.image = load_image(directory / files.at("image").get<std::string>());
      s.layout = raster_to_layout(decode_png(read_file(directory / files.at("layout").get<std::string>())),
                                  num_classes, names);
      s.keypoints = load_pose(directory / files.at("pose").get<std::string>());
      s.heatmap = keypoints_to_heatmap(s.keypoints, s.layout.height(), s.layout.width(), radius);
      s.mask = foreground_mask_from_layout(s.layout);
      return s;
    };
    LoadedPair lp;
    lp.entry = e;
    lp.pair.source = load_sample(entry.at("source"));
    lp.pair.target = load_sample(entry.at("target"));
    lp.pair.puppet_id = e.puppet_id;
    lp.pair.source_cropped = e.source_cropped;
    visit(std::move(lp));
  }
}

std::vector<LoadedPair> load_dataset(const fs::path& directory, const std::string& split, int heatmap_radius) {
  std::vector<LoadedPair> out;
  for_each_pair(directory, split, heatmap_radius, [&](LoadedPair&& lp) { out.push_back(std::move(lp)); });
  return out;
}

}  // namespace recapture
