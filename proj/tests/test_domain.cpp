#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "recapture/domain.hpp"
#include "recapture/error.hpp"

using namespace recapture;

namespace {

PoseKeypoints single_point(double x, double y, bool visible, int joint = 0) {
  PoseKeypoints kp;
  kp.points.assign(kNumKeypoints, Keypoint{});
  kp.points[joint] = {x, y, visible};
  return kp;
}

SemanticLayout layout_of(const torch::Tensor& labels, int n = 20) { return labels_to_onehot(labels, n); }

int64_t count(const SemanticLayout& l, int c) { return l.labels().eq(c).sum().item<int64_t>(); }

}  // namespace

TEST(Heatmap, CentredRadiusFourDiskHas49Pixels) {
  const auto hm = keypoints_to_heatmap(single_point(32, 32, true), 64, 64, 4);
  EXPECT_EQ(hm.channels.sizes(), (std::vector<int64_t>{18, 64, 64}));
  EXPECT_EQ(hm.channels[0].sum().item<double>(), 49.0);
  EXPECT_EQ(hm.channels.slice(0, 1).sum().item<double>(), 0.0);
  EXPECT_TRUE(((hm.channels == 0) | (hm.channels == 1)).all().item<bool>());
}

TEST(Heatmap, InvisibleKeypointYieldsZeroChannel) {
  const auto hm = keypoints_to_heatmap(single_point(10, 10, false), 32, 32, 4);
  EXPECT_EQ(hm.channels.sum().item<double>(), 0.0);
}

TEST(Heatmap, DiskIsEuclideanLatticeBall) {
  const int r = 3;
  const auto hm = keypoints_to_heatmap(single_point(12, 9, true, 5), 24, 24, r);
  for (int y = 0; y < 24; ++y) {
    for (int x = 0; x < 24; ++x) {
      const bool inside = (x - 12) * (x - 12) + (y - 9) * (y - 9) <= r * r;
      EXPECT_EQ(hm.channels[5][y][x].item<float>(), inside ? 1.0f : 0.0f);
    }
  }
}

TEST(Heatmap, BorderDiskIsTruncated) {
  const auto hm = keypoints_to_heatmap(single_point(0, 0, true), 16, 16, 2);
  // Quarter of the 13-point radius-2 disk including the axes: 6 points.
  EXPECT_EQ(hm.channels[0].sum().item<double>(), 6.0);
}

TEST(OneHot, ZeroMapSevenClassesAndSinglePixel) {
  const auto l = labels_to_onehot(torch::zeros({4, 4}, torch::kLong), 7);
  EXPECT_EQ(l.onehot[0].sum().item<double>(), 16.0);
  EXPECT_EQ(l.onehot.slice(0, 1).sum().item<double>(), 0.0);
  EXPECT_EQ(l.class_names, coarse7_class_names());
  auto m = torch::zeros({4, 4}, torch::kLong);
  m[2][1] = 3;
  EXPECT_EQ(labels_to_onehot(m, 20).onehot[3].sum().item<double>(), 1.0);
}

TEST(OneHot, RoundTripAndHardness) {
  std::mt19937_64 rng(1);
  const auto labels = fixtures::random_labels(rng, 9, 7, 20);
  const auto l = layout_of(labels);
  EXPECT_TRUE(l.is_hard());
  EXPECT_TRUE(l.labels().equal(labels));
  EXPECT_TRUE(labels_to_onehot(l.labels(), 20).onehot.equal(l.onehot));
  SemanticLayout soft{torch::full({20, 2, 2}, 0.05f), lip20_class_names()};
  EXPECT_FALSE(soft.is_hard());
  EXPECT_TRUE(soft.labels().eq(0).all().item<bool>());
}

TEST(OneHot, ValidateRejectsNonBackgroundFirstClass) {
  SemanticLayout l{torch::zeros({2, 2, 2}), {"person", "background"}};
  EXPECT_THROW(l.validate(), Error);
}

TEST(PartIndices, EmptyRowMajorAndPartition) {
  auto labels = torch::ones({2, 2}, torch::kLong);
  const auto all_one = part_indices(layout_of(labels), 1);
  EXPECT_EQ(all_one, (std::vector<Pixel>{{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
  EXPECT_TRUE(part_indices(layout_of(labels), 5).empty());

  std::mt19937_64 rng(2);
  const auto l = layout_of(fixtures::random_labels(rng, 6, 5, 20));
  std::set<std::pair<int, int>> seen;
  size_t total = 0;
  for (int c = 0; c < 20; ++c) {
    for (const auto& p : part_indices(l, c)) {
      seen.insert({p.y, p.x});
      ++total;
    }
  }
  EXPECT_EQ(total, 30u);
  EXPECT_EQ(seen.size(), 30u);
}

TEST(PartIndices, DisjointBlobsAreUnion) {
  auto labels = torch::zeros({5, 5}, torch::kLong);
  labels.slice(0, 0, 2).slice(1, 0, 2).fill_(4);
  labels.slice(0, 3, 5).slice(1, 3, 5).fill_(4);
  EXPECT_EQ(part_indices(layout_of(labels), 4).size(), 8u);
}

TEST(ApplyEdit, RelabelMovesAllPixels) {
  std::mt19937_64 rng(3);
  const auto l = layout_of(fixtures::random_labels(rng, 8, 8, 6));
  const auto k4 = count(l, 4);
  const auto k6 = count(l, 6);
  LayoutEdit e;
  e.kind = LayoutEdit::Kind::kRelabel;
  e.part = 4;
  e.target_part = 6;
  const auto out = apply_edit(l, e);
  EXPECT_EQ(count(out, 4), 0);
  EXPECT_EQ(count(out, 6), k4 + k6);
  EXPECT_TRUE(out.is_hard());
}

TEST(ApplyEdit, RelabelBackRestoresIffTargetWasEmpty) {
  auto labels = torch::zeros({4, 4}, torch::kLong);
  labels[1][1] = 4;
  labels[2][2] = 4;
  const auto l = layout_of(labels);
  LayoutEdit there{LayoutEdit::Kind::kRelabel, 4, 6};
  LayoutEdit back{LayoutEdit::Kind::kRelabel, 6, 4};
  EXPECT_TRUE(apply_edit(apply_edit(l, there), back).onehot.equal(l.onehot));
  labels[0][0] = 6;
  const auto l2 = layout_of(labels);
  EXPECT_FALSE(apply_edit(apply_edit(l2, there), back).onehot.equal(l2.onehot));
}

TEST(ApplyEdit, DilateSinglePixelGivesFivePixelDisk) {
  auto labels = torch::zeros({7, 7}, torch::kLong);
  labels[3][3] = 5;
  LayoutEdit e{LayoutEdit::Kind::kDilate, 5, 5, 1};
  const auto out = apply_edit(layout_of(labels), e);
  EXPECT_EQ(count(out, 5), 5);
  for (auto [y, x] : std::vector<std::pair<int, int>>{{3, 3}, {2, 3}, {4, 3}, {3, 2}, {3, 4}}) {
    EXPECT_EQ(out.labels()[y][x].item<int64_t>(), 5);
  }
}

TEST(ApplyEdit, DilateOverwritesOtherPartsOnlyWhenYieldable) {
  auto labels = torch::zeros({5, 5}, torch::kLong);
  labels[2][2] = 5;
  labels[2][3] = 13;
  LayoutEdit e{LayoutEdit::Kind::kDilate, 5, 5, 1};
  EXPECT_EQ(apply_edit(layout_of(labels), e).labels()[2][3].item<int64_t>(), 13);
  e.yieldable = {13};
  EXPECT_EQ(apply_edit(layout_of(labels), e).labels()[2][3].item<int64_t>(), 5);
}

TEST(ApplyEdit, LargeErodeRemovesPart) {
  auto labels = torch::zeros({8, 8}, torch::kLong);
  labels.slice(0, 2, 5).slice(1, 2, 5).fill_(9);
  LayoutEdit e{LayoutEdit::Kind::kErode, 9, 9, 3};
  const auto out = apply_edit(layout_of(labels), e);
  EXPECT_EQ(count(out, 9), 0);
  EXPECT_EQ(count(out, 0), 64);
}

TEST(ApplyEdit, PreservesOneHotnessAndPixelCount) {
  std::mt19937_64 rng(4);
  const auto l = layout_of(fixtures::random_labels(rng, 10, 10, 20));
  for (const auto kind : {LayoutEdit::Kind::kRelabel, LayoutEdit::Kind::kDilate, LayoutEdit::Kind::kErode}) {
    LayoutEdit e{kind, 5, 7, 2};
    const auto out = apply_edit(l, e);
    EXPECT_TRUE(out.is_hard());
    EXPECT_EQ(out.onehot.sum().item<double>(), 100.0);
  }
}

TEST(ApplyEdit, RejectsOutOfRangeClass) {
  const auto l = layout_of(torch::zeros({3, 3}, torch::kLong), 7);
  EXPECT_THROW(apply_edit(l, LayoutEdit{LayoutEdit::Kind::kRelabel, 3, 9}), Error);
}

TEST(ForegroundMask, CountsNonBackground) {
  EXPECT_EQ(foreground_mask_from_layout(layout_of(torch::zeros({4, 4}, torch::kLong))).mask.sum().item<double>(), 0.0);
  std::mt19937_64 rng(5);
  const auto labels = fixtures::random_labels(rng, 6, 6, 20);
  EXPECT_EQ(foreground_mask_from_layout(layout_of(labels)).mask.sum().item<double>(),
            labels.ne(0).sum().item<double>());
}

TEST(Coarse7, ClustersKeepBackgroundAndShoes) {
  auto labels = torch::zeros({2, 2}, torch::kLong);
  labels[0][0] = class_index(lip20_class_names(), "left_shoe");
  labels[0][1] = class_index(lip20_class_names(), "face");
  const auto c = cluster_to_coarse7(layout_of(labels));
  EXPECT_EQ(c.num_classes(), 7);
  EXPECT_EQ(c.labels()[0][0].item<int64_t>(), class_index(coarse7_class_names(), "shoes"));
  EXPECT_EQ(c.labels()[0][1].item<int64_t>(), class_index(coarse7_class_names(), "head"));
  EXPECT_EQ(c.labels()[1][1].item<int64_t>(), 0);
}

TEST(DownsampleLabels, NearestNeighbourKeepsIntegerLabels) {
  auto labels = torch::arange(16, torch::TensorOptions().dtype(torch::kLong)).view({4, 4});
  const auto d = downsample_labels(labels, 2, 2);
  EXPECT_EQ(d.scalar_type(), torch::kLong);
  EXPECT_EQ(d.sizes(), (std::vector<int64_t>{2, 2}));
  // Cell centres: output (y, x) reads input (2y + 1, 2x + 1).
  EXPECT_EQ(d[0][0].item<int64_t>(), 5);
  EXPECT_EQ(d[0][1].item<int64_t>(), 7);
  EXPECT_EQ(d[1][1].item<int64_t>(), 15);
  const auto up = downsample_labels(d, 4, 4);
  EXPECT_EQ(up[3][3].item<int64_t>(), 15);
  EXPECT_EQ(up[0][0].item<int64_t>(), 5);
}

TEST(PoseKeypoints, ValidateRequires18) {
  PoseKeypoints kp;
  kp.points.resize(17);
  EXPECT_THROW(kp.validate(), Error);
  kp.points.resize(18);
  EXPECT_NO_THROW(kp.validate());
}
