#include <gtest/gtest.h>

#include <cmath>

#include "checks.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "recapture/error.hpp"
#include "recapture/sat.hpp"

using namespace recapture;

namespace {

torch::Tensor labels_from(std::vector<std::vector<int64_t>> rows) {
  auto t = torch::empty({static_cast<int64_t>(rows.size()), static_cast<int64_t>(rows[0].size())}, torch::kLong);
  for (size_t y = 0; y < rows.size(); ++y) {
    for (size_t x = 0; x < rows[0].size(); ++x) t[y][x] = rows[y][x];
  }
  return t;
}

SatWeights identity_weights(int c) {
  return {torch::eye(c, torch::kDouble), torch::eye(c, torch::kDouble)};
}

}  // namespace

TEST(SatScores, OrthogonalFeaturesScoreZero) {
  auto enc = torch::zeros({2, 1, 3}, torch::kDouble);
  enc[0].fill_(1.0);
  auto dec = torch::zeros({2, 1, 3}, torch::kDouble);
  dec[1].fill_(4.0);
  const auto s = sat_scores(identity_weights(2), dec, enc, {0, 1}, {{0, 0}, {0, 1}, {0, 2}});
  EXPECT_TRUE(s.equal(torch::zeros({3}, torch::kDouble)));
}

TEST(SatScores, SingleSourceIsHandComputedDotProduct) {
  auto enc = torch::tensor({1.5, -2.0}, torch::kDouble).view({2, 1, 1});
  auto dec = torch::tensor({3.0, 0.5}, torch::kDouble).view({2, 1, 1});
  const auto s = sat_scores(identity_weights(2), dec, enc, {0, 0}, {{0, 0}});
  ASSERT_EQ(s.numel(), 1);
  EXPECT_DOUBLE_EQ(s.item<double>(), 1.5 * 3.0 + -2.0 * 0.5);
}

TEST(SatScores, Bilinear) {
  std::mt19937_64 rng(1);
  const auto enc = torch::randn({3, 4, 4}, torch::kDouble);
  const auto dec = torch::randn({3, 4, 4}, torch::kDouble);
  const SatWeights w{torch::randn({2, 3}, torch::kDouble), torch::randn({2, 3}, torch::kDouble)};
  const std::vector<Pixel> src = {{0, 0}, {1, 2}, {3, 3}};
  const auto once = sat_scores(w, dec, enc, {2, 1}, src);
  const auto twice = sat_scores(w, dec, enc * 2.0, {2, 1}, src);
  EXPECT_LT((twice - 2.0 * once).abs().max().item<double>(), 1e-12);
}

TEST(SatScores, RejectsEmptySource) {
  const auto f = torch::zeros({2, 2, 2});
  EXPECT_THROW(sat_scores(identity_weights(2), f, f, {0, 0}, {}), Error);
}

TEST(MaskedSoftmax, EqualScoresGiveUniformWeights) {
  const auto w = masked_softmax(torch::full({5}, 3.7, torch::kDouble));
  EXPECT_LT((w - 0.2).abs().max().item<double>(), 1e-15);
}

TEST(MaskedSoftmax, AnalyticTwoScoreCase) {
  const auto w = masked_softmax(torch::tensor({0.0, std::log(3.0)}, torch::kDouble));
  EXPECT_NEAR(w[0].item<double>(), 0.25, 1e-15);
  EXPECT_NEAR(w[1].item<double>(), 0.75, 1e-15);
}

TEST(MaskedSoftmax, ShiftInvariantAndStableForLargeScores) {
  const auto s = torch::tensor({0.3, -1.2, 2.5, 0.0}, torch::kDouble);
  EXPECT_LT((masked_softmax(s) - masked_softmax(s + 1000.0)).abs().max().item<double>(), 1e-7);
  const auto big = masked_softmax(torch::tensor({1e4, 1e4 - 1.0}, torch::kFloat32));
  EXPECT_TRUE(torch::isfinite(big).all().item<bool>());
}

TEST(SatTransfer, SingletonSourcePartCopiesItsFeature) {
  const auto src = labels_from({{0, 1}, {0, 0}});
  const auto tgt = labels_from({{1, 1}, {0, 1}});
  const auto enc = torch::randn({3, 2, 2}, torch::kDouble);
  const auto dec = torch::randn({3, 2, 2}, torch::kDouble);
  const auto out = sat_transfer({torch::randn({2, 3}, torch::kDouble), torch::randn({2, 3}, torch::kDouble)}, enc, dec,
                                src, tgt, 2);
  const auto i0 = enc.select(1, 0).select(1, 1);
  for (auto [y, x] : std::vector<std::pair<int, int>>{{0, 0}, {0, 1}, {1, 1}}) {
    EXPECT_TRUE(out.select(1, y).select(1, x).equal(i0));
  }
  EXPECT_TRUE(out.select(1, 1).select(1, 0).equal(torch::zeros({3}, torch::kDouble)));
}

TEST(SatTransfer, EmptySourcePartAndBackgroundReceiveZero) {
  const auto src = labels_from({{1, 1}, {0, 0}});
  const auto tgt = labels_from({{2, 1}, {0, 2}});
  const auto enc = torch::randn({2, 2, 2}, torch::kDouble);
  const auto out = sat_transfer(identity_weights(2), enc, enc, src, tgt, 3);
  EXPECT_EQ(out.select(1, 0).select(1, 0).abs().sum().item<double>(), 0.0);
  EXPECT_EQ(out.select(1, 1).abs().sum().item<double>(), 0.0);
}

TEST(SatTransfer, MatchesDoubleLoopOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    EXPECT_LE(checks::sat_oracle_trial(rng), 1e-6) << "trial " << trial;
  }
}

TEST(SatTransfer, SemanticIsolation) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) EXPECT_TRUE(checks::sat_isolation_trial(rng)) << "trial " << trial;
}

TEST(SatTransfer, OutputsStayInSourcePartHull) {
  std::mt19937_64 rng(13);
  const int c = 3, n = 4;
  const auto enc = torch::randn({c, 6, 6}, torch::kDouble);
  const auto dec = torch::randn({c, 6, 6}, torch::kDouble);
  const auto src = fixtures::random_labels(rng, 6, 6, n);
  const auto tgt = fixtures::random_labels(rng, 6, 6, n);
  const auto out = sat_transfer({torch::randn({2, c}, torch::kDouble), torch::randn({2, c}, torch::kDouble)}, enc, dec,
                                src, tgt, n);
  for (int part = 1; part < n; ++part) {
    const auto s = src.eq(part);
    const auto t = tgt.eq(part);
    if (!s.any().item<bool>() || !t.any().item<bool>()) continue;
    for (int ch = 0; ch < c; ++ch) {
      const auto vals = enc[ch].masked_select(s);
      const auto got = out[ch].masked_select(t);
      EXPECT_GE(got.min().item<double>(), vals.min().item<double>() - 1e-12);
      EXPECT_LE(got.max().item<double>(), vals.max().item<double>() + 1e-12);
    }
  }
}

TEST(SatTransfer, RejectsResolutionMismatch) {
  const auto f = torch::zeros({2, 4, 4});
  EXPECT_THROW(sat_transfer(identity_weights(2), f, f, torch::zeros({2, 2}, torch::kLong),
                            torch::zeros({4, 4}, torch::kLong), 3),
               Error);
}

TEST(SatAttention, RecordReproducesTransferOutput) {
  std::mt19937_64 rng(14);
  const int c = 4, n = 3;
  const auto enc = torch::randn({c, 5, 5}, torch::kDouble);
  const auto dec = torch::randn({c, 5, 5}, torch::kDouble);
  const auto src = fixtures::random_labels(rng, 5, 5, n);
  const auto tgt = fixtures::random_labels(rng, 5, 5, n);
  const SatWeights w{torch::randn({2, c}, torch::kDouble), torch::randn({2, c}, torch::kDouble)};
  const auto out = sat_transfer(w, enc, dec, src, tgt, n);
  int checked = 0;
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      const auto rec = sat_attention_map(w, enc, dec, src, tgt, {y, x});
      if (tgt[y][x].item<int64_t>() == 0) {
        EXPECT_FALSE(rec.has_value());
        continue;
      }
      ASSERT_TRUE(rec.has_value());
      double total = 0;
      auto sum = torch::zeros({c}, torch::kDouble);
      for (size_t k = 0; k < rec->coords.size(); ++k) {
        EXPECT_GE(rec->weights[k], 0.0);
        total += rec->weights[k];
        sum += rec->weights[k] * enc.select(1, rec->coords[k].y).select(1, rec->coords[k].x);
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
      EXPECT_LT((sum - out.select(1, y).select(1, x)).abs().max().item<double>(), 1e-6);
      ++checked;
    }
  }
  EXPECT_GT(checked, 0);
}

TEST(SatAttention, JsonCarriesPixelClassCoordsWeights) {
  AttentionRecord r{{1, 2}, 3, {{0, 0}, {4, 5}}, {0.25, 0.75}};
  const auto j = r.to_json();
  EXPECT_EQ(j.at("class"), 3);
  EXPECT_EQ(j.at("pixel"), nlohmann::json({2, 1}));
  EXPECT_EQ(j.at("coords").size(), 2u);
  EXPECT_EQ(j.at("weights").size(), 2u);
}

TEST(SatModule, ConcatenationDoublesChannels) {
  SatModule sat(6, 3, 4, true);
  const auto enc = torch::randn({2, 6, 8, 8});
  const auto dec = torch::randn({2, 6, 8, 8});
  const auto labels = torch::randint(0, 4, {2, 32, 32}, torch::kLong);
  const auto out = sat->forward(enc, dec, labels, labels);
  EXPECT_EQ(out.sizes(), dec.sizes());
  EXPECT_EQ(torch::cat({dec, out}, 1).size(1), 12);
}
