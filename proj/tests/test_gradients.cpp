#include <gtest/gtest.h>

#include "checks.hpp"

TEST(Gradients, AnalyticMatchesCentralDifferences) {
  const auto suite = checks::gradient_suite(41);
  EXPECT_GE(suite.size(), 14u);
  for (const auto& entry : suite) {
    EXPECT_GT(entry.result.checked, 0) << entry.name;
    EXPECT_GT(entry.result.max_abs_grad, 0.0) << entry.name;
    EXPECT_LE(entry.result.max_rel_error, 1e-4) << entry.name;
  }
}
