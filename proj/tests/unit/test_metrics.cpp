// Copyright 2026 The pooltrace Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "pooltrace/metrics.hpp"
#include "support/oracles.hpp"

namespace pt = pooltrace;

TEST(Confusion, CountsAndRates) {
  std::vector<std::uint8_t> truth{1, 1, 0, 0, 0, 1}, calls{1, 0, 1, 0, 0, 1};
  const auto c = pt::confusion(truth, calls);
  EXPECT_EQ(c.tp, 2);
  EXPECT_EQ(c.fn, 1);
  EXPECT_EQ(c.fp, 1);
  EXPECT_EQ(c.tn, 2);
  EXPECT_DOUBLE_EQ(*c.fnr(), 1.0 / 3);
  EXPECT_DOUBLE_EQ(*c.fpr(), 1.0 / 3);
}

TEST(Confusion, EmptyClassesGiveNoRate) {
  std::vector<std::uint8_t> zeros(5, 0), ones(5, 1);
  EXPECT_FALSE(pt::confusion(zeros, zeros).fnr().has_value());
  EXPECT_FALSE(pt::confusion(ones, ones).fpr().has_value());
  std::vector<std::uint8_t> short_calls(3, 0);
  EXPECT_THROW(pt::confusion(zeros, short_calls), pt::StructuralError);
}

TEST(Mcc, PerfectAndInverted) {
  EXPECT_DOUBLE_EQ(pt::mcc({5, 0, 7, 0}), 1.0);
  EXPECT_DOUBLE_EQ(pt::mcc({0, 7, 0, 5}), -1.0);
  EXPECT_EQ(pt::mcc({0, 0, 10, 0}), 0.0);
}

TEST(Mcc, MatchesCorrelationOracle) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> count(0, 60);
  for (int t = 0; t < 1000; ++t) {
    const pt::Confusion c{count(rng), count(rng), count(rng), count(rng)};
    const double m = pt::mcc(c);
    EXPECT_NEAR(m, oracle::correlation_mcc(c), 1e-12);
    EXPECT_GE(m, -1.0);
    EXPECT_LE(m, 1.0);
  }
}

TEST(Rrmse, Values) {
  std::vector<double> x{3, 4}, same{3, 4}, off{0, 0}, zero{0, 0};
  EXPECT_EQ(*pt::rrmse(x, same), 0.0);
  EXPECT_DOUBLE_EQ(*pt::rrmse(x, off), 1.0);
  EXPECT_FALSE(pt::rrmse(zero, x).has_value());
  std::vector<double> short_v{1};
  EXPECT_THROW(pt::rrmse(x, short_v), pt::StructuralError);
}

TEST(ComputeMetrics, Bundles) {
  std::vector<std::uint8_t> truth{1, 0, 0, 1}, calls{1, 0, 1, 1};
  std::vector<double> loads{5, 0, 0, 2}, est{5, 0, 1, 2};
  const auto r = pt::compute_metrics(truth, calls, loads, est, 0.2);
  EXPECT_EQ(*r.fnr, 0.0);
  EXPECT_DOUBLE_EQ(*r.fpr, 0.5);
  EXPECT_NEAR(*r.rrmse, 1 / std::sqrt(29.0), 1e-15);
  EXPECT_EQ(r.threshold, 0.2);
  const auto no_est = pt::compute_metrics(truth, calls);
  EXPECT_FALSE(no_est.rrmse.has_value());
  for (const auto* v : {&r.fnr, &r.fpr}) {
    EXPECT_GE(**v, 0.0);
    EXPECT_LE(**v, 1.0);
  }
}

TEST(Roc, OperatingPointAndTies) {
  std::vector<double> scores{0.9, 0.8, 0.7, 0.2, 0.1};
  std::vector<std::uint8_t> truth{1, 1, 0, 1, 0};
  const auto c = pt::roc_sweep(scores, truth);
  ASSERT_EQ(c.points.size(), 6u);
  EXPECT_TRUE(std::isinf(c.points[0].threshold));
  EXPECT_TRUE(pt::roc_is_monotone(c));
  // Thresholds 0.8 (fnr 1/3, fpr 0) and 0.2 (fnr 0, fpr 1/2): 0.8 wins.
  EXPECT_EQ(c.operating_point().threshold, 0.8);
  EXPECT_FALSE(c.degenerate);

  std::vector<double> s2{0.9, 0.1};
  std::vector<std::uint8_t> t2{1, 0};
  EXPECT_EQ(pt::roc_sweep(s2, t2).operating_point().threshold, 0.9);
  // Equal totals: the lower threshold is kept.
  // 0.8 and 0.4 both total 1/2.
  std::vector<double> s3{0.8, 0.6, 0.4, 0.2};
  std::vector<std::uint8_t> t3{1, 0, 1, 0};
  EXPECT_EQ(pt::roc_sweep(s3, t3).operating_point().threshold, 0.4);
}

TEST(Roc, RandomCurvesAreMonotone) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  std::bernoulli_distribution b(0.1);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> s(200);
    std::vector<std::uint8_t> y(200);
    for (std::size_t i = 0; i < s.size(); ++i) {
      y[i] = b(rng);
      s[i] = std::round((u(rng) + 0.3 * y[i]) * 20) / 20;  // coarse, many ties
    }
    const auto c = pt::roc_sweep(s, y);
    EXPECT_TRUE(pt::roc_is_monotone(c));
    EXPECT_EQ(c.points.back().fpr, 0 < std::count(y.begin(), y.end(), 0) ? 1.0 : 0.0);
    EXPECT_EQ(c.points.back().fnr, 0.0);
  }
}

TEST(Roc, DegenerateAndErrors) {
  std::vector<double> s{0.5, 0.5};
  std::vector<std::uint8_t> t{1, 0};
  EXPECT_TRUE(pt::roc_sweep(s, t).degenerate);
  std::vector<double> nan{std::nan(""), 0.1};
  EXPECT_THROW(pt::roc_sweep(nan, t), pt::DomainError);
  pt::RocCurve bad;
  bad.points = {{1.0, 0.5, 0.2}, {0.5, 0.4, 0.1}};
  EXPECT_FALSE(pt::roc_is_monotone(bad));
}
