// Copyright 2026 The fedmp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "fedmp/errors.hpp"
#include "fedmp/metrics.hpp"

namespace fedmp {
namespace {

// Walks every distinct threshold from high to low, predicting positive for
// score >= t, and integrates precision over recall increments.
double curve_oracle(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  std::size_t pos = 0;
  for (auto v : y) pos += v;
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) (y[i] ? tp : fp)++;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

TEST(AveragePrecision, HandExample) {
  const std::vector<double> s = {.9, .8, .7, .6, .5, .4};
  const std::vector<std::uint8_t> y = {1, 0, 1, 0, 0, 1};
  EXPECT_NEAR(average_precision(s, y), (1.0 + 2.0 / 3.0 + 0.5) / 3.0, 1e-15);
}

TEST(AveragePrecision, PerfectRanking) {
  const std::vector<double> s = {3, 2, 1, 0};
  const std::vector<std::uint8_t> y = {1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(average_precision(s, y), 1.0);
}

TEST(AveragePrecision, ConstantScoreEqualsPrevalence) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng() % 500;
    std::vector<std::uint8_t> y(n);
    std::size_t pos = 0;
    for (auto& v : y) pos += (v = static_cast<std::uint8_t>(rng() % 3 == 0));
    if (pos == 0) y[0] = 1, pos = 1;
    const std::vector<double> s(n, 0.25);
    EXPECT_NEAR(average_precision(s, y), static_cast<double>(pos) / static_cast<double>(n), 1e-12);
  }
}

TEST(AveragePrecision, MatchesCurveOracleOnSmallInputs) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng() % 20;
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 6) / 5.0;
      y[i] = static_cast<std::uint8_t>(rng() % 2);
    }
    y[rng() % n] = 1;
    EXPECT_NEAR(average_precision(s, y), curve_oracle(s, y), 1e-12) << "trial " << trial;
  }
}

TEST(AveragePrecision, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 40;
    std::vector<double> s(n), t(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(normal(rng) * 4.0) / 4.0;
      t[i] = std::exp(s[i]) * 3.0 - 7.0;
      y[i] = static_cast<std::uint8_t>(rng() % 2);
    }
    y[0] = 1;
    EXPECT_DOUBLE_EQ(average_precision(s, y), average_precision(t, y));
  }
}

TEST(AveragePrecision, Validates) {
  const std::vector<double> s = {1.0, 2.0};
  const std::vector<std::uint8_t> none = {0, 0};
  const std::vector<std::uint8_t> one = {1};
  EXPECT_THROW(average_precision(s, none), ValidationError);
  EXPECT_THROW(average_precision(s, one), ValidationError);
}

TEST(PrAuc, SingleClassIsAbsent) {
  const std::vector<double> s = {1.0, 2.0};
  const std::vector<std::uint8_t> ones = {1, 1};
  const TaskReport r = pr_auc(Task::C3, s, ones);
  EXPECT_FALSE(r.pr_auc.has_value());
  EXPECT_EQ(r.absent_reason, "single-class");
  EXPECT_DOUBLE_EQ(r.prevalence, 1.0);
}

TEST(PrAuc, MajorityPositivesUseNegativeClass) {
  const std::vector<double> s = {0.9, 0.8, 0.1, 0.7};
  const std::vector<std::uint8_t> y = {1, 1, 0, 1};
  const TaskReport r = pr_auc(Task::C5, s, y);
  EXPECT_TRUE(r.minority_is_negative);
  EXPECT_DOUBLE_EQ(*r.pr_auc, 1.0);
  EXPECT_DOUBLE_EQ(r.prevalence, 0.75);

  const std::vector<double> flat(4, 0.0);
  EXPECT_NEAR(*pr_auc(Task::C5, flat, y).pr_auc, 0.25, 1e-15);
}

TEST(PrAuc, BalancedKeepsPositives) {
  const std::vector<double> s = {0.1, 0.9};
  const std::vector<std::uint8_t> y = {1, 0};
  const TaskReport r = pr_auc(Task::C2, s, y);
  EXPECT_FALSE(r.minority_is_negative);
  EXPECT_DOUBLE_EQ(*r.pr_auc, 0.5);
}

std::vector<TaskReport> reports_from(const std::array<double, kNumTasks>& values) {
  std::vector<TaskReport> out;
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    TaskReport r;
    r.task = kAllTasks[t];
    r.pr_auc = values[t];
    out.push_back(r);
  }
  return out;
}

TEST(Macro, ReferenceRows) {
  const auto ceiling = reports_from({99.63, 99.60, 99.68, 93.51, 88.57, 99.34, 99.30});
  const auto floor = reports_from({19.31, 33.15, 48.08, 32.25, 21.68, 30.77, 32.06});
  EXPECT_NEAR(macro(ceiling), 97.09, 0.005);
  EXPECT_NEAR(macro(floor), 31.04, 0.005);
  EXPECT_DOUBLE_EQ(macro(reports_from({1, 1, 1, 1, 1, 1, 1})), 1.0);
}

TEST(Macro, SkipsAbsentTasks) {
  auto r = reports_from({0.5, 0.7, 0, 0, 0, 0, 0});
  for (std::size_t t = 2; t < kNumTasks; ++t) r[t].pr_auc.reset();
  EXPECT_DOUBLE_EQ(macro(r), 0.6);
}

TEST(Macro, Csv) {
  TaskReport a;
  a.task = Task::C2;
  a.prevalence = 0.5;
  a.pr_auc = 0.75;
  TaskReport b;
  b.task = Task::Biclique;
  const std::vector<TaskReport> r = {a, b};
  const std::string csv = task_report_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "task,prevalence,pr_auc");
  EXPECT_NE(csv.find("C2,0.5,0.75"), std::string::npos);
  EXPECT_NE(csv.find(",NA"), std::string::npos);
}

TEST(CommRatio, DirectArithmetic) {
  // L d R = P / 10 with S = 10.
  EXPECT_EQ(comm_ratio(10, 2, 5, Rational(100), 10000), Rational(1, 5));
  const Rational tail = Rational(2 * 5 * 100, 10000);
  EXPECT_LT(comm_ratio(1000000, 2, 5, Rational(100), 10000) - tail, Rational(1, 999999));
  EXPECT_THROW(comm_ratio(0, 1, 1, Rational(1), 1), ValidationError);
}

TEST(CommRatio, ReportMatchesClosedForm) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t S = 1 + rng() % 20, L = 1 + rng() % 6, d = 1 + rng() % 64;
    const std::int64_t P = 100 + rng() % 100000, C = 1 + rng() % 15, E = 1 + rng() % 10;
    const std::int64_t emb = static_cast<std::int64_t>(rng() % 100000);
    const CommReport r = comm_report(S, L, d, P, C, E, emb);
    EXPECT_EQ(r.measured, r.ratio);
    EXPECT_EQ(r.ratio, comm_ratio(S, L, d, r.mean_remote, P));
  }
}

}  // namespace
}  // namespace fedmp
