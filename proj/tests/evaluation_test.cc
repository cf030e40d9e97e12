// Copyright 2026 The bnleak Authors
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


#include "bnleak/evaluation.h"

#include <algorithm>
#include <random>
#include <sstream>

#include "test_util.h"

namespace bnleak {
namespace {

TEST(AttackSuccessRateTest, ThresholdIsInclusive) {
  std::vector<double> probs = {0.5, 0.49, 0.9, 0.1};
  std::vector<int> labels = {1, 0, 1, 1};
  EXPECT_DOUBLE_EQ(AttackSuccessRate(probs, labels), 0.75);
  EXPECT_DOUBLE_EQ(AttackSuccessRate(probs, labels, 0.95), 0.25);
}

TEST(AttackSuccessRateTest, Errors) {
  std::vector<double> probs = {0.5};
  std::vector<int> two = {1, 0};
  std::vector<int> bad = {2};
  EXPECT_BNLEAK_ERROR(AttackSuccessRate({}, {}), ErrorCode::kEmptyInput);
  EXPECT_BNLEAK_ERROR(AttackSuccessRate(probs, two), ErrorCode::kDimension);
  EXPECT_BNLEAK_ERROR(AttackSuccessRate(probs, bad), ErrorCode::kInvalidArgument);
}

TEST(ThresholdSweepTest, EndpointsAndMonotoneRates) {
  std::vector<double> probs = {0.1, 0.4, 0.6, 0.8, 0.3};
  std::vector<int> labels = {0, 0, 1, 1, 1};
  const auto points = ThresholdSweep(probs, labels, 10);
  ASSERT_EQ(points.size(), 11u);
  EXPECT_DOUBLE_EQ(points.front().true_positive_rate, 1.0);
  EXPECT_DOUBLE_EQ(points.front().false_positive_rate, 1.0);
  for (size_t i = 1; i < points.size(); ++i) {
    EXPECT_LE(points[i].true_positive_rate, points[i - 1].true_positive_rate);
    EXPECT_LE(points[i].false_positive_rate, points[i - 1].false_positive_rate);
  }
  EXPECT_DOUBLE_EQ(points[5].accuracy, AttackSuccessRate(probs, labels, 0.5));
  std::ostringstream out;
  WriteRoc(out, points);
  const auto text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 12);
}

double Cosine(const torch::Tensor& a, const torch::Tensor& b) {
  auto x = a.to(torch::kFloat64);
  auto y = b.to(torch::kFloat64);
  return (x.dot(y) / (x.norm() * y.norm())).item<double>();
}

TEST(MatchCandidatesTest, BruteForceOracle) {
  torch::manual_seed(3);
  auto cand = torch::randn({12, 5});
  auto train = torch::randn({30, 5});
  const auto matches = MatchCandidates(cand, train, 700);
  ASSERT_EQ(matches.size(), 7u);

  std::vector<MatchPair> oracle;
  for (int64_t i = 0; i < 12; ++i) {
    MatchPair best{i, -1, -2.0};
    for (int64_t t = 0; t < 30; ++t) {
      const double s = Cosine(cand[i], train[t]);
      if (s > best.similarity) best = {i, t, s};
    }
    oracle.push_back(best);
  }
  std::sort(oracle.begin(), oracle.end(),
            [](const MatchPair& a, const MatchPair& b) { return a.similarity > b.similarity; });
  for (size_t i = 0; i < matches.size(); ++i) {
    EXPECT_EQ(matches[i].candidate, oracle[i].candidate);
    EXPECT_EQ(matches[i].train_index, oracle[i].train_index);
    EXPECT_NEAR(matches[i].similarity, oracle[i].similarity, 1e-9);
  }
}

TEST(MatchCandidatesTest, KeepsOnePercentOfSampledAndBreaksTiesLow) {
  auto train = torch::tensor({{1.0, 0.0}, {2.0, 0.0}, {0.0, 1.0}});
  auto cand = torch::tensor({{3.0, 0.0}, {0.0, 5.0}});
  const auto matches = MatchCandidates(cand, train, 200);
  ASSERT_EQ(matches.size(), 2u);
  EXPECT_EQ(matches[0].candidate, 0);
  EXPECT_EQ(matches[0].train_index, 0);
  EXPECT_EQ(matches[1].train_index, 2);
  EXPECT_TRUE(MatchCandidates(cand, train, 99).empty());
  EXPECT_EQ(MatchCandidates(cand, train, 100000).size(), 2u);
}

TEST(MatchCandidatesTest, Errors) {
  EXPECT_BNLEAK_ERROR(MatchCandidates(torch::zeros({1, 2}), torch::zeros({0, 2}), 100),
                      ErrorCode::kEmptyTrainingSet);
  EXPECT_BNLEAK_ERROR(MatchCandidates(torch::zeros({1, 3}), torch::ones({2, 2}), 100),
                      ErrorCode::kDimension);
}

TEST(ArgmaxLowestIndexTest, TiesGoToLowestIndex) {
  auto scores = torch::tensor({{0.1, 0.7, 0.7}, {0.0, 0.0, 0.0}, {-1.0, -2.0, 3.0}});
  EXPECT_EQ(ArgmaxLowestIndex(scores), (std::vector<int64_t>{1, 0, 2}));
  EXPECT_BNLEAK_ERROR(ArgmaxLowestIndex(torch::zeros({3})), ErrorCode::kShape);
}

TEST(AssignTargetIdsTest, NeedsHead) {
  auto bundle = testing::RandomBundle(testing::TinySpec(), 1, false);
  EXPECT_BNLEAK_ERROR(AssignTargetIds(bundle, testing::RandomImages(1, 3, 16, 16, 1)),
                      ErrorCode::kNoHead);
  auto with_head = testing::RandomBundle(testing::TinySpec(), 1, true, 5);
  const auto ids = AssignTargetIds(with_head, testing::RandomImages(4, 3, 16, 16, 1));
  ASSERT_EQ(ids.size(), 4u);
  for (auto id : ids) EXPECT_LT(id, 5);
}

// Rank via a full stable sort (descending score, ascending index).
double TopKOracle(const torch::Tensor& scores, const std::vector<int64_t>& ids, int64_t k) {
  int64_t hits = 0;
  for (int64_t r = 0; r < scores.size(0); ++r) {
    std::vector<int64_t> order(scores.size(1));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
    std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
      return scores[r][a].item<double>() > scores[r][b].item<double>();
    });
    const auto pos = std::find(order.begin(), order.end(), ids[r]) - order.begin();
    hits += pos < k;
  }
  return static_cast<double>(hits) / static_cast<double>(ids.size());
}

TEST(TopKAccuracyTest, MatchesSortOracleWithTies) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    // Coarse integer scores produce plenty of ties.
    auto scores = torch::randint(0, 4, {6, 8}, torch::kFloat64);
    std::vector<int64_t> ids(6);
    for (auto& id : ids) id = static_cast<int64_t>(rng() % 8);
    for (int64_t k = 1; k <= 8; ++k) {
      EXPECT_DOUBLE_EQ(TopKAccuracy(scores, ids, k), TopKOracle(scores, ids, k));
    }
    EXPECT_DOUBLE_EQ(TopKAccuracy(scores, ids, 8), 1.0);
  }
}

TEST(TopKAccuracyTest, MonotoneInK) {
  torch::manual_seed(1);
  auto scores = torch::randn({10, 20});
  std::vector<int64_t> ids = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  double prev = 0.0;
  for (int64_t k = 1; k <= 20; ++k) {
    const double acc = TopKAccuracy(scores, ids, k);
    EXPECT_GE(acc, prev);
    prev = acc;
  }
}

TEST(TopKAccuracyTest, Errors) {
  auto scores = torch::zeros({1, 3});
  std::vector<int64_t> ids = {0};
  EXPECT_BNLEAK_ERROR(TopKAccuracy(scores, ids, 0), ErrorCode::kTopK);
  EXPECT_BNLEAK_ERROR(TopKAccuracy(scores, ids, 4), ErrorCode::kTopK);
  std::vector<int64_t> two = {0, 1};
  EXPECT_BNLEAK_ERROR(TopKAccuracy(scores, two, 1), ErrorCode::kDimension);
}

TEST(DeltaFaceTest, BruteForceOracle) {
  torch::manual_seed(8);
  auto cand = torch::randn({5, 4});
  auto train = torch::randn({12, 4});
  std::vector<int64_t> labels = {0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3};
  std::vector<int64_t> targets = {3, 1, 0, 2, 1};
  for (bool normalize : {false, true}) {
    auto c = cand.to(torch::kFloat64);
    auto t = train.to(torch::kFloat64);
    if (normalize) {
      c = c / c.norm(2, 1, true);
      t = t / t.norm(2, 1, true);
    }
    double total = 0.0;
    for (size_t i = 0; i < targets.size(); ++i) {
      double best = 1e300;
      for (size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] != targets[i]) continue;
        best = std::min(best, (c[i] - t[r]).pow(2).sum().item<double>());
      }
      total += best;
    }
    EXPECT_NEAR(DeltaFace(cand, train, labels, targets, normalize), total / 5.0, 1e-9);
  }
}

TEST(DeltaFaceTest, ZeroWhenCandidateIsATrainingSample) {
  auto train = torch::tensor({{1.0, 2.0}, {3.0, -1.0}});
  std::vector<int64_t> labels = {4, 7};
  std::vector<int64_t> targets = {7};
  EXPECT_NEAR(DeltaFace(train.slice(0, 1, 2), train, labels, targets, false), 0.0, 1e-12);
  std::vector<int64_t> missing = {5};
  EXPECT_BNLEAK_ERROR(DeltaFace(train.slice(0, 0, 1), train, labels, missing),
                      ErrorCode::kEmptyId);
}

TEST(MetricsReportTest, JsonRoundTripAndValidation) {
  MetricsReport r;
  r.name = "stage1/mean";
  r.asr = 0.75;
  r.counts = {{"members", 10}};
  r.config_fingerprint = "abc";
  const auto back = MetricsReport::FromJson(r.ToJson());
  EXPECT_EQ(back.ToJson(), r.ToJson());
  EXPECT_FALSE(back.acc1.has_value());

  MetricsReport bad;
  bad.acc1 = 0.6;
  bad.acc5 = 0.5;
  EXPECT_BNLEAK_ERROR(bad.Validate(), ErrorCode::kInvalidArgument);
  bad.acc5 = 0.7;
  bad.delta_face = -1.0;
  EXPECT_BNLEAK_ERROR(bad.Validate(), ErrorCode::kInvalidArgument);
  bad.delta_face.reset();
  bad.asr = 1.5;
  EXPECT_BNLEAK_ERROR(bad.Validate(), ErrorCode::kInvalidArgument);
}

TEST(MetricsReportTest, TableHasEmptyCellsForMissingMetrics) {
  MetricsReport a;
  a.name = "a";
  a.asr = 0.5;
  std::vector<MetricsReport> reports = {a};
  std::ostringstream out;
  WriteMetricsTable(out, reports);
  EXPECT_EQ(out.str(), "name,asr,acc1,acc5,delta_face,mean_probability\na,0.5,,,,\n");
}

}  // namespace
}  // namespace bnleak
