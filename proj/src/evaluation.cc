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
#include <iomanip>
#include <limits>
#include <map>

#include "bnleak/error.h"

namespace bnleak {
namespace {

void CheckProbLabels(std::span<const double> probs, std::span<const int> labels) {
  if (probs.empty()) Fail(ErrorCode::kEmptyInput, "no predictions");
  if (probs.size() != labels.size()) {
    Fail(ErrorCode::kDimension, "predictions and labels differ in length");
  }
  for (int label : labels) {
    if (label != 0 && label != 1) Fail(ErrorCode::kInvalidArgument, "labels must be 0 or 1");
  }
}

torch::Tensor Normalized(const torch::Tensor& rows) {
  auto x = rows.to(torch::kFloat64);
  return x / x.norm(2, 1, /*keepdim=*/true).clamp_min(1e-12);
}

std::vector<double> Row(const torch::Tensor& matrix, int64_t r) {
  auto row = matrix[r].to(torch::kFloat64).contiguous();
  return {row.data_ptr<double>(), row.data_ptr<double>() + row.numel()};
}

void Opt(nlohmann::json& j, const char* key, const std::optional<double>& v) {
  j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> ReadOpt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

double AttackSuccessRate(std::span<const double> probs, std::span<const int> labels,
                         double threshold) {
  CheckProbLabels(probs, labels);
  int64_t correct = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    correct += static_cast<int>(probs[i] >= threshold) == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(probs.size());
}

std::vector<RocPoint> ThresholdSweep(std::span<const double> probs,
                                     std::span<const int> labels, int steps) {
  CheckProbLabels(probs, labels);
  if (steps < 1) Fail(ErrorCode::kInvalidArgument, "steps must be >= 1");
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  const auto negatives = static_cast<int64_t>(labels.size()) - positives;
  std::vector<RocPoint> points;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    int64_t tp = 0, fp = 0;
    for (size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] >= t) (labels[i] == 1 ? tp : fp)++;
    }
    points.push_back({t, positives ? static_cast<double>(tp) / positives : 0.0,
                      negatives ? static_cast<double>(fp) / negatives : 0.0,
                      AttackSuccessRate(probs, labels, t)});
  }
  return points;
}

std::vector<MatchPair> MatchCandidates(const torch::Tensor& candidate_embeddings,
                                       const torch::Tensor& training_embeddings,
                                       int64_t n_sampled) {
  if (training_embeddings.dim() != 2 || training_embeddings.size(0) == 0) {
    Fail(ErrorCode::kEmptyTrainingSet, "no training embeddings to match against");
  }
  if (candidate_embeddings.dim() != 2 ||
      candidate_embeddings.size(1) != training_embeddings.size(1)) {
    Fail(ErrorCode::kDimension, "candidate and training embeddings differ in width");
  }
  auto sims = torch::matmul(Normalized(candidate_embeddings),
                            Normalized(training_embeddings).t())
                  .contiguous();
  const int64_t nq = sims.size(0);
  const int64_t nt = sims.size(1);
  const double* s = sims.data_ptr<double>();
  std::vector<MatchPair> best;
  for (int64_t i = 0; i < nq; ++i) {
    int64_t arg = 0;
    for (int64_t t = 1; t < nt; ++t) {
      if (s[i * nt + t] > s[i * nt + arg]) arg = t;
    }
    best.push_back({i, arg, s[i * nt + arg]});
  }
  std::stable_sort(best.begin(), best.end(), [](const MatchPair& a, const MatchPair& b) {
    return a.similarity > b.similarity;
  });
  const auto keep = std::min<int64_t>(n_sampled / 100, nq);
  best.resize(std::max<int64_t>(keep, 0));
  return best;
}

std::vector<MatchPair> MatchCandidates(const CheckpointBundle& bundle,
                                       const torch::Tensor& candidate_images,
                                       const torch::Tensor& training_embeddings,
                                       int64_t n_sampled) {
  return MatchCandidates(Embed(bundle, candidate_images), training_embeddings, n_sampled);
}

std::vector<int64_t> ArgmaxLowestIndex(const torch::Tensor& scores) {
  if (scores.dim() != 2 || scores.size(1) == 0) {
    Fail(ErrorCode::kShape, "scores must be a (B, n) matrix");
  }
  std::vector<int64_t> ids;
  for (int64_t r = 0; r < scores.size(0); ++r) {
    const auto row = Row(scores, r);
    ids.push_back(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return ids;
}

std::vector<int64_t> AssignTargetIds(const CheckpointBundle& bundle,
                                     const torch::Tensor& candidate_images) {
  if (!bundle.has_head()) Fail(ErrorCode::kNoHead, "target ids need the eval-only head");
  return ArgmaxLowestIndex(ClassifyEvalOnly(bundle, Embed(bundle, candidate_images)));
}

double TopKAccuracy(const torch::Tensor& scores, std::span<const int64_t> target_ids,
                    int64_t k) {
  if (scores.dim() != 2) Fail(ErrorCode::kShape, "scores must be a (B, n) matrix");
  const int64_t n = scores.size(1);
  if (k < 1 || k > n) {
    Fail(ErrorCode::kTopK, "k = " + std::to_string(k) + " outside [1, " +
                               std::to_string(n) + "]");
  }
  if (scores.size(0) != static_cast<int64_t>(target_ids.size())) {
    Fail(ErrorCode::kDimension, "one target id per score row is required");
  }
  if (target_ids.empty()) Fail(ErrorCode::kEmptyInput, "no candidates");
  int64_t hits = 0;
  for (int64_t r = 0; r < scores.size(0); ++r) {
    const auto row = Row(scores, r);
    const int64_t t = target_ids[r];
    if (t < 0 || t >= n) Fail(ErrorCode::kInvalidArgument, "target id out of range");
    int64_t rank = 0;
    for (int64_t c = 0; c < n; ++c) {
      if (row[c] > row[t] || (row[c] == row[t] && c < t)) ++rank;
    }
    hits += rank < k;
  }
  return static_cast<double>(hits) / static_cast<double>(target_ids.size());
}

double DeltaFace(const torch::Tensor& candidate_embeddings,
                 const torch::Tensor& training_embeddings,
                 std::span<const int64_t> training_labels,
                 std::span<const int64_t> target_ids, bool normalize) {
  if (target_ids.empty()) Fail(ErrorCode::kEmptyInput, "no candidates");
  if (candidate_embeddings.size(0) != static_cast<int64_t>(target_ids.size()) ||
      training_embeddings.size(0) != static_cast<int64_t>(training_labels.size())) {
    Fail(ErrorCode::kDimension, "embedding rows and ids differ in count");
  }
  auto cand = normalize ? Normalized(candidate_embeddings)
                        : candidate_embeddings.to(torch::kFloat64);
  auto train = normalize ? Normalized(training_embeddings)
                         : training_embeddings.to(torch::kFloat64);
  std::map<int64_t, std::vector<int64_t>> rows_by_id;
  for (size_t i = 0; i < training_labels.size(); ++i) {
    rows_by_id[training_labels[i]].push_back(static_cast<int64_t>(i));
  }
  double total = 0.0;
  for (size_t c = 0; c < target_ids.size(); ++c) {
    auto it = rows_by_id.find(target_ids[c]);
    if (it == rows_by_id.end()) {
      Fail(ErrorCode::kEmptyId,
           "no training samples for id " + std::to_string(target_ids[c]));
    }
    const auto a = Row(cand, static_cast<int64_t>(c));
    double best = std::numeric_limits<double>::infinity();
    for (int64_t r : it->second) {
      const auto b = Row(train, r);
      double d = 0.0;
      for (size_t j = 0; j < a.size(); ++j) d += (a[j] - b[j]) * (a[j] - b[j]);
      best = std::min(best, d);
    }
    total += best;
  }
  return total / static_cast<double>(target_ids.size());
}

void MetricsReport::Validate() const {
  for (const auto& rate : {asr, acc1, acc5}) {
    if (rate && (*rate < 0.0 || *rate > 1.0)) {
      Fail(ErrorCode::kInvalidArgument, "rates must lie in [0, 1]");
    }
  }
  if (acc1 && acc5 && *acc1 > *acc5) {
    Fail(ErrorCode::kInvalidArgument, "acc@1 exceeds acc@5");
  }
  if (delta_face && *delta_face < 0.0) {
    Fail(ErrorCode::kInvalidArgument, "delta_face must be nonnegative");
  }
}

nlohmann::json MetricsReport::ToJson() const {
  Validate();
  nlohmann::json j;
  j["name"] = name;
  Opt(j, "asr", asr);
  Opt(j, "acc1", acc1);
  Opt(j, "acc5", acc5);
  Opt(j, "delta_face", delta_face);
  Opt(j, "mean_probability", mean_probability);
  j["counts"] = counts;
  j["config_fingerprint"] = config_fingerprint;
  return j;
}

MetricsReport MetricsReport::FromJson(const nlohmann::json& j) {
  MetricsReport r;
  r.name = j.value("name", "");
  r.asr = ReadOpt(j, "asr");
  r.acc1 = ReadOpt(j, "acc1");
  r.acc5 = ReadOpt(j, "acc5");
  r.delta_face = ReadOpt(j, "delta_face");
  r.mean_probability = ReadOpt(j, "mean_probability");
  r.counts = j.value("counts", nlohmann::json::object());
  r.config_fingerprint = j.value("config_fingerprint", "");
  r.Validate();
  return r;
}

void WriteMetricsTable(std::ostream& out, std::span<const MetricsReport> reports) {
  auto cell = [&](const std::optional<double>& v) {
    if (v) out << std::setprecision(6) << *v;
  };
  out << "name,asr,acc1,acc5,delta_face,mean_probability\n";
  for (const auto& r : reports) {
    out << r.name << ',';
    cell(r.asr);
    out << ',';
    cell(r.acc1);
    out << ',';
    cell(r.acc5);
    out << ',';
    cell(r.delta_face);
    out << ',';
    cell(r.mean_probability);
    out << '\n';
  }
}

void WriteRoc(std::ostream& out, std::span<const RocPoint> points) {
  out << "threshold,tpr,fpr,accuracy\n" << std::setprecision(6);
  for (const auto& p : points) {
    out << p.threshold << ',' << p.true_positive_rate << ',' << p.false_positive_rate
        << ',' << p.accuracy << '\n';
  }
}

}  // namespace bnleak
