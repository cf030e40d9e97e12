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


#ifndef BNLEAK_EVALUATION_H_
#define BNLEAK_EVALUATION_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include <torch/torch.h>

#include "bnleak/target_zoo.h"

namespace bnleak {

// Fraction of rows where (prob >= threshold) equals the label.
double AttackSuccessRate(std::span<const double> probs, std::span<const int> labels,
                         double threshold = 0.5);

struct RocPoint {
  double threshold;
  double true_positive_rate;
  double false_positive_rate;
  double accuracy;
};

// thresholds 0, 1/steps, ..., 1.
std::vector<RocPoint> ThresholdSweep(std::span<const double> probs,
                                     std::span<const int> labels, int steps = 100);

struct MatchPair {
  int64_t candidate;
  int64_t train_index;  // row in the training embedding matrix
  double similarity;    // cosine
};

// Best training row per candidate (lowest row on ties), then the global top
// floor(n_sampled / 100) pairs by similarity, lower candidate first on ties.
std::vector<MatchPair> MatchCandidates(const torch::Tensor& candidate_embeddings,
                                       const torch::Tensor& training_embeddings,
                                       int64_t n_sampled);

std::vector<MatchPair> MatchCandidates(const CheckpointBundle& bundle,
                                       const torch::Tensor& candidate_images,
                                       const torch::Tensor& training_embeddings,
                                       int64_t n_sampled);

// Argmax class under the eval-only head, lowest class on ties.
std::vector<int64_t> ArgmaxLowestIndex(const torch::Tensor& scores);
std::vector<int64_t> AssignTargetIds(const CheckpointBundle& bundle,
                                     const torch::Tensor& candidate_images);

// Fraction of rows whose target id ranks within the first k classes, ranking
// by descending score with lower class index first on ties.
double TopKAccuracy(const torch::Tensor& scores, std::span<const int64_t> target_ids,
                    int64_t k);

// Mean over candidates of the minimum squared Euclidean distance to a
// training embedding of the same id. Embeddings are L2-normalized first
// unless `normalize` is false.
double DeltaFace(const torch::Tensor& candidate_embeddings,
                 const torch::Tensor& training_embeddings,
                 std::span<const int64_t> training_labels,
                 std::span<const int64_t> target_ids, bool normalize = true);

struct MetricsReport {
  std::string name;
  std::optional<double> asr;
  std::optional<double> acc1;
  std::optional<double> acc5;
  std::optional<double> delta_face;
  std::optional<double> mean_probability;
  nlohmann::json counts = nlohmann::json::object();
  std::string config_fingerprint;

  void Validate() const;
  nlohmann::json ToJson() const;
  static MetricsReport FromJson(const nlohmann::json& j);
};

// One CSV row per report: name, asr, acc1, acc5, delta_face, mean_probability.
void WriteMetricsTable(std::ostream& out, std::span<const MetricsReport> reports);

void WriteRoc(std::ostream& out, std::span<const RocPoint> points);

}  // namespace bnleak

#endif  // BNLEAK_EVALUATION_H_
