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


#ifndef BNLEAK_MI_ATTACK_H_
#define BNLEAK_MI_ATTACK_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "json.hpp"
#include <torch/torch.h>

#include "bnleak/bn_reference.h"
#include "bnleak/distance_features.h"
#include "bnleak/target_zoo.h"

namespace bnleak {

// Distance rows with binary membership labels (1 = member).
struct LabeledDistanceSet {
  torch::Tensor distances;  // (N, L) float64
  std::vector<int> labels;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  int64_t Count(int label) const;
  void Validate(bool require_both_classes) const;
  static LabeledDistanceSet Concat(const torch::Tensor& members,
                                   const torch::Tensor& nonmembers);
};

struct AttackTrainConfig {
  int iterations = 2000;
  double step = 0.5;
  uint64_t seed = 11;
  double init_scale = 0.01;  // stddev of the initial weights
  // Per-feature z-scoring fitted on the training rows. Off by default.
  bool standardize = false;

  void Validate() const;
};

// Linear layer followed by a sigmoid over a distance vector.
class AttackModel {
 public:
  AttackModel(VariantSpec variant, std::vector<LayoutEntry> layout);

  const VariantSpec& variant() const { return variant_; }
  const std::vector<LayoutEntry>& layout() const { return layout_; }
  int64_t dim() const { return static_cast<int64_t>(layout_.size()); }

  // Raw parameters act on standardized inputs (identity when off).
  const torch::Tensor& weights() const { return weights_; }
  double bias() const { return bias_; }
  const torch::Tensor& shift() const { return shift_; }
  const torch::Tensor& scale() const { return scale_; }
  void SetParameters(torch::Tensor weights, double bias);
  void SetStandardization(torch::Tensor shift, torch::Tensor scale);

  // w . (d - shift) / scale + b for each row of (N, L); keeps autograd.
  torch::Tensor Logits(const torch::Tensor& distances) const;
  torch::Tensor Probabilities(const torch::Tensor& distances) const;

  uint64_t seed = 0;
  double best_accuracy = 0.0;
  int best_iteration = -1;
  std::vector<double> accuracy_trace;  // entry j: eval accuracy after j updates
  int train_rows = 0;
  int eval_rows = 0;

  NamedArrays ExportArrays() const;
  nlohmann::json Manifest() const;

 private:
  VariantSpec variant_;
  std::vector<LayoutEntry> layout_;
  torch::Tensor weights_;  // (L,) float64
  double bias_ = 0.0;
  torch::Tensor shift_;    // (L,) float64
  torch::Tensor scale_;    // (L,) float64
};

double PredictMembership(const AttackModel& model, const DistanceVector& d);

// Accuracy with the >= 0.5 rule.
double AttackAccuracy(const AttackModel& model, const LabeledDistanceSet& set);

// Paired loss CE(A(d_m), 1) + CE(A(d_n), 0), each averaged over its class.
double PairedLoss(const AttackModel& model, const LabeledDistanceSet& set);

// Full-batch gradient descent on the paired loss. Evaluates before the first
// update and after each one; returns the earliest best-accuracy parameters.
AttackModel TrainAttackModel(const LabeledDistanceSet& train,
                             const LabeledDistanceSet& eval,
                             const VariantSpec& variant,
                             const std::vector<LayoutEntry>& layout,
                             const AttackTrainConfig& config);

// Image-level entry point: computes distances against the bundle first.
AttackModel TrainAttackModel(const torch::Tensor& member_images,
                             const torch::Tensor& nonmember_images,
                             const torch::Tensor& eval_member_images,
                             const torch::Tensor& eval_nonmember_images,
                             const CheckpointBundle& bundle,
                             const BnReferenceSet& refs, const VariantSpec& variant,
                             const AttackTrainConfig& config);

void SaveAttackModel(const AttackModel& model, const std::filesystem::path& stem);
AttackModel LoadAttackModel(const std::filesystem::path& stem);

// Image -> distance vector -> membership probability, differentiable in the
// raw image.
class MembershipPipeline {
 public:
  MembershipPipeline(CheckpointBundle bundle, BnReferenceSet refs, AttackModel model);

  const CheckpointBundle& bundle() const { return bundle_; }
  const BnReferenceSet& refs() const { return refs_; }
  const AttackModel& model() const { return model_; }

  // (B, C, H, W) raw images -> (B,) probabilities, float64.
  torch::Tensor Score(const torch::Tensor& raw_images) const;
  torch::Tensor ScoreNoGrad(const torch::Tensor& raw_images) const;

 private:
  CheckpointBundle bundle_;
  BnReferenceSet refs_;
  AttackModel model_;
};

}  // namespace bnleak

#endif  // BNLEAK_MI_ATTACK_H_
