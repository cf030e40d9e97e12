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

#ifndef BNLEAK_TARGET_ZOO_H_
#define BNLEAK_TARGET_ZOO_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include <torch/torch.h>

#include "bnleak/array_store.h"
#include "bnleak/backbone.h"
#include "bnleak/head.h"
#include "bnleak/preprocess.h"

namespace bnleak {

struct TrainConfig {
  uint64_t seed = 7;
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<int> milestones;  // epochs at which lr is multiplied by gamma
  double gamma = 0.1;
  bool flip_augment = false;

  void Validate() const;
};

struct LabeledImages {
  torch::Tensor images;  // raw (N, C, H, W) in [0, 1]
  torch::Tensor labels;  // int64 (N,), values in [0, num_classes)
};

// A trained backbone plus (optionally) the classification head it was trained
// with. Treated as immutable after construction; attack code only ever needs
// the backbone, the head is kept for evaluation.
class CheckpointBundle {
 public:
  CheckpointBundle(BackboneSpec backbone_spec, PreprocessConfig preprocess,
                   IrSeNet backbone, std::optional<HeadSpec> head_spec,
                   std::optional<MarginHead> head);

  const BackboneSpec& backbone_spec() const { return backbone_spec_; }
  const PreprocessConfig& preprocess() const { return preprocess_; }
  const std::optional<HeadSpec>& head_spec() const { return head_spec_; }
  bool has_head() const { return head_.has_value(); }

  // Module handles. Callers must not train or mutate them.
  IrSeNet backbone() const { return backbone_; }
  MarginHead head() const;

  int best_epoch() const { return best_epoch_; }
  const std::vector<double>& train_accuracy() const { return train_accuracy_; }
  const std::vector<double>& test_accuracy() const { return test_accuracy_; }
  bool flip_augmented_training() const { return train_config_.flip_augment; }
  const TrainConfig& train_config() const { return train_config_; }
  const std::vector<int64_t>& train_ids() const { return train_ids_; }

  void SetHistory(int best_epoch, std::vector<double> train_accuracy,
                  std::vector<double> test_accuracy);
  void SetTrainConfig(TrainConfig config) { train_config_ = std::move(config); }
  void SetTrainIds(std::vector<int64_t> ids) { train_ids_ = std::move(ids); }

  // Deep copies.
  CheckpointBundle Clone() const;
  CheckpointBundle WithoutHead() const;
  CheckpointBundle To(torch::ScalarType dtype) const;

  NamedArrays ExportArrays() const;
  nlohmann::json Manifest() const;

 private:
  BackboneSpec backbone_spec_;
  PreprocessConfig preprocess_;
  IrSeNet backbone_;
  std::optional<HeadSpec> head_spec_;
  std::optional<MarginHead> head_;
  int best_epoch_ = -1;
  std::vector<double> train_accuracy_;
  std::vector<double> test_accuracy_;
  TrainConfig train_config_;
  std::vector<int64_t> train_ids_;
};

// Trains backbone + head with SGD and a step schedule, evaluating held-out
// accuracy after every epoch and returning the earliest best epoch. Fully
// deterministic for a fixed seed on a given platform.
CheckpointBundle TrainTargetBackbone(const LabeledImages& train,
                                     const LabeledImages& heldout,
                                     const BackboneSpec& backbone_spec,
                                     const HeadSpec& head_spec,
                                     const PreprocessConfig& preprocess,
                                     const TrainConfig& config);

// Backbone embeddings (B, f) of raw images; never touches the head.
torch::Tensor Embed(const CheckpointBundle& bundle, const torch::Tensor& raw_images);

// Margin-free head scores (B, n). Evaluation use only.
torch::Tensor ClassifyEvalOnly(const CheckpointBundle& bundle,
                               const torch::Tensor& embeddings);

// Fraction of rows whose argmax head score equals the label.
double HeadAccuracy(const CheckpointBundle& bundle, const LabeledImages& data);

// Writes <stem>.bnla (named arrays) and <stem>.json (manifest).
void SaveCheckpoint(const CheckpointBundle& bundle, const std::filesystem::path& stem);
CheckpointBundle LoadCheckpoint(const std::filesystem::path& stem);

nlohmann::json ToJson(const BackboneSpec& spec);
BackboneSpec BackboneSpecFromJson(const nlohmann::json& j);
nlohmann::json ToJson(const HeadSpec& spec);
HeadSpec HeadSpecFromJson(const nlohmann::json& j);
nlohmann::json ToJson(const PreprocessConfig& config);
PreprocessConfig PreprocessFromJson(const nlohmann::json& j);
nlohmann::json ToJson(const TrainConfig& config);
TrainConfig TrainConfigFromJson(const nlohmann::json& j);

// Runs `fn` over consecutive row chunks of `rows` and concatenates results.
torch::Tensor MapChunks(const torch::Tensor& rows, int64_t chunk,
                        const std::function<torch::Tensor(const torch::Tensor&)>& fn);

}  // namespace bnleak

#endif  // BNLEAK_TARGET_ZOO_H_
