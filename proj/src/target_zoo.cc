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

#include "bnleak/target_zoo.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "bnleak/error.h"

namespace bnleak {

namespace F = torch::nn::functional;

namespace {

double ArgmaxAccuracy(const torch::Tensor& scores, const torch::Tensor& labels) {
  if (labels.numel() == 0) return 0.0;
  auto hits = scores.argmax(1).eq(labels).sum().item<int64_t>();
  return static_cast<double>(hits) / static_cast<double>(labels.numel());
}

}  // namespace

void TrainConfig::Validate() const {
  if (epochs < 1) Fail(ErrorCode::kConfig, "epochs must be >= 1");
  if (batch_size < 2) Fail(ErrorCode::kConfig, "batch_size must be >= 2");
  if (!(learning_rate > 0.0)) Fail(ErrorCode::kConfig, "learning_rate must be > 0");
  if (momentum < 0.0 || weight_decay < 0.0 || !(gamma > 0.0)) {
    Fail(ErrorCode::kConfig, "momentum, weight_decay and gamma must be valid");
  }
}

CheckpointBundle::CheckpointBundle(BackboneSpec backbone_spec,
                                   PreprocessConfig preprocess, IrSeNet backbone,
                                   std::optional<HeadSpec> head_spec,
                                   std::optional<MarginHead> head)
    : backbone_spec_(std::move(backbone_spec)),
      preprocess_(std::move(preprocess)),
      backbone_(std::move(backbone)),
      head_spec_(std::move(head_spec)),
      head_(std::move(head)) {
  backbone_->eval();
  if (head_) (*head_)->eval();
}

MarginHead CheckpointBundle::head() const {
  if (!head_) Fail(ErrorCode::kNoHead, "checkpoint carries no classification head");
  return *head_;
}

void CheckpointBundle::SetHistory(int best_epoch, std::vector<double> train_accuracy,
                                  std::vector<double> test_accuracy) {
  best_epoch_ = best_epoch;
  train_accuracy_ = std::move(train_accuracy);
  test_accuracy_ = std::move(test_accuracy);
}

CheckpointBundle CheckpointBundle::Clone() const {
  auto backbone = std::dynamic_pointer_cast<IrSeNetImpl>(backbone_->clone());
  std::optional<MarginHead> head;
  if (head_) {
    head = MarginHead(std::dynamic_pointer_cast<MarginHeadImpl>((*head_)->clone()));
  }
  CheckpointBundle copy(backbone_spec_, preprocess_, IrSeNet(backbone), head_spec_,
                        head);
  copy.best_epoch_ = best_epoch_;
  copy.train_accuracy_ = train_accuracy_;
  copy.test_accuracy_ = test_accuracy_;
  copy.train_config_ = train_config_;
  copy.train_ids_ = train_ids_;
  return copy;
}

CheckpointBundle CheckpointBundle::WithoutHead() const {
  CheckpointBundle copy = Clone();
  copy.head_.reset();
  copy.head_spec_.reset();
  return copy;
}

CheckpointBundle CheckpointBundle::To(torch::ScalarType dtype) const {
  CheckpointBundle copy = Clone();
  copy.backbone_->to(dtype);
  if (copy.head_) (*copy.head_)->to(dtype);
  return copy;
}

NamedArrays CheckpointBundle::ExportArrays() const {
  IrSeNet backbone = backbone_;
  NamedArrays arrays = ModuleArrays(backbone, "backbone.");
  if (head_) {
    MarginHead head = *head_;
    arrays.merge(ModuleArrays(head, "head."));
  }
  return arrays;
}

nlohmann::json CheckpointBundle::Manifest() const {
  nlohmann::json j;
  j["format"] = "bnleak-checkpoint/1";
  j["backbone"] = ToJson(backbone_spec_);
  j["head"] = head_spec_ ? ToJson(*head_spec_) : nlohmann::json(nullptr);
  j["preprocess"] = ToJson(preprocess_);
  j["train"] = ToJson(train_config_);
  j["seed"] = train_config_.seed;
  j["flip_augmented_training"] = train_config_.flip_augment;
  j["best_epoch"] = best_epoch_;
  j["train_accuracy"] = train_accuracy_;
  j["test_accuracy"] = test_accuracy_;
  j["train_ids"] = train_ids_;
  j["fingerprint"] = Fingerprint(ExportArrays());
  return j;
}

torch::Tensor MapChunks(const torch::Tensor& rows, int64_t chunk,
                        const std::function<torch::Tensor(const torch::Tensor&)>& fn) {
  std::vector<torch::Tensor> parts;
  for (int64_t start = 0; start < rows.size(0); start += chunk) {
    const int64_t end = std::min(rows.size(0), start + chunk);
    parts.push_back(fn(rows.slice(0, start, end)));
  }
  if (parts.empty()) Fail(ErrorCode::kEmptyInput, "no rows to process");
  return torch::cat(parts);
}

torch::Tensor Embed(const CheckpointBundle& bundle, const torch::Tensor& raw_images) {
  torch::NoGradGuard no_grad;
  IrSeNet backbone = bundle.backbone();
  return MapChunks(raw_images, 256, [&](const torch::Tensor& chunk) {
    return backbone->forward(Preprocess(bundle.preprocess(), chunk));
  });
}

torch::Tensor ClassifyEvalOnly(const CheckpointBundle& bundle,
                               const torch::Tensor& embeddings) {
  MarginHead head = bundle.head();
  torch::NoGradGuard no_grad;
  return head->Scores(embeddings);
}

double HeadAccuracy(const CheckpointBundle& bundle, const LabeledImages& data) {
  if (!data.images.defined() || data.images.size(0) == 0) return 0.0;
  auto scores = ClassifyEvalOnly(bundle, Embed(bundle, data.images));
  return ArgmaxAccuracy(scores, data.labels);
}

CheckpointBundle TrainTargetBackbone(const LabeledImages& train,
                                     const LabeledImages& heldout,
                                     const BackboneSpec& backbone_spec,
                                     const HeadSpec& head_spec,
                                     const PreprocessConfig& preprocess,
                                     const TrainConfig& config) {
  config.Validate();
  preprocess.Validate();
  backbone_spec.Validate();
  if (!(backbone_spec.input == preprocess.input)) {
    Fail(ErrorCode::kConfig, "backbone input shape differs from preprocessing");
  }
  const int64_t n = train.labels.numel();
  if (n < 2 || train.images.size(0) != n) {
    Fail(ErrorCode::kInvalidDataset, "training set needs matching images and labels");
  }
  const auto unique = std::get<0>(at::_unique(train.labels));
  if (unique.numel() < 2) {
    Fail(ErrorCode::kInvalidDataset, "training set has fewer than 2 classes");
  }
  if (train.labels.min().item<int64_t>() < 0 ||
      train.labels.max().item<int64_t>() >= head_spec.num_classes) {
    Fail(ErrorCode::kInvalidDataset, "labels outside [0, num_classes)");
  }

  torch::manual_seed(config.seed);
  std::mt19937_64 rng(config.seed);
  IrSeNet backbone(backbone_spec);
  MarginHead head(head_spec, backbone_spec.embedding_dim);
  std::vector<torch::Tensor> params = backbone->parameters();
  for (auto& p : head->parameters()) params.push_back(p);
  torch::optim::SGD optimizer(params, torch::optim::SGDOptions(config.learning_rate)
                                          .momentum(config.momentum)
                                          .weight_decay(config.weight_decay));

  std::vector<double> train_acc;
  std::vector<double> test_acc;
  int best_epoch = -1;
  double best = -1.0;
  std::optional<CheckpointBundle> best_bundle;
  std::vector<int64_t> order(n);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto decays = std::count_if(config.milestones.begin(), config.milestones.end(),
                                      [&](int m) { return epoch >= m; });
    const double lr = config.learning_rate * std::pow(config.gamma, decays);
    for (auto& group : optimizer.param_groups()) {
      static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
    }
    backbone->train();
    head->train();
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int64_t start = 0; start < n; start += config.batch_size) {
      const int64_t end = std::min<int64_t>(n, start + config.batch_size);
      if (end - start < 2) break;  // BN1d needs more than one row
      auto index = torch::tensor(
          std::vector<int64_t>(order.begin() + start, order.begin() + end));
      auto x = train.images.index_select(0, index);
      auto y = train.labels.index_select(0, index);
      if (config.flip_augment) {
        std::vector<int64_t> flip_rows;
        for (int64_t r = 0; r < end - start; ++r) {
          if (std::bernoulli_distribution(0.5)(rng)) flip_rows.push_back(r);
        }
        if (!flip_rows.empty()) {
          auto rows = torch::tensor(flip_rows);
          x = x.clone();
          x.index_copy_(0, rows, HorizontalFlip(x.index_select(0, rows)));
        }
      }
      auto logits = head->forward(backbone->forward(Preprocess(preprocess, x)), y);
      auto loss = F::cross_entropy(logits, y);
      if (!std::isfinite(loss.item<double>())) {
        Fail(ErrorCode::kTrainingDiverged,
             "non-finite loss at epoch " + std::to_string(epoch));
      }
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
    }

    CheckpointBundle snapshot(backbone_spec, preprocess, backbone, head_spec, head);
    train_acc.push_back(HeadAccuracy(snapshot, train));
    test_acc.push_back(HeadAccuracy(snapshot, heldout));
    if (test_acc.back() > best) {
      best = test_acc.back();
      best_epoch = epoch;
      best_bundle = snapshot.Clone();
    }
  }
  best_bundle->SetHistory(best_epoch, train_acc, test_acc);
  best_bundle->SetTrainConfig(config);
  return *std::move(best_bundle);
}

void SaveCheckpoint(const CheckpointBundle& bundle, const std::filesystem::path& stem) {
  auto arrays_path = stem;
  arrays_path += ".bnla";
  auto manifest_path = stem;
  manifest_path += ".json";
  SaveArrays(arrays_path, bundle.ExportArrays());
  std::ofstream out(manifest_path);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + manifest_path.string());
  out << bundle.Manifest().dump(2) << "\n";
}

CheckpointBundle LoadCheckpoint(const std::filesystem::path& stem) {
  auto arrays_path = stem;
  arrays_path += ".bnla";
  auto manifest_path = stem;
  manifest_path += ".json";
  std::ifstream in(manifest_path);
  if (!in) Fail(ErrorCode::kArtifactMissing, "missing manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kIo, "bad manifest " + manifest_path.string() + ": " + e.what());
  }
  NamedArrays arrays = LoadArrays(arrays_path);
  BackboneSpec backbone_spec = BackboneSpecFromJson(manifest.at("backbone"));
  PreprocessConfig preprocess = PreprocessFromJson(manifest.at("preprocess"));
  IrSeNet backbone(backbone_spec);
  LoadModuleArrays(backbone, arrays, "backbone.");
  std::optional<HeadSpec> head_spec;
  std::optional<MarginHead> head;
  if (!manifest.at("head").is_null()) {
    head_spec = HeadSpecFromJson(manifest.at("head"));
    head = MarginHead(*head_spec, backbone_spec.embedding_dim);
    LoadModuleArrays(*head, arrays, "head.");
  }
  CheckpointBundle bundle(backbone_spec, preprocess, backbone, head_spec, head);
  bundle.SetHistory(manifest.at("best_epoch").get<int>(),
                    manifest.at("train_accuracy").get<std::vector<double>>(),
                    manifest.at("test_accuracy").get<std::vector<double>>());
  bundle.SetTrainConfig(TrainConfigFromJson(manifest.at("train")));
  bundle.SetTrainIds(manifest.at("train_ids").get<std::vector<int64_t>>());
  return bundle;
}

nlohmann::json ToJson(const BackboneSpec& spec) {
  return {{"architecture_id", spec.architecture_id},
          {"stem_channels", spec.stem_channels},
          {"stage_channels", spec.stage_channels},
          {"stage_units", spec.stage_units},
          {"stage_strides", spec.stage_strides},
          {"se_reduction", spec.se_reduction},
          {"embedding_dim", spec.embedding_dim},
          {"dropout", spec.dropout},
          {"input", {spec.input.channels, spec.input.height, spec.input.width}}};
}

BackboneSpec BackboneSpecFromJson(const nlohmann::json& j) {
  BackboneSpec spec;
  spec.architecture_id = j.value("architecture_id", spec.architecture_id);
  spec.stem_channels = j.value("stem_channels", spec.stem_channels);
  spec.stage_channels = j.value("stage_channels", spec.stage_channels);
  spec.stage_units = j.value("stage_units", spec.stage_units);
  spec.stage_strides = j.value("stage_strides", spec.stage_strides);
  spec.se_reduction = j.value("se_reduction", spec.se_reduction);
  spec.embedding_dim = j.value("embedding_dim", spec.embedding_dim);
  spec.dropout = j.value("dropout", spec.dropout);
  if (j.contains("input")) {
    auto dims = j.at("input").get<std::vector<int64_t>>();
    if (dims.size() != 3) Fail(ErrorCode::kConfig, "input must be [c, h, w]");
    spec.input = {dims[0], dims[1], dims[2]};
  }
  spec.Validate();
  return spec;
}

nlohmann::json ToJson(const HeadSpec& spec) {
  return {{"head_id", HeadKindName(spec.kind)},
          {"num_classes", spec.num_classes},
          {"margin", spec.margin},
          {"scale", spec.scale}};
}

HeadSpec HeadSpecFromJson(const nlohmann::json& j) {
  HeadSpec spec;
  spec.kind = ParseHeadKind(j.value("head_id", HeadKindName(spec.kind)));
  spec.num_classes = j.value("num_classes", spec.num_classes);
  spec.margin = j.value("margin", spec.margin);
  spec.scale = j.value("scale", spec.scale);
  spec.Validate();
  return spec;
}

nlohmann::json ToJson(const PreprocessConfig& config) {
  return {{"input", {config.input.channels, config.input.height, config.input.width}},
          {"mean", config.mean},
          {"stddev", config.stddev}};
}

PreprocessConfig PreprocessFromJson(const nlohmann::json& j) {
  PreprocessConfig config;
  if (j.contains("input")) {
    auto dims = j.at("input").get<std::vector<int64_t>>();
    if (dims.size() != 3) Fail(ErrorCode::kConfig, "input must be [c, h, w]");
    config.input = {dims[0], dims[1], dims[2]};
  }
  config.mean = j.value("mean", config.mean);
  config.stddev = j.value("stddev", config.stddev);
  config.Validate();
  return config;
}

nlohmann::json ToJson(const TrainConfig& config) {
  return {{"seed", config.seed},
          {"epochs", config.epochs},
          {"batch_size", config.batch_size},
          {"learning_rate", config.learning_rate},
          {"momentum", config.momentum},
          {"weight_decay", config.weight_decay},
          {"milestones", config.milestones},
          {"gamma", config.gamma},
          {"flip_augment", config.flip_augment}};
}

TrainConfig TrainConfigFromJson(const nlohmann::json& j) {
  TrainConfig config;
  config.seed = j.value("seed", config.seed);
  config.epochs = j.value("epochs", config.epochs);
  config.batch_size = j.value("batch_size", config.batch_size);
  config.learning_rate = j.value("learning_rate", config.learning_rate);
  config.momentum = j.value("momentum", config.momentum);
  config.weight_decay = j.value("weight_decay", config.weight_decay);
  config.milestones = j.value("milestones", config.milestones);
  config.gamma = j.value("gamma", config.gamma);
  config.flip_augment = j.value("flip_augment", config.flip_augment);
  config.Validate();
  return config;
}

}  // namespace bnleak
