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


#include "bnleak/mi_attack.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "bnleak/error.h"

namespace bnleak {
namespace {

torch::Tensor F64(const torch::Tensor& t) { return t.to(torch::kFloat64); }

// log(1 + exp(x)) without overflow.
torch::Tensor Softplus(const torch::Tensor& x) {
  return torch::clamp_min(x, 0) + torch::log1p(torch::exp(-x.abs()));
}

torch::Tensor LabelTensor(const std::vector<int>& labels) {
  return torch::tensor(std::vector<int64_t>(labels.begin(), labels.end()),
                       torch::kInt64);
}

nlohmann::json LayoutJson(const std::vector<LayoutEntry>& layout) {
  auto out = nlohmann::json::array();
  for (const auto& e : layout) {
    out.push_back({{"layer_id", e.layer_id}, {"statistic", StatisticName(e.statistic)}});
  }
  return out;
}

}  // namespace

int64_t LabeledDistanceSet::Count(int label) const {
  return std::count(labels.begin(), labels.end(), label);
}

void LabeledDistanceSet::Validate(bool require_both_classes) const {
  if (!distances.defined() || distances.dim() != 2) {
    Fail(ErrorCode::kShape, "distance set must be a (N, L) matrix");
  }
  if (distances.size(0) != size()) {
    Fail(ErrorCode::kShape, "distance rows and labels differ in count");
  }
  if (size() == 0) Fail(ErrorCode::kEmptyInput, "empty distance set");
  for (int label : labels) {
    if (label != 0 && label != 1) Fail(ErrorCode::kInvalidArgument, "labels must be 0 or 1");
  }
  if (require_both_classes && (Count(0) == 0 || Count(1) == 0)) {
    Fail(ErrorCode::kInvalidTrainingSet, "training rows must contain both classes");
  }
}

LabeledDistanceSet LabeledDistanceSet::Concat(const torch::Tensor& members,
                                              const torch::Tensor& nonmembers) {
  LabeledDistanceSet set;
  set.distances = torch::cat({F64(members), F64(nonmembers)});
  set.labels.assign(members.size(0), 1);
  set.labels.insert(set.labels.end(), nonmembers.size(0), 0);
  return set;
}

void AttackTrainConfig::Validate() const {
  if (iterations < 0) Fail(ErrorCode::kConfig, "attack iterations must be >= 0");
  if (!(step > 0)) Fail(ErrorCode::kConfig, "attack step must be positive");
  if (init_scale < 0) Fail(ErrorCode::kConfig, "init_scale must be >= 0");
}

AttackModel::AttackModel(VariantSpec variant, std::vector<LayoutEntry> layout)
    : variant_(std::move(variant)), layout_(std::move(layout)) {
  if (layout_.empty()) Fail(ErrorCode::kLayoutMismatch, "empty attack layout");
  const int64_t n = dim();
  weights_ = torch::zeros({n}, torch::kFloat64);
  shift_ = torch::zeros({n}, torch::kFloat64);
  scale_ = torch::ones({n}, torch::kFloat64);
}

void AttackModel::SetParameters(torch::Tensor weights, double bias) {
  if (weights.dim() != 1 || weights.size(0) != dim()) {
    Fail(ErrorCode::kLayoutMismatch, "weight length does not match the layout");
  }
  weights_ = F64(weights).detach().clone();
  bias_ = bias;
}

void AttackModel::SetStandardization(torch::Tensor shift, torch::Tensor scale) {
  if (shift.numel() != dim() || scale.numel() != dim()) {
    Fail(ErrorCode::kLayoutMismatch, "standardization length does not match the layout");
  }
  shift_ = F64(shift).reshape({dim()}).detach().clone();
  scale_ = F64(scale).reshape({dim()}).detach().clone();
}

torch::Tensor AttackModel::Logits(const torch::Tensor& distances) const {
  if (distances.dim() != 2 || distances.size(1) != dim()) {
    Fail(ErrorCode::kLayoutMismatch,
         "distance width " + std::to_string(distances.size(-1)) +
             " does not match attack layout " + std::to_string(dim()));
  }
  auto x = (F64(distances) - shift_) / scale_;
  return torch::mv(x, weights_) + bias_;
}

torch::Tensor AttackModel::Probabilities(const torch::Tensor& distances) const {
  return torch::sigmoid(Logits(distances));
}

NamedArrays AttackModel::ExportArrays() const {
  return {{"weights", weights_},
          {"bias", torch::tensor({bias_}, torch::kFloat64)},
          {"shift", shift_},
          {"scale", scale_}};
}

nlohmann::json AttackModel::Manifest() const {
  nlohmann::json j;
  j["format"] = "bnleak-attack/1";
  j["variant"] = VariantName(variant_.variant);
  j["selection"] = variant_.selection;
  j["layout"] = LayoutJson(layout_);
  j["seed"] = seed;
  j["best_accuracy"] = best_accuracy;
  j["best_iteration"] = best_iteration;
  j["accuracy_trace"] = accuracy_trace;
  j["train_rows"] = train_rows;
  j["eval_rows"] = eval_rows;
  j["fingerprint"] = Fingerprint(ExportArrays());
  return j;
}

double PredictMembership(const AttackModel& model, const DistanceVector& d) {
  if (d.layout != model.layout()) {
    Fail(ErrorCode::kLayoutMismatch, "distance layout differs from the attack model's");
  }
  auto row = torch::tensor(d.values, torch::kFloat64).unsqueeze(0);
  return model.Probabilities(row).item<double>();
}

double AttackAccuracy(const AttackModel& model, const LabeledDistanceSet& set) {
  set.Validate(false);
  torch::NoGradGuard no_grad;
  auto predicted = (model.Probabilities(set.distances) >= 0.5).to(torch::kInt64);
  return predicted.eq(LabelTensor(set.labels)).to(torch::kFloat64).mean().item<double>();
}

double PairedLoss(const AttackModel& model, const LabeledDistanceSet& set) {
  set.Validate(true);
  torch::NoGradGuard no_grad;
  auto z = model.Logits(set.distances);
  auto member = LabelTensor(set.labels).eq(1);
  auto ce_member = Softplus(-z.index({member})).mean();
  auto ce_nonmember = Softplus(z.index({member.logical_not()})).mean();
  return (ce_member + ce_nonmember).item<double>();
}

AttackModel TrainAttackModel(const LabeledDistanceSet& train,
                             const LabeledDistanceSet& eval,
                             const VariantSpec& variant,
                             const std::vector<LayoutEntry>& layout,
                             const AttackTrainConfig& config) {
  config.Validate();
  train.Validate(true);
  eval.Validate(false);
  torch::NoGradGuard no_grad;

  AttackModel model(variant, layout);
  const int64_t n = model.dim();
  auto x_raw = F64(train.distances);
  if (x_raw.size(1) != n || eval.distances.size(1) != n) {
    Fail(ErrorCode::kLayoutMismatch, "distance width does not match the layout");
  }
  if (config.standardize) {
    auto mean = x_raw.mean(0);
    auto sd = x_raw.std(0, /*unbiased=*/false);
    sd = torch::where(sd > 0, sd, torch::ones_like(sd));
    model.SetStandardization(mean, sd);
  }
  auto x = (x_raw - model.shift()) / model.scale();

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> w0(n);
  for (auto& v : w0) v = config.init_scale * normal(rng);
  auto w = torch::tensor(w0, torch::kFloat64);
  double b = 0.0;

  // Each class contributes its mean loss, so the per-row gradient
  // coefficient is (p - s) / n_s.
  auto labels = LabelTensor(train.labels);
  auto is_member = labels.eq(1).to(torch::kFloat64);
  const double n_member = static_cast<double>(train.Count(1));
  const double n_nonmember = static_cast<double>(train.Count(0));
  auto row_weight = is_member / n_member + (1 - is_member) / n_nonmember;

  model.seed = config.seed;
  model.train_rows = static_cast<int>(train.size());
  model.eval_rows = static_cast<int>(eval.size());
  for (int it = 0;; ++it) {
    model.SetParameters(w, b);
    const double acc = AttackAccuracy(model, eval);
    model.accuracy_trace.push_back(acc);
    if (acc > model.best_accuracy || model.best_iteration < 0) {
      model.best_accuracy = acc;
      model.best_iteration = it;
      w0.assign(w.data_ptr<double>(), w.data_ptr<double>() + n);
      w0.push_back(b);
    }
    if (it == config.iterations) break;

    auto z = torch::mv(x, w) + b;
    auto loss = (row_weight * (is_member * Softplus(-z) + (1 - is_member) * Softplus(z)))
                    .sum()
                    .item<double>();
    if (!std::isfinite(loss)) {
      Fail(ErrorCode::kTrainingDiverged,
           "attack loss is not finite at iteration " + std::to_string(it));
    }
    auto coeff = row_weight * (torch::sigmoid(z) - is_member);
    w = w - config.step * torch::mv(x.t(), coeff);
    b = b - config.step * coeff.sum().item<double>();
  }
  const double best_b = w0.back();
  w0.pop_back();
  model.SetParameters(torch::tensor(w0, torch::kFloat64), best_b);
  return model;
}

AttackModel TrainAttackModel(const torch::Tensor& member_images,
                             const torch::Tensor& nonmember_images,
                             const torch::Tensor& eval_member_images,
                             const torch::Tensor& eval_nonmember_images,
                             const CheckpointBundle& bundle,
                             const BnReferenceSet& refs, const VariantSpec& variant,
                             const AttackTrainConfig& config) {
  auto features = [&](const torch::Tensor& images) {
    return DistanceFeaturesNoGrad(bundle, refs, images, variant);
  };
  if (member_images.size(0) == 0 || nonmember_images.size(0) == 0) {
    Fail(ErrorCode::kInvalidTrainingSet, "training rows must contain both classes");
  }
  auto train = LabeledDistanceSet::Concat(features(member_images), features(nonmember_images));
  auto eval = LabeledDistanceSet::Concat(features(eval_member_images),
                                         features(eval_nonmember_images));
  return TrainAttackModel(train, eval, variant,
                          DistanceLayout(variant, bundle.backbone_spec()), config);
}

void SaveAttackModel(const AttackModel& model, const std::filesystem::path& stem) {
  auto arrays_path = stem;
  arrays_path += ".bnla";
  SaveArrays(arrays_path, model.ExportArrays());
  auto json_path = stem;
  json_path += ".json";
  std::ofstream out(json_path);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + json_path.string());
  out << model.Manifest().dump(2) << '\n';
}

AttackModel LoadAttackModel(const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  std::ifstream in(json_path);
  if (!in) Fail(ErrorCode::kArtifactMissing, "missing attack manifest " + json_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kIo, "malformed attack manifest: " + std::string(e.what()));
  }
  auto arrays_path = stem;
  arrays_path += ".bnla";
  const auto arrays = LoadArrays(arrays_path);

  VariantSpec variant{ParseVariant(j.at("variant")),
                      j.at("selection").get<std::vector<std::string>>()};
  std::vector<LayoutEntry> layout;
  for (const auto& e : j.at("layout")) {
    layout.push_back({e.at("layer_id"),
                      e.at("statistic") == "mean" ? Statistic::kMean : Statistic::kVar});
  }
  AttackModel model(variant, layout);
  model.SetParameters(RequireArray(arrays, "weights"),
                      RequireArray(arrays, "bias").item<double>());
  model.SetStandardization(RequireArray(arrays, "shift"), RequireArray(arrays, "scale"));
  model.seed = j.at("seed");
  model.best_accuracy = j.at("best_accuracy");
  model.best_iteration = j.at("best_iteration");
  model.accuracy_trace = j.at("accuracy_trace").get<std::vector<double>>();
  model.train_rows = j.at("train_rows");
  model.eval_rows = j.at("eval_rows");
  return model;
}

MembershipPipeline::MembershipPipeline(CheckpointBundle bundle, BnReferenceSet refs,
                                       AttackModel model)
    : bundle_(std::move(bundle)), refs_(std::move(refs)), model_(std::move(model)) {
  if (DistanceLayout(model_.variant(), bundle_.backbone_spec()) != model_.layout()) {
    Fail(ErrorCode::kLayoutMismatch, "attack layout does not match the backbone selection");
  }
}

torch::Tensor MembershipPipeline::Score(const torch::Tensor& raw_images) const {
  return model_.Probabilities(
      DistanceFeatures(bundle_, refs_, raw_images, model_.variant()));
}

torch::Tensor MembershipPipeline::ScoreNoGrad(const torch::Tensor& raw_images) const {
  torch::NoGradGuard no_grad;
  return MapChunks(raw_images, 128,
                   [&](const torch::Tensor& chunk) { return Score(chunk); });
}

}  // namespace bnleak
