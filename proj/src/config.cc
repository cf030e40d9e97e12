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


#include "bnleak/config.h"

#include <algorithm>
#include <fstream>
#include <set>

#include "bnleak/array_store.h"
#include "bnleak/error.h"

namespace bnleak {
namespace {

using Json = nlohmann::json;

void CheckObject(const Json& j, const std::string& path,
                 std::initializer_list<const char*> allowed) {
  if (!j.is_object()) Fail(ErrorCode::kConfig, path + " must be an object");
  std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!keys.count(key)) {
      Fail(ErrorCode::kConfig, "unknown key '" + key + "' in " + path);
    }
  }
}

const Json& Section(const Json& j, const char* key) {
  static const Json kEmpty = Json::object();
  return j.contains(key) ? j.at(key) : kEmpty;
}

NonmemberSource ParseNonmemberSource(const std::string& name) {
  if (name == "external") return NonmemberSource::kExternal;
  if (name == "heldout_ids") return NonmemberSource::kHeldoutIdentities;
  Fail(ErrorCode::kConfig, "nonmember_source must be 'external' or 'heldout_ids'");
}

std::string NonmemberSourceName(NonmemberSource source) {
  return source == NonmemberSource::kExternal ? "external" : "heldout_ids";
}

int64_t Case2TargetClasses(int64_t aux) {
  const int64_t half = aux / 2;
  return (aux - half) / 2;
}

}  // namespace

TrainConfig ToyTargetTrainConfig() {
  TrainConfig config;
  config.epochs = 40;
  config.weight_decay = 5e-5;
  config.milestones = {20, 30};
  return config;
}

std::filesystem::path ExperimentConfig::DataPath() const {
  return data_path.empty() ? out / "data" / "corpus.bnla" : data_path;
}

std::filesystem::path ExperimentConfig::GeneratorPath() const {
  return generator_path.empty() ? out / "generator" / "generator" : generator_path;
}

void ExperimentConfig::Finalize() {
  if (out.empty()) Fail(ErrorCode::kConfig, "out must not be empty");
  if (toy.external_cast.size() != 3) {
    Fail(ErrorCode::kConfig, "toy.external_cast needs 3 entries");
  }
  backbone.Validate();
  if (!(preprocess.input == backbone.input)) {
    Fail(ErrorCode::kConfig, "preprocess.input must equal backbone.input");
  }
  preprocess.Validate();
  target_train.Validate();
  shadow_train.Validate();
  eval_train.Validate();

  const auto& t = target_data;
  if (t.identities < 2) Fail(ErrorCode::kConfig, "target.identities must be >= 2");
  if (t.first_identity < 0 || t.train_images < 1 || t.heldout_images < 1) {
    Fail(ErrorCode::kConfig, "target image counts must be positive");
  }
  if (t.train_images + t.heldout_images > toy.primary_images) {
    Fail(ErrorCode::kConfig, "target.train_images + heldout_images exceeds images per id");
  }
  int64_t needed = t.first_identity + t.identities;
  if (split.attack_case == AttackCase::kCase1 &&
      split.nonmember_source == NonmemberSource::kHeldoutIdentities) {
    needed += t.identities;
  }
  if (split.attack_case == AttackCase::kCase1 && needed > toy.primary_identities) {
    Fail(ErrorCode::kConfig, "not enough primary identities for the target layout");
  }
  if (!(split.proportion > 0 && split.proportion <= 1)) {
    Fail(ErrorCode::kConfig, "split.proportion must lie in (0, 1]");
  }
  if (split.eval_per_class < 1) Fail(ErrorCode::kConfig, "split.eval_per_class must be >= 1");
  if (split.attack_case == AttackCase::kCase2) {
    if (split.aux_identities < 8 || split.aux_identities > toy.primary_identities) {
      Fail(ErrorCode::kConfig, "split.aux_identities must lie in [8, primary_identities]");
    }
  }

  const int64_t classes = split.attack_case == AttackCase::kCase1
                              ? t.identities
                              : Case2TargetClasses(split.aux_identities);
  head.num_classes = classes;
  eval_head.num_classes = classes;
  head.Validate();
  eval_head.Validate();

  if (variant.selection.empty()) variant.selection = backbone.DefaultBnSelection();
  DistanceLayout(variant, backbone);
  attack.seed = AttackSeed();
  attack.Validate();

  generator.Validate();
  generator_train.Validate();
  if (generator.output_size() != toy.height || toy.height != toy.width) {
    Fail(ErrorCode::kConfig, "generator output must match the square toy image size");
  }
  inversion.seed = InversionSeed();
  inversion.suite.seed = seed + 3;
  inversion.Validate();
  if (metrics.roc_steps < 1) Fail(ErrorCode::kConfig, "metrics.roc_steps must be >= 1");
}

Json ExperimentConfig::ToJson() const {
  Json j;
  j["seed"] = seed;
  j["out"] = out.string();
  j["data"] = {{"path", DataPath().string()}, {"toy", bnleak::ToJson(toy)}};
  j["target"] = {{"identities", target_data.identities},
                 {"first_identity", target_data.first_identity},
                 {"train_images", target_data.train_images},
                 {"heldout_images", target_data.heldout_images},
                 {"backbone", bnleak::ToJson(backbone)},
                 {"head", bnleak::ToJson(head)},
                 {"preprocess", bnleak::ToJson(preprocess)},
                 {"train", bnleak::ToJson(target_train)}};
  j["shadow"] = {{"train", bnleak::ToJson(shadow_train)}};
  j["eval_model"] = {{"head", bnleak::ToJson(eval_head)},
                     {"train", bnleak::ToJson(eval_train)}};
  j["split"] = {{"case", static_cast<int>(split.attack_case)},
                {"proportion", split.proportion},
                {"nonmember_source", NonmemberSourceName(split.nonmember_source)},
                {"eval_reserve", split.eval_reserve},
                {"eval_per_class", split.eval_per_class},
                {"aux_identities", split.aux_identities}};
  Json attack_json = bnleak::ToJson(attack);
  attack_json["variant"] = VariantName(variant.variant);
  attack_json["selection"] = variant.selection;
  j["attack"] = attack_json;
  j["generator"] = {{"path", GeneratorPath().string()},
                    {"spec", bnleak::ToJson(generator)},
                    {"train", bnleak::ToJson(generator_train)}};
  j["inversion"] = {{"N", inversion.n},
                    {"M", inversion.iterations},
                    {"step", inversion.step},
                    {"suite", bnleak::ToJson(inversion.suite)}};
  j["metrics"] = {{"normalize_delta_face", metrics.normalize_delta_face},
                  {"threshold", metrics.threshold},
                  {"roc_steps", metrics.roc_steps}};
  return j;
}

std::string ExperimentConfig::Fingerprint() const {
  // Where artifacts live does not change what is computed.
  Json j = ToJson();
  j.erase("out");
  j["data"].erase("path");
  j["generator"].erase("path");
  return Sha256Hex(j.dump());
}

ExperimentConfig ExperimentConfigFromJson(const Json& j) {
  ExperimentConfig c;
  try {
    CheckObject(j, "config", {"seed", "out", "data", "target", "shadow", "eval_model",
                              "split", "attack", "generator", "inversion", "metrics"});
    c.seed = j.value("seed", c.seed);
    c.out = j.value("out", c.out.string());

    const Json& data = Section(j, "data");
    CheckObject(data, "data", {"path", "toy"});
    c.data_path = data.value("path", std::string());
    if (data.contains("toy")) c.toy = ToyCorpusSpecFromJson(data.at("toy"));

    const Json& target = Section(j, "target");
    CheckObject(target, "target", {"identities", "first_identity", "train_images",
                                   "heldout_images", "backbone", "head", "preprocess",
                                   "train"});
    auto& td = c.target_data;
    td.identities = target.value("identities", td.identities);
    td.first_identity = target.value("first_identity", td.first_identity);
    td.train_images = target.value("train_images", td.train_images);
    td.heldout_images = target.value("heldout_images", td.heldout_images);
    if (target.contains("backbone")) {
      CheckObject(target.at("backbone"), "target.backbone",
                  {"architecture_id", "stem_channels", "stage_channels", "stage_units",
                   "stage_strides", "se_reduction", "embedding_dim", "dropout", "input"});
      c.backbone = BackboneSpecFromJson(target.at("backbone"));
    }
    c.preprocess.input = c.backbone.input;
    if (target.contains("preprocess")) {
      CheckObject(target.at("preprocess"), "target.preprocess", {"input", "mean", "stddev"});
      c.preprocess = PreprocessFromJson(target.at("preprocess"));
    }
    if (target.contains("head")) {
      CheckObject(target.at("head"), "target.head",
                  {"head_id", "num_classes", "margin", "scale"});
      c.head = HeadSpecFromJson(target.at("head"));
    }
    const auto train_keys = {"seed", "epochs", "batch_size", "learning_rate", "momentum",
                             "weight_decay", "milestones", "gamma", "flip_augment"};
    if (target.contains("train")) {
      CheckObject(target.at("train"), "target.train", train_keys);
      Json merged = ToJson(c.target_train);
      merged.update(target.at("train"));
      c.target_train = TrainConfigFromJson(merged);
    }

    c.shadow_train = c.target_train;
    c.shadow_train.seed = c.target_train.seed + 1;
    const Json& shadow = Section(j, "shadow");
    CheckObject(shadow, "shadow", {"train"});
    if (shadow.contains("train")) {
      CheckObject(shadow.at("train"), "shadow.train", train_keys);
      Json merged = ToJson(c.shadow_train);
      merged.update(shadow.at("train"));
      c.shadow_train = TrainConfigFromJson(merged);
    }

    c.eval_head = {HeadKind::kSoftmax, c.head.num_classes, 0.0, 1.0};
    c.eval_train = c.target_train;
    c.eval_train.seed = c.target_train.seed + 2;
    c.eval_train.flip_augment = true;
    const Json& eval_model = Section(j, "eval_model");
    CheckObject(eval_model, "eval_model", {"head", "train"});
    if (eval_model.contains("head")) {
      CheckObject(eval_model.at("head"), "eval_model.head",
                  {"head_id", "num_classes", "margin", "scale"});
      Json merged = ToJson(c.eval_head);
      merged.update(eval_model.at("head"));
      c.eval_head = HeadSpecFromJson(merged);
    }
    if (eval_model.contains("train")) {
      CheckObject(eval_model.at("train"), "eval_model.train", train_keys);
      Json merged = ToJson(c.eval_train);
      merged.update(eval_model.at("train"));
      c.eval_train = TrainConfigFromJson(merged);
    }

    const Json& split = Section(j, "split");
    CheckObject(split, "split", {"case", "proportion", "nonmember_source", "eval_reserve",
                                 "eval_per_class", "aux_identities"});
    const int attack_case = split.value("case", 1);
    if (attack_case != 1 && attack_case != 2) Fail(ErrorCode::kConfig, "split.case must be 1 or 2");
    c.split.attack_case = static_cast<AttackCase>(attack_case);
    c.split.proportion = split.value("proportion", c.split.proportion);
    c.split.nonmember_source =
        ParseNonmemberSource(split.value("nonmember_source", std::string("external")));
    c.split.eval_reserve = split.value("eval_reserve", c.split.eval_reserve);
    c.split.eval_per_class = split.value("eval_per_class", c.split.eval_per_class);
    c.split.aux_identities = split.value("aux_identities", c.split.aux_identities);

    const Json& attack = Section(j, "attack");
    CheckObject(attack, "attack", {"variant", "selection", "iterations", "step",
                                   "init_scale", "standardize", "seed"});
    c.variant.variant = ParseVariant(attack.value("variant", std::string("mean_and_flip")));
    c.variant.selection = attack.value("selection", std::vector<std::string>{});
    c.attack.iterations = attack.value("iterations", c.attack.iterations);
    c.attack.step = attack.value("step", c.attack.step);
    c.attack.init_scale = attack.value("init_scale", c.attack.init_scale);
    c.attack.standardize = attack.value("standardize", c.attack.standardize);

    const Json& generator = Section(j, "generator");
    CheckObject(generator, "generator", {"path", "spec", "train"});
    c.generator_path = generator.value("path", std::string());
    if (generator.contains("spec")) {
      CheckObject(generator.at("spec"), "generator.spec",
                  {"latent_dim", "base_channels", "base_size", "out_channels"});
      c.generator = GeneratorSpecFromJson(generator.at("spec"));
    }
    if (generator.contains("train")) {
      CheckObject(generator.at("train"), "generator.train",
                  {"seed", "epochs", "batch_size", "learning_rate", "code_learning_rate",
                   "code_penalty"});
      c.generator_train = GeneratorTrainConfigFromJson(generator.at("train"));
    }

    const Json& inversion = Section(j, "inversion");
    CheckObject(inversion, "inversion", {"N", "M", "step", "suite"});
    c.inversion.n = inversion.value("N", c.inversion.n);
    c.inversion.iterations = inversion.value("M", c.inversion.iterations);
    c.inversion.step = inversion.value("step", c.inversion.step);
    if (inversion.contains("suite")) {
      CheckObject(inversion.at("suite"), "inversion.suite", {"seed", "ops"});
      c.inversion.suite = AugmentationSuiteFromJson(inversion.at("suite"));
    }

    const Json& metrics = Section(j, "metrics");
    CheckObject(metrics, "metrics", {"normalize_delta_face", "threshold", "roc_steps"});
    c.metrics.normalize_delta_face =
        metrics.value("normalize_delta_face", c.metrics.normalize_delta_face);
    c.metrics.threshold = metrics.value("threshold", c.metrics.threshold);
    c.metrics.roc_steps = metrics.value("roc_steps", c.metrics.roc_steps);
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kConfig, std::string("config type error: ") + e.what());
  }
  c.Finalize();
  return c;
}

ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kConfig, "cannot read config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kConfig, "config is not valid JSON: " + std::string(e.what()));
  }
  return ExperimentConfigFromJson(j);
}

void ApplyOverrides(ExperimentConfig& config, const ConfigOverrides& o) {
  if (o.seed) config.seed = *o.seed;
  if (o.out) config.out = *o.out;
  if (o.variant) config.variant.variant = ParseVariant(*o.variant);
  if (o.proportion) config.split.proportion = *o.proportion;
  if (o.attack_case) {
    if (*o.attack_case != 1 && *o.attack_case != 2) {
      Fail(ErrorCode::kConfig, "--case must be 1 or 2");
    }
    config.split.attack_case = static_cast<AttackCase>(*o.attack_case);
  }
  if (o.n) config.inversion.n = *o.n;
  if (o.m) config.inversion.iterations = *o.m;
  config.Finalize();
}

Json ToJson(const ToyCorpusSpec& s) {
  return {{"seed", s.seed},
          {"height", s.height},
          {"width", s.width},
          {"primary_identities", s.primary_identities},
          {"primary_images", s.primary_images},
          {"external_identities", s.external_identities},
          {"external_images", s.external_images},
          {"public_identities", s.public_identities},
          {"public_images", s.public_images},
          {"pose_jitter", s.pose_jitter},
          {"yaw", s.yaw},
          {"lateral_light", s.lateral_light},
          {"sensor_noise", s.sensor_noise},
          {"occluder_probability", s.occluder_probability},
          {"identity_marks", s.identity_marks},
          {"external_cast", s.external_cast},
          {"external_gain", s.external_gain},
          {"external_noise", s.external_noise}};
}

ToyCorpusSpec ToyCorpusSpecFromJson(const Json& j) {
  CheckObject(j, "data.toy",
              {"seed", "height", "width", "primary_identities", "primary_images",
               "external_identities", "external_images", "public_identities",
               "public_images", "pose_jitter", "yaw", "lateral_light", "sensor_noise",
               "occluder_probability", "identity_marks", "external_cast",
               "external_gain", "external_noise"});
  ToyCorpusSpec s;
  s.seed = j.value("seed", s.seed);
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.primary_identities = j.value("primary_identities", s.primary_identities);
  s.primary_images = j.value("primary_images", s.primary_images);
  s.external_identities = j.value("external_identities", s.external_identities);
  s.external_images = j.value("external_images", s.external_images);
  s.public_identities = j.value("public_identities", s.public_identities);
  s.public_images = j.value("public_images", s.public_images);
  s.pose_jitter = j.value("pose_jitter", s.pose_jitter);
  s.yaw = j.value("yaw", s.yaw);
  s.lateral_light = j.value("lateral_light", s.lateral_light);
  s.sensor_noise = j.value("sensor_noise", s.sensor_noise);
  s.occluder_probability = j.value("occluder_probability", s.occluder_probability);
  s.identity_marks = j.value("identity_marks", s.identity_marks);
  s.external_cast = j.value("external_cast", s.external_cast);
  s.external_gain = j.value("external_gain", s.external_gain);
  s.external_noise = j.value("external_noise", s.external_noise);
  return s;
}

Json ToJson(const AttackTrainConfig& c) {
  return {{"iterations", c.iterations},
          {"step", c.step},
          {"init_scale", c.init_scale},
          {"standardize", c.standardize},
          {"seed", c.seed}};
}

}  // namespace bnleak
