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


#ifndef BNLEAK_CONFIG_H_
#define BNLEAK_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>

#include "json.hpp"

#include "bnleak/backbone.h"
#include "bnleak/data_harness.h"
#include "bnleak/distance_features.h"
#include "bnleak/generator.h"
#include "bnleak/head.h"
#include "bnleak/inversion_attack.h"
#include "bnleak/mi_attack.h"
#include "bnleak/preprocess.h"
#include "bnleak/target_zoo.h"
#include "bnleak/toy_faces.h"

namespace bnleak {

// Which images stand in for non-members in case 1.
enum class NonmemberSource { kExternal, kHeldoutIdentities };

struct TargetDataConfig {
  int64_t identities = 20;
  int64_t first_identity = 0;  // offset into the primary corpus identities
  int64_t train_images = 50;   // per identity, used for training (members)
  int64_t heldout_images = 10; // per identity, used for checkpoint selection
};

struct SplitConfig {
  AttackCase attack_case = AttackCase::kCase1;
  double proportion = 0.1;
  NonmemberSource nonmember_source = NonmemberSource::kExternal;
  int64_t eval_reserve = -1;
  int64_t eval_per_class = 300;
  int64_t aux_identities = 80;  // case 2: primary identities the attacker holds
};

struct MetricsConfig {
  bool normalize_delta_face = true;
  double threshold = 0.5;
  int roc_steps = 100;
};

// 40 epochs, lr steps at 20 and 30, weight decay 5e-5.
TrainConfig ToyTargetTrainConfig();

// Seeds for splits, the attack model and the inversion derive from `seed`;
// model training seeds live in their own train sections.
struct ExperimentConfig {
  uint64_t seed = 17;
  std::filesystem::path out = "runs/toy";
  std::filesystem::path data_path;  // dataset file; empty means <out>/data/corpus.bnla
  ToyCorpusSpec toy;

  TargetDataConfig target_data;
  BackboneSpec backbone;
  HeadSpec head;
  PreprocessConfig preprocess;
  TrainConfig target_train = ToyTargetTrainConfig();
  TrainConfig shadow_train;
  HeadSpec eval_head;
  TrainConfig eval_train;

  SplitConfig split;
  VariantSpec variant;  // empty selection means the backbone default
  AttackTrainConfig attack;

  std::filesystem::path generator_path;  // empty means <out>/generator/generator
  GeneratorSpec generator;
  GeneratorTrainConfig generator_train;
  InversionConfig inversion;

  MetricsConfig metrics;

  std::filesystem::path DataPath() const;
  std::filesystem::path GeneratorPath() const;
  uint64_t SplitSeed() const { return seed; }
  uint64_t AttackSeed() const { return seed + 1; }
  uint64_t InversionSeed() const { return seed + 2; }

  // Resolves defaults that depend on other fields and checks consistency.
  void Finalize();
  nlohmann::json ToJson() const;
  std::string Fingerprint() const;
};

// Rejects unknown keys and wrong types with kConfig.
ExperimentConfig ExperimentConfigFromJson(const nlohmann::json& j);
ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path);

struct ConfigOverrides {
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> variant;
  std::optional<double> proportion;
  std::optional<int> attack_case;
  std::optional<int64_t> n;
  std::optional<int> m;
};

void ApplyOverrides(ExperimentConfig& config, const ConfigOverrides& overrides);

nlohmann::json ToJson(const ToyCorpusSpec& spec);
ToyCorpusSpec ToyCorpusSpecFromJson(const nlohmann::json& j);
nlohmann::json ToJson(const AttackTrainConfig& config);

}  // namespace bnleak

#endif  // BNLEAK_CONFIG_H_
