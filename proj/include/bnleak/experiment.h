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


#ifndef BNLEAK_EXPERIMENT_H_
#define BNLEAK_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include <torch/torch.h>

#include "bnleak/config.h"
#include "bnleak/evaluation.h"
#include "bnleak/inversion_attack.h"
#include "bnleak/mi_attack.h"
#include "bnleak/target_zoo.h"
#include "bnleak/toy_faces.h"

namespace bnleak {

// Training and held-out images of a list of identities; identity k of the
// list gets label k.
struct IdentityData {
  std::vector<int64_t> identities;
  LabeledImages train;
  LabeledImages heldout;
  std::vector<int64_t> train_ids;    // dataset rows
  std::vector<int64_t> heldout_ids;  // dataset rows
};

IdentityData GatherIdentityData(const FaceDataset& data,
                                std::span<const int64_t> identities,
                                int64_t train_images, int64_t heldout_images);

// First `per_identity` dataset rows of each listed identity.
std::vector<int64_t> RowsOfIdentities(const FaceDataset& data,
                                      std::span<const int64_t> identities,
                                      int64_t per_identity);

// Identities the target is trained on for the configured case.
std::vector<int64_t> TargetIdentities(const ExperimentConfig& config);

FaceDataset RequireDataset(const ExperimentConfig& config);

inline constexpr int kUntrainedDraws = 32;

struct Stage1Result {
  AttackModel model;
  MetricsReport report;
  std::vector<double> eval_probs;
  std::vector<int> eval_labels;
  double untrained_asr = 0.0;        // mean over kUntrainedDraws initializations
  double untrained_asr_first = -1.0;
  std::filesystem::path dir;
};

struct Stage2Result {
  InversionResult inversion;
  MetricsReport initial;
  MetricsReport optimized;
  std::vector<MatchPair> matches;
  double rejected_mean_score = 0.0;
  std::filesystem::path dir;
};

std::filesystem::path MakeToyData(const ExperimentConfig& config);
std::filesystem::path TrainTarget(const ExperimentConfig& config);
std::filesystem::path TrainGenerator(const ExperimentConfig& config);
Stage1Result RunStage1(const ExperimentConfig& config);
Stage2Result RunStage2(const ExperimentConfig& config,
                       const std::optional<std::filesystem::path>& attack_model = {});
std::filesystem::path WriteReport(const ExperimentConfig& config);

std::filesystem::path TargetStem(const ExperimentConfig& config);
std::filesystem::path Stage1Dir(const ExperimentConfig& config);
std::filesystem::path Stage2Dir(const ExperimentConfig& config);

// Writes an (C, H, W) image in [0, 1] as binary PPM (C = 3) or PGM (C = 1).
void WritePnm(const std::filesystem::path& path, const torch::Tensor& image);

// Command-line entry point. Exit codes: 0 success, 2 config error,
// 3 runtime error.
int RunCli(int argc, const char* const* argv);

}  // namespace bnleak

#endif  // BNLEAK_EXPERIMENT_H_
