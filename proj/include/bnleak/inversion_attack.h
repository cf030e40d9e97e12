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


#ifndef BNLEAK_INVERSION_ATTACK_H_
#define BNLEAK_INVERSION_ATTACK_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include <torch/torch.h>

#include "bnleak/generator.h"
#include "bnleak/mi_attack.h"

namespace bnleak {

// Maps raw images (B, C, H, W) to membership probabilities (B,).
using MembershipScorer = std::function<torch::Tensor(const torch::Tensor&)>;

MembershipScorer ScorerFor(const MembershipPipeline& pipeline);

enum class AugmentationKind { kIdentity, kHorizontalFlip, kCenterCropResize, kBrightness };

std::string AugmentationName(AugmentationKind kind);
AugmentationKind ParseAugmentation(const std::string& name);

struct Augmentation {
  AugmentationKind kind = AugmentationKind::kIdentity;
  double amount = 0.0;  // crop scale, or max relative brightness change
};

// Ordered transforms. Brightness draws its factor from
// (seed, candidate, iteration), so a view is reproducible regardless of how
// candidates are scheduled.
struct AugmentationSuite {
  std::vector<Augmentation> ops;
  uint64_t seed = 0;

  static AugmentationSuite Default(uint64_t seed);
  size_t size() const { return ops.size(); }
  torch::Tensor Apply(size_t k, const torch::Tensor& images, int64_t candidate,
                      int64_t iteration) const;
};

// Mean of MI over the image and its |suite| augmented views, per row.
torch::Tensor AveragedMembershipProbability(const torch::Tensor& images,
                                            const AugmentationSuite& suite,
                                            const MembershipScorer& scorer,
                                            int64_t candidate = 0, int64_t iteration = 0);

// N standard-normal latents (N, dim).
torch::Tensor SampleInitialLatents(int64_t n, int64_t dim, uint64_t seed);

// Throws kResizeContract when generator output cannot be resized onto the
// target input geometry (channel count or aspect ratio differ).
void CheckResizeContract(const Generator& generator, const PreprocessConfig& preprocess);

struct CandidateSelection {
  torch::Tensor scores;        // (N,) MI score of every sampled image
  std::vector<int64_t> kept;   // floor(N / 10) indices, best first
  std::vector<int64_t> discarded;
  torch::Tensor w;             // (|kept|, D) mapped latents of kept rows
};

CandidateSelection SelectCandidates(const torch::Tensor& z, const Generator& generator,
                                    const MembershipScorer& scorer);

struct OptimizedCandidate {
  int64_t source_index = -1;   // row of the initial latent sample
  torch::Tensor w_initial;     // (D,)
  torch::Tensor w;             // (D,)
  torch::Tensor image_initial; // (C, H, W)
  torch::Tensor image;         // (C, H, W)
  std::vector<double> prob_trace;  // M + 1 entries; [0] is before any step

  double initial_probability() const { return prob_trace.front(); }
  double final_probability() const { return prob_trace.back(); }
};

// M plain gradient steps on w minimizing -log p, p the averaged membership
// probability of synthesis(w). Throws kDivergedCandidate on a non-finite
// gradient.
OptimizedCandidate OptimizeCandidate(const torch::Tensor& w0, int iterations, double step,
                                     const AugmentationSuite& suite,
                                     const Generator& generator,
                                     const MembershipScorer& scorer,
                                     int64_t candidate = 0);

struct InversionConfig {
  int64_t n = 1000;
  int iterations = 100;
  double step = 0.5;
  uint64_t seed = 3;
  AugmentationSuite suite = AugmentationSuite::Default(3);

  void Validate() const;
};

struct InversionResult {
  torch::Tensor z;                    // (N, D)
  CandidateSelection selection;
  std::vector<OptimizedCandidate> q;  // surviving candidates, selection order
  std::vector<int64_t> diverged;      // source indices dropped on divergence
  std::vector<std::string> log;
};

InversionResult RunInversion(const Generator& generator, const MembershipScorer& scorer,
                             const InversionConfig& config);

nlohmann::json ToJson(const AugmentationSuite& suite);
AugmentationSuite AugmentationSuiteFromJson(const nlohmann::json& j);

}  // namespace bnleak

#endif  // BNLEAK_INVERSION_ATTACK_H_
