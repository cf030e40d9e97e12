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


#ifndef BNLEAK_GENERATOR_H_
#define BNLEAK_GENERATOR_H_

#include <cstdint>
#include <filesystem>

#include "json.hpp"
#include <torch/torch.h>

#include "bnleak/array_store.h"

namespace bnleak {

struct GeneratorSpec {
  int64_t latent_dim = 32;
  int64_t base_channels = 64;
  int64_t base_size = 4;  // output side = base_size * 8
  int64_t out_channels = 3;

  void Validate() const;
  int64_t output_size() const { return base_size * 8; }
};

// w -> image in [0, 1]: linear projection to a base_size map, then three
// nearest-upsample + conv stages.
class SynthesisNetImpl : public torch::nn::Module {
 public:
  explicit SynthesisNetImpl(GeneratorSpec spec);
  torch::Tensor forward(const torch::Tensor& w);

 private:
  GeneratorSpec spec_;
  torch::nn::Linear project_{nullptr};
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(SynthesisNet);

// Mapping z -> w is the affine map mean + L z, where (mean, L L^T) is a
// Gaussian fitted to the codes learned during training, so N(0, I) draws
// land on the learned code distribution.
class Generator {
 public:
  Generator(GeneratorSpec spec, SynthesisNet synthesis, torch::Tensor mapping_mean,
            torch::Tensor mapping_chol);

  const GeneratorSpec& spec() const { return spec_; }
  int64_t latent_dim() const { return spec_.latent_dim; }
  // (C, H, W) of synthesized images.
  std::vector<int64_t> output_shape() const;

  torch::Tensor Map(const torch::Tensor& z) const;         // (B, D) -> (B, D)
  torch::Tensor Synthesize(const torch::Tensor& w) const;  // (B, D) -> (B, C, H, W)

  const torch::Tensor& mapping_mean() const { return mapping_mean_; }
  const torch::Tensor& mapping_chol() const { return mapping_chol_; }

  // Deep copy with every parameter cast to `dtype`.
  Generator To(torch::ScalarType dtype) const;

  NamedArrays ExportArrays() const;
  nlohmann::json Manifest() const;
  double final_reconstruction_loss = 0.0;
  uint64_t seed = 0;

 private:
  GeneratorSpec spec_;
  SynthesisNet synthesis_;
  torch::Tensor mapping_mean_;
  torch::Tensor mapping_chol_;
};

struct GeneratorTrainConfig {
  uint64_t seed = 5;
  int epochs = 80;
  int batch_size = 50;
  double learning_rate = 2e-3;
  double code_learning_rate = 1e-2;
  double code_penalty = 1e-3;  // weight of the mean squared code norm

  void Validate() const;
};

// Generative latent optimization: per-image codes and the synthesis network
// are fitted jointly to reconstruct the images.
Generator TrainGloGenerator(const torch::Tensor& images, const GeneratorSpec& spec,
                            const GeneratorTrainConfig& config);

void SaveGenerator(const Generator& generator, const std::filesystem::path& stem);
Generator LoadGenerator(const std::filesystem::path& stem);

nlohmann::json ToJson(const GeneratorSpec& spec);
GeneratorSpec GeneratorSpecFromJson(const nlohmann::json& j);
nlohmann::json ToJson(const GeneratorTrainConfig& config);
GeneratorTrainConfig GeneratorTrainConfigFromJson(const nlohmann::json& j);

}  // namespace bnleak

#endif  // BNLEAK_GENERATOR_H_
