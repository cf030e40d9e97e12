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

#ifndef BNLEAK_PREPROCESS_H_
#define BNLEAK_PREPROCESS_H_

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace bnleak {

struct InputShape {
  int64_t channels = 3;
  int64_t height = 32;
  int64_t width = 32;

  bool operator==(const InputShape&) const = default;
};

// Pinned preprocessing shared by training, embedding, distance extraction and
// inversion: bilinear resize to `input` (half-pixel centers, no antialias)
// followed by per-channel (x - mean) / stddev.
struct PreprocessConfig {
  InputShape input;
  std::vector<double> mean = {0.5, 0.5, 0.5};
  std::vector<double> stddev = {0.5, 0.5, 0.5};

  void Validate() const;
};

// `raw` is (B, C, H, W) with values in [0, 1]. Differentiable.
torch::Tensor Preprocess(const PreprocessConfig& config, const torch::Tensor& raw);

torch::Tensor ResizeBilinear(const torch::Tensor& images, int64_t height,
                             int64_t width);

// Mirrors the width axis of a (..., H, W) tensor.
torch::Tensor HorizontalFlip(const torch::Tensor& images);

}  // namespace bnleak

#endif  // BNLEAK_PREPROCESS_H_
