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

#include "bnleak/preprocess.h"

#include <string>

#include "bnleak/error.h"

namespace bnleak {

namespace F = torch::nn::functional;

void PreprocessConfig::Validate() const {
  if (input.channels <= 0 || input.height <= 0 || input.width <= 0) {
    Fail(ErrorCode::kConfig, "input shape must be positive");
  }
  if (static_cast<int64_t>(mean.size()) != input.channels ||
      static_cast<int64_t>(stddev.size()) != input.channels) {
    Fail(ErrorCode::kConfig, "normalization constants must match channels");
  }
  for (double s : stddev) {
    if (!(s > 0.0)) Fail(ErrorCode::kConfig, "stddev must be positive");
  }
}

torch::Tensor ResizeBilinear(const torch::Tensor& images, int64_t height,
                             int64_t width) {
  if (images.size(-2) == height && images.size(-1) == width) return images;
  return F::interpolate(images, F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{height, width})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
}

torch::Tensor HorizontalFlip(const torch::Tensor& images) {
  return images.flip({-1});
}

torch::Tensor Preprocess(const PreprocessConfig& config,
                         const torch::Tensor& raw) {
  if (raw.dim() != 4) {
    Fail(ErrorCode::kPreprocessing,
         "expected (B, C, H, W) images, got rank " + std::to_string(raw.dim()));
  }
  if (raw.size(1) != config.input.channels) {
    Fail(ErrorCode::kPreprocessing,
         "expected " + std::to_string(config.input.channels) +
             " channels, got " + std::to_string(raw.size(1)));
  }
  if (raw.size(0) == 0 || raw.size(2) == 0 || raw.size(3) == 0) {
    Fail(ErrorCode::kPreprocessing, "empty image batch");
  }
  auto opts = torch::TensorOptions().dtype(raw.scalar_type());
  auto mean = torch::tensor(config.mean, torch::kFloat64).to(opts).view({1, -1, 1, 1});
  auto stddev = torch::tensor(config.stddev, torch::kFloat64).to(opts).view({1, -1, 1, 1});
  auto resized = ResizeBilinear(raw, config.input.height, config.input.width);
  return (resized - mean) / stddev;
}

}  // namespace bnleak
