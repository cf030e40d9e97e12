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

#ifndef BNLEAK_TOY_FACES_H_
#define BNLEAK_TOY_FACES_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <torch/torch.h>

namespace bnleak {

// Which corpus an image belongs to. The primary corpus plays the role of the
// face-recognition training data, the external corpus is a second dataset
// with different capture conditions, and the public corpus is what a
// generator may be trained on.
enum class Source : int64_t { kPrimary = 0, kExternal = 1, kPublic = 2 };

// An in-memory labeled image collection. Image ids are row indices.
struct FaceDataset {
  torch::Tensor images;  // (N, C, H, W) float32 in [0, 1]
  std::vector<int64_t> identity;
  std::vector<Source> source;

  int64_t size() const { return static_cast<int64_t>(identity.size()); }
  torch::Tensor Gather(std::span<const int64_t> ids) const;
  std::vector<int64_t> IdsFrom(Source s) const;
  void Validate() const;
};

void SaveDataset(const std::filesystem::path& path, const FaceDataset& data);
FaceDataset LoadDataset(const std::filesystem::path& path);

struct ToyCorpusSpec {
  uint64_t seed = 2024;
  int64_t height = 32;
  int64_t width = 32;
  int64_t primary_identities = 80;
  int64_t primary_images = 60;
  int64_t external_identities = 40;
  int64_t external_images = 20;
  int64_t public_identities = 100;
  int64_t public_images = 10;
  // Capture difficulty for the primary and public corpora.
  double pose_jitter = 0.18;
  double yaw = 0.15;            // max sideways shift of inner features
  double lateral_light = 0.5;   // max relative left-right illumination slope
  double sensor_noise = 0.06;
  double occluder_probability = 0.3;
  int64_t identity_marks = 3;   // mirrored mark pairs per identity
  // The external corpus differs by a white-balance cast.
  std::vector<double> external_cast = {0.06, 0.0, -0.06};
  double external_gain = 1.0;
  double external_noise = 0.06;
};

// Procedurally rendered faces: each identity fixes face shape, skin, hair,
// eye, mouth and an off-center mark; each image draws pose, scale, lighting,
// background and sensor noise. Images are quantized to 8 bits so the corpus
// round-trips through SaveDataset exactly.
FaceDataset MakeToyFaceDataset(const ToyCorpusSpec& spec);

}  // namespace bnleak

#endif  // BNLEAK_TOY_FACES_H_
