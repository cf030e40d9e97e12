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

#ifndef BNLEAK_TESTS_TEST_UTIL_H_
#define BNLEAK_TESTS_TEST_UTIL_H_

#include <cstdint>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "json.hpp"
#include <gtest/gtest.h>
#include <torch/torch.h>

#include "bnleak/backbone.h"
#include "bnleak/error.h"
#include "bnleak/head.h"
#include "bnleak/target_zoo.h"
#include "bnleak/toy_faces.h"

namespace bnleak::testing {

inline BackboneSpec TinySpec() {
  BackboneSpec spec;
  spec.stem_channels = 4;
  spec.stage_channels = {4, 8, 8, 8};
  spec.embedding_dim = 8;
  spec.input = {3, 16, 16};
  return spec;
}

inline torch::Tensor RandomImages(int64_t n, int64_t c, int64_t h, int64_t w,
                                  uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::rand({n, c, h, w}, gen);
}

// Untrained bundle whose BN running statistics are randomized so distances
// are not trivially tied to the default (0, 1) statistics.
inline CheckpointBundle RandomBundle(const BackboneSpec& spec, uint64_t seed,
                                     bool with_head = true, int64_t classes = 5) {
  torch::manual_seed(seed);
  IrSeNet net(spec);
  {
    torch::NoGradGuard no_grad;
    for (const auto& info : spec.BnLayerCatalog()) {
      auto [mean, var] = net->RunningStats(info.id);
      mean.uniform_(-0.5, 0.5);
      var.uniform_(0.5, 1.5);
    }
  }
  PreprocessConfig preprocess;
  preprocess.input = spec.input;
  std::optional<HeadSpec> head_spec;
  std::optional<MarginHead> head;
  if (with_head) {
    head_spec = HeadSpec{HeadKind::kArcFace, classes, 0.5, 16.0};
    head = MarginHead(*head_spec, spec.embedding_dim);
  }
  return CheckpointBundle(spec, preprocess, net, head_spec, head);
}

inline ToyCorpusSpec TinyCorpusSpec() {
  ToyCorpusSpec spec;
  spec.height = 16;
  spec.width = 16;
  spec.primary_identities = 6;
  spec.primary_images = 8;
  spec.external_identities = 3;
  spec.external_images = 4;
  spec.public_identities = 4;
  spec.public_images = 3;
  return spec;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() /
              (name + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// A complete experiment small enough to run every command in seconds.
inline nlohmann::json TinyExperimentJson(const std::filesystem::path& out) {
  return {
      {"seed", 3},
      {"out", out.string()},
      {"data",
       {{"toy",
         {{"height", 16}, {"width", 16}, {"primary_identities", 8}, {"primary_images", 8},
          {"external_identities", 4}, {"external_images", 6}, {"public_identities", 10},
          {"public_images", 4}}}}},
      {"target",
       {{"identities", 4},
        {"train_images", 6},
        {"heldout_images", 2},
        {"backbone",
         {{"stem_channels", 4}, {"stage_channels", {4, 8, 8, 8}}, {"embedding_dim", 8},
          {"input", {3, 16, 16}}}},
        {"train", {{"epochs", 2}, {"batch_size", 8}, {"milestones", nlohmann::json::array()}}}}},
      {"split", {{"proportion", 0.5}, {"nonmember_source", "heldout_ids"},
                 {"eval_per_class", 4}, {"aux_identities", 8}}},
      {"attack", {{"iterations", 20}, {"standardize", true}}},
      {"generator",
       {{"spec", {{"latent_dim", 4}, {"base_channels", 4}, {"base_size", 2}}},
        {"train", {{"epochs", 2}, {"batch_size", 10}}}}},
      {"inversion", {{"N", 20}, {"M", 2}}}};
}

#define EXPECT_BNLEAK_ERROR(stmt, error_code)                                \
  do {                                                                       \
    try {                                                                    \
      stmt;                                                                  \
      ADD_FAILURE() << "expected " << ::bnleak::ErrorCodeName(error_code);   \
    } catch (const ::bnleak::Error& e) {                                     \
      EXPECT_EQ(e.code(), error_code) << e.what();                           \
    }                                                                        \
  } while (0)

}  // namespace bnleak::testing

#endif  // BNLEAK_TESTS_TEST_UTIL_H_
