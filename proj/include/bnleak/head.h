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

#ifndef BNLEAK_HEAD_H_
#define BNLEAK_HEAD_H_

#include <cstdint>
#include <string>

#include <torch/torch.h>

namespace bnleak {

enum class HeadKind { kArcFace, kCosFace, kSoftmax };

std::string HeadKindName(HeadKind kind);
HeadKind ParseHeadKind(const std::string& name);

struct HeadSpec {
  HeadKind kind = HeadKind::kArcFace;
  int64_t num_classes = 20;
  double margin = 0.5;
  double scale = 16.0;

  void Validate() const;
};

// Classification layer used while training the backbone. Margin heads operate
// on cosine similarity between L2-normalized embeddings and class weights.
class MarginHeadImpl : public torch::nn::Cloneable<MarginHeadImpl> {
 public:
  MarginHeadImpl(HeadSpec spec, int64_t embedding_dim);
  void reset() override;

  // Training logits with the margin applied to the target class.
  torch::Tensor forward(const torch::Tensor& embeddings,
                        const torch::Tensor& labels);

  // Margin-free per-class scores (B, num_classes).
  torch::Tensor Scores(const torch::Tensor& embeddings);

  const HeadSpec& spec() const { return spec_; }
  torch::Tensor& weight() { return weight_; }

 private:
  HeadSpec spec_;
  int64_t embedding_dim_;
  torch::Tensor weight_;
  torch::Tensor bias_;
};
TORCH_MODULE(MarginHead);

}  // namespace bnleak

#endif  // BNLEAK_HEAD_H_
