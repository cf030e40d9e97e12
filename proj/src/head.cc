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

#include "bnleak/head.h"

#include <cmath>
#include <numbers>

#include "bnleak/error.h"

namespace bnleak {

namespace F = torch::nn::functional;

std::string HeadKindName(HeadKind kind) {
  switch (kind) {
    case HeadKind::kArcFace: return "arcface-margin";
    case HeadKind::kCosFace: return "cosface-margin";
    case HeadKind::kSoftmax: return "plain-softmax";
  }
  return "unknown";
}

HeadKind ParseHeadKind(const std::string& name) {
  if (name == "arcface-margin" || name == "arcface") return HeadKind::kArcFace;
  if (name == "cosface-margin" || name == "cosface") return HeadKind::kCosFace;
  if (name == "plain-softmax" || name == "softmax") return HeadKind::kSoftmax;
  Fail(ErrorCode::kConfig, "unknown head '" + name + "'");
}

void HeadSpec::Validate() const {
  if (num_classes < 2) Fail(ErrorCode::kConfig, "head needs >= 2 classes");
  if (!(scale > 0.0)) Fail(ErrorCode::kConfig, "head scale must be positive");
  if (margin < 0.0) Fail(ErrorCode::kConfig, "head margin must be >= 0");
}

MarginHeadImpl::MarginHeadImpl(HeadSpec spec, int64_t embedding_dim)
    : spec_(spec), embedding_dim_(embedding_dim) {
  spec_.Validate();
  reset();
}

void MarginHeadImpl::reset() {
  weight_ = register_parameter(
      "weight", torch::empty({spec_.num_classes, embedding_dim_}));
  torch::nn::init::xavier_uniform_(weight_);
  if (spec_.kind == HeadKind::kSoftmax) {
    bias_ = register_parameter("bias", torch::zeros({spec_.num_classes}));
  }
}

torch::Tensor MarginHeadImpl::Scores(const torch::Tensor& embeddings) {
  if (spec_.kind == HeadKind::kSoftmax) {
    return F::linear(embeddings, weight_, bias_);
  }
  auto cosine = F::linear(F::normalize(embeddings, F::NormalizeFuncOptions().dim(1)),
                          F::normalize(weight_, F::NormalizeFuncOptions().dim(1)));
  return spec_.scale * cosine;
}

torch::Tensor MarginHeadImpl::forward(const torch::Tensor& embeddings,
                                      const torch::Tensor& labels) {
  if (spec_.kind == HeadKind::kSoftmax) return Scores(embeddings);
  auto cosine =
      F::linear(F::normalize(embeddings, F::NormalizeFuncOptions().dim(1)),
                F::normalize(weight_, F::NormalizeFuncOptions().dim(1)))
          .clamp(-1.0 + 1e-7, 1.0 - 1e-7);
  auto one_hot = F::one_hot(labels, spec_.num_classes).to(cosine.dtype());
  torch::Tensor target;
  if (spec_.kind == HeadKind::kCosFace) {
    target = cosine - spec_.margin;
  } else {
    // cos(theta + m), falling back to cos(theta) - m*sin(m) past pi - m so the
    // logit stays monotone in theta.
    const double cos_m = std::cos(spec_.margin);
    const double sin_m = std::sin(spec_.margin);
    const double threshold = std::cos(std::numbers::pi - spec_.margin);
    const double fallback = std::sin(std::numbers::pi - spec_.margin) * spec_.margin;
    auto sine = torch::sqrt(1.0 - cosine * cosine);
    auto phi = cosine * cos_m - sine * sin_m;
    target = torch::where(cosine > threshold, phi, cosine - fallback);
  }
  return spec_.scale * (one_hot * target + (1.0 - one_hot) * cosine);
}

}  // namespace bnleak
