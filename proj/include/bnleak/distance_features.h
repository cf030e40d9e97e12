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

#ifndef BNLEAK_DISTANCE_FEATURES_H_
#define BNLEAK_DISTANCE_FEATURES_H_

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "bnleak/bn_reference.h"
#include "bnleak/target_zoo.h"

namespace bnleak {

enum class Variant { kMean, kVar, kMeanAndVar, kMeanAndFlip, kMeanAndVarAndFlip };

std::string VariantName(Variant variant);
Variant ParseVariant(const std::string& name);
bool UsesMean(Variant variant);
bool UsesVar(Variant variant);
bool UsesFlip(Variant variant);

struct VariantSpec {
  Variant variant = Variant::kMeanAndFlip;
  std::vector<std::string> selection;
};

enum class Statistic { kMean, kVar };
std::string StatisticName(Statistic statistic);

struct LayoutEntry {
  std::string layer_id;
  Statistic statistic;

  bool operator==(const LayoutEntry&) const = default;
};

// Feature order fed to the attack model: every mean distance in selection
// order, then every variance distance in selection order. BN1d layers never
// contribute a variance distance.
std::vector<LayoutEntry> DistanceLayout(const VariantSpec& variant,
                                        const BackboneSpec& backbone);

struct DistanceVector {
  std::vector<double> values;
  std::vector<LayoutEntry> layout;
};

// Channel mean over the spatial axes. Accepts (C, H, W) / (B, C, H, W) for
// 2d layers; 1d activations (C) / (B, C) are returned unchanged.
torch::Tensor ReduceChannelMean(const torch::Tensor& activation, BnKind kind);

// Population variance (divisor H * W) over the spatial axes of a 2d
// activation. 1d activations are rejected with kVarianceUndefined.
torch::Tensor ReduceChannelVar(const torch::Tensor& activation, BnKind kind);

// (1 / b) * ||reduced - reference||^2 along the last axis (b = its length).
torch::Tensor StatDistance(const torch::Tensor& reduced, const torch::Tensor& reference);

// (1 / b) * ||(reduced + reduced_flipped) / 2 - reference||^2.
torch::Tensor FlipFusedDistance(const torch::Tensor& reduced,
                               const torch::Tensor& reduced_flipped,
                               const torch::Tensor& reference);

// Distance features of a batch of raw images, (B, layout length).
// Differentiable with respect to `raw_images`; flip variants run the
// horizontally mirrored (preprocessed) batch alongside and fuse per layer.
torch::Tensor DistanceFeatures(const CheckpointBundle& bundle,
                               const BnReferenceSet& refs,
                               const torch::Tensor& raw_images,
                               const VariantSpec& variant);

// Same as DistanceFeatures without autograd, processed in chunks.
torch::Tensor DistanceFeaturesNoGrad(const CheckpointBundle& bundle,
                                     const BnReferenceSet& refs,
                                     const torch::Tensor& raw_images,
                                     const VariantSpec& variant);

// Single image, (C, H, W) or (1, C, H, W).
DistanceVector BuildDistanceVector(const CheckpointBundle& bundle,
                                   const BnReferenceSet& refs,
                                   const torch::Tensor& image,
                                   const VariantSpec& variant);

// Delimited plot data: one row per (sample, layout entry) with columns
// sample,label,layer_id,statistic,distance.
void WritePlotData(std::ostream& out, const torch::Tensor& distances,
                   std::span<const int> labels,
                   std::span<const LayoutEntry> layout);

}  // namespace bnleak

#endif  // BNLEAK_DISTANCE_FEATURES_H_
