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

#include "bnleak/distance_features.h"

#include <iomanip>

#include "bnleak/error.h"
#include "bnleak/preprocess.h"

namespace bnleak {

std::string VariantName(Variant variant) {
  switch (variant) {
    case Variant::kMean: return "mean";
    case Variant::kVar: return "var";
    case Variant::kMeanAndVar: return "mean_and_var";
    case Variant::kMeanAndFlip: return "mean_and_flip";
    case Variant::kMeanAndVarAndFlip: return "mean_and_var_and_flip";
  }
  return "unknown";
}

Variant ParseVariant(const std::string& name) {
  for (Variant v : {Variant::kMean, Variant::kVar, Variant::kMeanAndVar,
                    Variant::kMeanAndFlip, Variant::kMeanAndVarAndFlip}) {
    if (VariantName(v) == name) return v;
  }
  Fail(ErrorCode::kConfig, "unknown variant '" + name + "'");
}

bool UsesMean(Variant variant) { return variant != Variant::kVar; }

bool UsesVar(Variant variant) {
  return variant == Variant::kVar || variant == Variant::kMeanAndVar ||
         variant == Variant::kMeanAndVarAndFlip;
}

bool UsesFlip(Variant variant) {
  return variant == Variant::kMeanAndFlip || variant == Variant::kMeanAndVarAndFlip;
}

std::string StatisticName(Statistic statistic) {
  return statistic == Statistic::kMean ? "mean" : "var";
}

std::vector<LayoutEntry> DistanceLayout(const VariantSpec& variant,
                                        const BackboneSpec& backbone) {
  const auto resolved = ResolveSelection(backbone, variant.selection);
  std::vector<LayoutEntry> layout;
  if (UsesMean(variant.variant)) {
    for (const auto& info : resolved) layout.push_back({info.id, Statistic::kMean});
  }
  if (UsesVar(variant.variant)) {
    for (const auto& info : resolved) {
      if (info.kind == BnKind::k2d) layout.push_back({info.id, Statistic::kVar});
    }
  }
  if (layout.empty()) {
    Fail(ErrorCode::kSelection, "variant " + VariantName(variant.variant) +
                                    " yields no features for this selection");
  }
  return layout;
}

torch::Tensor ReduceChannelMean(const torch::Tensor& activation, BnKind kind) {
  if (kind == BnKind::k1d) {
    if (activation.dim() != 1 && activation.dim() != 2) {
      Fail(ErrorCode::kShape, "1d activation must be (C) or (B, C)");
    }
    return activation;
  }
  if (activation.dim() != 3 && activation.dim() != 4) {
    Fail(ErrorCode::kShape, "2d activation must be (C, H, W) or (B, C, H, W)");
  }
  if (activation.size(-1) == 0 || activation.size(-2) == 0) {
    Fail(ErrorCode::kShape, "empty spatial dimensions");
  }
  return activation.mean({-2, -1});
}

torch::Tensor ReduceChannelVar(const torch::Tensor& activation, BnKind kind) {
  if (kind == BnKind::k1d) {
    Fail(ErrorCode::kVarianceUndefined,
         "spatial variance is undefined for a BN1d input");
  }
  if (activation.dim() != 3 && activation.dim() != 4) {
    Fail(ErrorCode::kShape, "2d activation must be (C, H, W) or (B, C, H, W)");
  }
  if (activation.size(-1) == 0 || activation.size(-2) == 0) {
    Fail(ErrorCode::kShape, "empty spatial dimensions");
  }
  // E[(x - mean)^2] keeps the h*w == 1 case at exactly zero.
  auto centered = activation - activation.mean({-2, -1}, /*keepdim=*/true);
  return centered.square().mean({-2, -1});
}

torch::Tensor StatDistance(const torch::Tensor& reduced, const torch::Tensor& reference) {
  if (reduced.size(-1) != reference.size(-1) || reference.size(-1) < 1) {
    Fail(ErrorCode::kDimension,
         "length mismatch: " + std::to_string(reduced.size(-1)) + " vs " +
             std::to_string(reference.size(-1)));
  }
  return (reduced - reference).square().sum(-1) /
         static_cast<double>(reference.size(-1));
}

torch::Tensor FlipFusedDistance(const torch::Tensor& reduced,
                               const torch::Tensor& reduced_flipped,
                               const torch::Tensor& reference) {
  if (reduced.sizes() != reduced_flipped.sizes()) {
    Fail(ErrorCode::kDimension, "original and flipped features differ in shape");
  }
  return StatDistance((reduced + reduced_flipped) / 2.0, reference);
}

torch::Tensor DistanceFeatures(const CheckpointBundle& bundle,
                               const BnReferenceSet& refs,
                               const torch::Tensor& raw_images,
                               const VariantSpec& variant) {
  const auto layout = DistanceLayout(variant, bundle.backbone_spec());
  const bool flip = UsesFlip(variant.variant);
  auto x = Preprocess(bundle.preprocess(), raw_images);
  const int64_t batch = x.size(0);
  if (flip) x = torch::cat({x, HorizontalFlip(x)});
  ActivationTaps taps(variant.selection);
  IrSeNet backbone = bundle.backbone();
  backbone->forward(x, &taps);

  std::vector<torch::Tensor> columns;
  for (const auto& entry : layout) {
    const BnLayerRef& ref = refs.Find(entry.layer_id);
    const torch::Tensor& act = taps.captured().at(entry.layer_id);
    torch::Tensor reduced;
    torch::Tensor reference;
    if (entry.statistic == Statistic::kMean) {
      reduced = ReduceChannelMean(act, ref.kind);
      reference = ref.running_mean.to(act.scalar_type());
    } else {
      reduced = ReduceChannelVar(act, ref.kind);
      reference = ref.running_var.to(act.scalar_type());
    }
    if (flip) {
      columns.push_back(FlipFusedDistance(reduced.slice(0, 0, batch),
                                         reduced.slice(0, batch, 2 * batch), reference));
    } else {
      columns.push_back(StatDistance(reduced, reference));
    }
  }
  return torch::stack(columns, 1);
}

torch::Tensor DistanceFeaturesNoGrad(const CheckpointBundle& bundle,
                                     const BnReferenceSet& refs,
                                     const torch::Tensor& raw_images,
                                     const VariantSpec& variant) {
  torch::NoGradGuard no_grad;
  return MapChunks(raw_images, 128, [&](const torch::Tensor& chunk) {
    return DistanceFeatures(bundle, refs, chunk, variant);
  });
}

DistanceVector BuildDistanceVector(const CheckpointBundle& bundle,
                                   const BnReferenceSet& refs,
                                   const torch::Tensor& image,
                                   const VariantSpec& variant) {
  auto batch = image.dim() == 3 ? image.unsqueeze(0) : image;
  if (batch.dim() != 4 || batch.size(0) != 1) {
    Fail(ErrorCode::kShape, "expected a single (C, H, W) image");
  }
  auto values = DistanceFeaturesNoGrad(bundle, refs, batch, variant)
                    .to(torch::kFloat64)
                    .contiguous();
  DistanceVector d;
  d.values.assign(values.data_ptr<double>(), values.data_ptr<double>() + values.numel());
  d.layout = DistanceLayout(variant, bundle.backbone_spec());
  return d;
}

void WritePlotData(std::ostream& out, const torch::Tensor& distances,
                   std::span<const int> labels, std::span<const LayoutEntry> layout) {
  if (distances.dim() != 2 || distances.size(0) != static_cast<int64_t>(labels.size()) ||
      distances.size(1) != static_cast<int64_t>(layout.size())) {
    Fail(ErrorCode::kDimension, "plot data shape mismatch");
  }
  auto d = distances.to(torch::kFloat64).contiguous();
  const double* p = d.data_ptr<double>();
  out << "sample,label,layer_id,statistic,distance\n";
  out << std::setprecision(9);
  for (size_t i = 0; i < labels.size(); ++i) {
    for (size_t j = 0; j < layout.size(); ++j) {
      out << i << ',' << (labels[i] == 1 ? "member" : "non-member") << ','
          << layout[j].layer_id << ',' << StatisticName(layout[j].statistic) << ','
          << p[i * layout.size() + j] << '\n';
    }
  }
}

}  // namespace bnleak
