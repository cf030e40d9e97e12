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

#include "bnleak/bn_reference.h"

#include <algorithm>
#include <set>

#include "bnleak/error.h"

namespace bnleak {

BnReferenceSet::BnReferenceSet(std::vector<BnLayerRef> layers)
    : layers_(std::move(layers)) {
  if (layers_.empty()) Fail(ErrorCode::kSelection, "empty BN reference set");
  std::set<std::string> seen;
  for (const auto& layer : layers_) {
    if (!seen.insert(layer.layer_id).second) {
      Fail(ErrorCode::kSelection, "duplicate BN layer '" + layer.layer_id + "'");
    }
    if (layer.running_mean.numel() != layer.channels ||
        layer.running_var.numel() != layer.channels) {
      Fail(ErrorCode::kDimension, "statistics of '" + layer.layer_id +
                                      "' do not match its channel count");
    }
  }
}

const BnLayerRef& BnReferenceSet::Find(const std::string& layer_id) const {
  for (const auto& layer : layers_) {
    if (layer.layer_id == layer_id) return layer;
  }
  Fail(ErrorCode::kSelection, "layer '" + layer_id + "' not in reference set");
}

std::vector<std::string> BnReferenceSet::layer_ids() const {
  std::vector<std::string> ids;
  for (const auto& layer : layers_) ids.push_back(layer.layer_id);
  return ids;
}

NamedArrays BnReferenceSet::ExportArrays() const {
  NamedArrays arrays;
  for (const auto& layer : layers_) {
    arrays[layer.layer_id + ".running_mean"] = layer.running_mean;
    arrays[layer.layer_id + ".running_var"] = layer.running_var;
  }
  return arrays;
}

NamedArrays ActivationSet::ExportArrays() const {
  NamedArrays arrays;
  for (const auto& [id, activation] : by_layer) arrays[id] = activation;
  return arrays;
}

std::vector<BnLayerInfo> ResolveSelection(const BackboneSpec& spec,
                                          std::span<const std::string> selection) {
  if (selection.empty()) Fail(ErrorCode::kSelection, "empty layer selection");
  const auto catalog = spec.BnLayerCatalog();
  std::vector<BnLayerInfo> resolved;
  std::set<std::string> seen;
  for (const auto& id : selection) {
    auto it = std::find_if(catalog.begin(), catalog.end(),
                           [&](const BnLayerInfo& info) { return info.id == id; });
    if (it == catalog.end()) {
      Fail(ErrorCode::kSelection, "unknown BN layer '" + id + "'");
    }
    if (!seen.insert(id).second) {
      Fail(ErrorCode::kSelection, "layer '" + id + "' selected twice");
    }
    resolved.push_back(*it);
  }
  return resolved;
}

BnReferenceSet ExtractBnReferences(const CheckpointBundle& bundle,
                                   std::span<const std::string> selection) {
  const auto resolved = ResolveSelection(bundle.backbone_spec(), selection);
  IrSeNet backbone = bundle.backbone();
  std::vector<BnLayerRef> layers;
  for (const auto& info : resolved) {
    auto [mean, var] = backbone->RunningStats(info.id);
    layers.push_back({info.id, info.kind, info.channels,
                      mean.detach().clone(), var.detach().clone()});
  }
  return BnReferenceSet(std::move(layers));
}

ActivationSet CapturePreBnActivations(const CheckpointBundle& bundle,
                                      const torch::Tensor& raw_images,
                                      std::span<const std::string> selection) {
  ResolveSelection(bundle.backbone_spec(), selection);
  torch::NoGradGuard no_grad;
  ActivationTaps taps({selection.begin(), selection.end()});
  IrSeNet backbone = bundle.backbone();
  backbone->forward(Preprocess(bundle.preprocess(), raw_images), &taps);
  ActivationSet set;
  set.order.assign(selection.begin(), selection.end());
  set.by_layer = taps.captured();
  return set;
}

}  // namespace bnleak
