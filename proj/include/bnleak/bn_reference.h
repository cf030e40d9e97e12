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

#ifndef BNLEAK_BN_REFERENCE_H_
#define BNLEAK_BN_REFERENCE_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "bnleak/array_store.h"
#include "bnleak/backbone.h"
#include "bnleak/target_zoo.h"

namespace bnleak {

// Running statistics of one BN layer, copied out of a checkpoint.
struct BnLayerRef {
  std::string layer_id;
  BnKind kind = BnKind::k2d;
  int64_t channels = 0;
  torch::Tensor running_mean;  // (channels,)
  torch::Tensor running_var;   // (channels,)
};

// Ordered per-layer references u = {u_1, ..., u_n} in forward order of the
// selection.
class BnReferenceSet {
 public:
  explicit BnReferenceSet(std::vector<BnLayerRef> layers);

  size_t size() const { return layers_.size(); }
  const std::vector<BnLayerRef>& layers() const { return layers_; }
  const BnLayerRef& at(size_t i) const { return layers_.at(i); }
  const BnLayerRef& Find(const std::string& layer_id) const;
  std::vector<std::string> layer_ids() const;

  NamedArrays ExportArrays() const;

 private:
  std::vector<BnLayerRef> layers_;
};

// Pre-BN activations keyed by layer id; `order` is the selection order.
struct ActivationSet {
  std::vector<std::string> order;
  std::map<std::string, torch::Tensor> by_layer;

  NamedArrays ExportArrays() const;
};

// Throws kSelection unless every id is in the backbone's BN catalog and ids
// are unique. Returns the catalog entries in selection order.
std::vector<BnLayerInfo> ResolveSelection(const BackboneSpec& spec,
                                          std::span<const std::string> selection);

BnReferenceSet ExtractBnReferences(const CheckpointBundle& bundle,
                                   std::span<const std::string> selection);

// Runs one inference-mode forward pass on raw images and returns the inputs
// of the selected BN layers. Gradients are not tracked.
ActivationSet CapturePreBnActivations(const CheckpointBundle& bundle,
                                      const torch::Tensor& raw_images,
                                      std::span<const std::string> selection);

}  // namespace bnleak

#endif  // BNLEAK_BN_REFERENCE_H_
