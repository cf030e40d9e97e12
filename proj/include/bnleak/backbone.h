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

#ifndef BNLEAK_BACKBONE_H_
#define BNLEAK_BACKBONE_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "bnleak/preprocess.h"

namespace bnleak {

enum class BnKind { k2d, k1d };

struct BnLayerInfo {
  std::string id;
  BnKind kind;
  int64_t channels;
};

// A small IR-SE style residual network: an input layer (conv, BN2d, PReLU),
// four sub-blocks of bottleneck units with squeeze-excitation, and an output
// layer (BN2d, dropout, flatten, linear, BN1d). The embedding is the BN1d
// output.
struct BackboneSpec {
  std::string architecture_id = "ir-se-toy";
  int64_t stem_channels = 16;
  std::vector<int64_t> stage_channels = {16, 32, 48, 64};
  std::vector<int64_t> stage_units = {1, 1, 1, 1};
  std::vector<int64_t> stage_strides = {2, 2, 2, 1};
  int64_t se_reduction = 4;
  int64_t embedding_dim = 64;
  double dropout = 0.0;
  InputShape input;

  void Validate() const;

  // Every BN layer in forward order. Ids: "input.bn",
  // "body<k>.unit<u>.{shortcut_bn,bn_in,bn_out}", "output.bn2d",
  // "output.bn1d".
  std::vector<BnLayerInfo> BnLayerCatalog() const;

  // Input BN, the last BN of each sub-block, the output BN2d and BN1d.
  std::vector<std::string> DefaultBnSelection() const;

  // Spatial size of the final feature map.
  std::pair<int64_t, int64_t> OutputSpatial() const;
};

// Records the input of selected BN layers during a forward pass. Recording is
// a read: the forward computation is unchanged whether or not taps are set.
class ActivationTaps {
 public:
  explicit ActivationTaps(std::vector<std::string> selection);

  bool Wants(const std::string& layer_id) const;
  void Record(const std::string& layer_id, const torch::Tensor& input);

  const std::vector<std::string>& selection() const { return selection_; }
  const std::map<std::string, torch::Tensor>& captured() const {
    return captured_;
  }

 private:
  std::vector<std::string> selection_;
  std::map<std::string, torch::Tensor> captured_;
};

class SqueezeExciteImpl : public torch::nn::Cloneable<SqueezeExciteImpl> {
 public:
  SqueezeExciteImpl(int64_t channels, int64_t reduction);
  void reset() override;
  torch::Tensor forward(const torch::Tensor& x);

 private:
  int64_t channels_;
  int64_t reduction_;
  torch::nn::Conv2d fc1_{nullptr};
  torch::nn::Conv2d fc2_{nullptr};
};
TORCH_MODULE(SqueezeExcite);

class IrSeUnitImpl : public torch::nn::Cloneable<IrSeUnitImpl> {
 public:
  IrSeUnitImpl(std::string id, int64_t in_channels, int64_t depth,
               int64_t stride, int64_t se_reduction);
  void reset() override;
  torch::Tensor forward(const torch::Tensor& x, ActivationTaps* taps);

  const std::string& id() const { return id_; }
  bool has_shortcut_conv() const { return in_channels_ != depth_; }
  const torch::nn::BatchNorm2d& bn_in() const { return bn_in_; }
  const torch::nn::BatchNorm2d& bn_out() const { return bn_out_; }
  const torch::nn::BatchNorm2d& shortcut_bn() const { return shortcut_bn_; }

 private:
  std::string id_;
  int64_t in_channels_;
  int64_t depth_;
  int64_t stride_;
  int64_t se_reduction_;
  torch::nn::Conv2d shortcut_conv_{nullptr};
  torch::nn::BatchNorm2d shortcut_bn_{nullptr};
  torch::nn::BatchNorm2d bn_in_{nullptr};
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::PReLU prelu_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
  torch::nn::BatchNorm2d bn_out_{nullptr};
  SqueezeExcite se_{nullptr};
};
TORCH_MODULE(IrSeUnit);

class IrSeNetImpl : public torch::nn::Cloneable<IrSeNetImpl> {
 public:
  explicit IrSeNetImpl(BackboneSpec spec);
  void reset() override;

  // `x` is a preprocessed (B, C, H, W) batch; returns (B, embedding_dim).
  torch::Tensor forward(const torch::Tensor& x, ActivationTaps* taps = nullptr);

  const BackboneSpec& spec() const { return spec_; }

  // Live (not copied) running statistics of a catalog layer.
  std::pair<torch::Tensor, torch::Tensor> RunningStats(
      const std::string& layer_id) const;

  // Input stem, exposed so tests can recompute the first layer by hand.
  torch::nn::Conv2d& input_conv() { return input_conv_; }

 private:
  BackboneSpec spec_;
  torch::nn::Conv2d input_conv_{nullptr};
  torch::nn::BatchNorm2d input_bn_{nullptr};
  torch::nn::PReLU input_prelu_{nullptr};
  std::vector<IrSeUnit> units_;
  torch::nn::BatchNorm2d output_bn2d_{nullptr};
  torch::nn::Dropout dropout_{nullptr};
  torch::nn::Linear output_linear_{nullptr};
  torch::nn::BatchNorm1d output_bn1d_{nullptr};
};
TORCH_MODULE(IrSeNet);

}  // namespace bnleak

#endif  // BNLEAK_BACKBONE_H_
