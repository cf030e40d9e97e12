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

#include "bnleak/backbone.h"

#include <algorithm>
#include <utility>

#include "bnleak/error.h"

namespace bnleak {

namespace nn = torch::nn;

namespace {

nn::Conv2d Conv(int64_t in, int64_t out, int64_t kernel, int64_t stride) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel)
                        .stride(stride)
                        .padding(kernel / 2)
                        .bias(false));
}

torch::Tensor TappedBn(nn::BatchNorm2d& bn, const std::string& id,
                       const torch::Tensor& x, ActivationTaps* taps) {
  if (taps != nullptr && taps->Wants(id)) taps->Record(id, x);
  return bn(x);
}

std::string UnitId(size_t stage, int64_t unit) {
  return "body" + std::to_string(stage + 1) + ".unit" + std::to_string(unit);
}

}  // namespace

void BackboneSpec::Validate() const {
  if (architecture_id != "ir-se-toy") {
    Fail(ErrorCode::kConfig, "unknown architecture '" + architecture_id + "'");
  }
  if (stage_channels.size() != 4 || stage_units.size() != 4 ||
      stage_strides.size() != 4) {
    Fail(ErrorCode::kConfig, "the backbone has exactly 4 sub-blocks");
  }
  auto positive = [](int64_t v) { return v > 0; };
  if (stem_channels <= 0 || embedding_dim <= 0 || se_reduction <= 0 ||
      !std::all_of(stage_channels.begin(), stage_channels.end(), positive) ||
      !std::all_of(stage_units.begin(), stage_units.end(), positive) ||
      !std::all_of(stage_strides.begin(), stage_strides.end(), positive)) {
    Fail(ErrorCode::kConfig, "backbone sizes must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    Fail(ErrorCode::kConfig, "dropout must be in [0, 1)");
  }
  auto [h, w] = OutputSpatial();
  if (h <= 0 || w <= 0) {
    Fail(ErrorCode::kConfig, "input too small for the configured strides");
  }
}

std::pair<int64_t, int64_t> BackboneSpec::OutputSpatial() const {
  int64_t h = input.height;
  int64_t w = input.width;
  for (size_t s = 0; s < stage_strides.size(); ++s) {
    // 3x3 conv with padding 1: out = floor((in - 1) / stride) + 1.
    h = (h - 1) / stage_strides[s] + 1;
    w = (w - 1) / stage_strides[s] + 1;
  }
  return {h, w};
}

std::vector<BnLayerInfo> BackboneSpec::BnLayerCatalog() const {
  std::vector<BnLayerInfo> catalog;
  catalog.push_back({"input.bn", BnKind::k2d, stem_channels});
  int64_t in = stem_channels;
  for (size_t s = 0; s < stage_channels.size(); ++s) {
    for (int64_t u = 0; u < stage_units[s]; ++u) {
      const std::string id = UnitId(s, u);
      const int64_t depth = stage_channels[s];
      if (in != depth) {
        catalog.push_back({id + ".shortcut_bn", BnKind::k2d, depth});
      }
      catalog.push_back({id + ".bn_in", BnKind::k2d, in});
      catalog.push_back({id + ".bn_out", BnKind::k2d, depth});
      in = depth;
    }
  }
  catalog.push_back({"output.bn2d", BnKind::k2d, in});
  catalog.push_back({"output.bn1d", BnKind::k1d, embedding_dim});
  return catalog;
}

std::vector<std::string> BackboneSpec::DefaultBnSelection() const {
  std::vector<std::string> selection = {"input.bn"};
  for (size_t s = 0; s < stage_units.size(); ++s) {
    selection.push_back(UnitId(s, stage_units[s] - 1) + ".bn_out");
  }
  selection.push_back("output.bn2d");
  selection.push_back("output.bn1d");
  return selection;
}

ActivationTaps::ActivationTaps(std::vector<std::string> selection)
    : selection_(std::move(selection)) {}

bool ActivationTaps::Wants(const std::string& layer_id) const {
  return std::find(selection_.begin(), selection_.end(), layer_id) !=
         selection_.end();
}

void ActivationTaps::Record(const std::string& layer_id,
                            const torch::Tensor& input) {
  captured_[layer_id] = input;
}

SqueezeExciteImpl::SqueezeExciteImpl(int64_t channels, int64_t reduction)
    : channels_(channels), reduction_(reduction) {
  reset();
}

void SqueezeExciteImpl::reset() {
  const int64_t hidden = std::max<int64_t>(1, channels_ / reduction_);
  fc1_ = register_module(
      "fc1", nn::Conv2d(nn::Conv2dOptions(channels_, hidden, 1).bias(false)));
  fc2_ = register_module(
      "fc2", nn::Conv2d(nn::Conv2dOptions(hidden, channels_, 1).bias(false)));
}

torch::Tensor SqueezeExciteImpl::forward(const torch::Tensor& x) {
  auto s = x.mean({2, 3}, /*keepdim=*/true);
  s = torch::sigmoid(fc2_(torch::relu(fc1_(s))));
  return x * s;
}

IrSeUnitImpl::IrSeUnitImpl(std::string id, int64_t in_channels, int64_t depth,
                           int64_t stride, int64_t se_reduction)
    : id_(std::move(id)),
      in_channels_(in_channels),
      depth_(depth),
      stride_(stride),
      se_reduction_(se_reduction) {
  reset();
}

void IrSeUnitImpl::reset() {
  if (has_shortcut_conv()) {
    shortcut_conv_ =
        register_module("shortcut_conv", Conv(in_channels_, depth_, 1, stride_));
    shortcut_bn_ = register_module("shortcut_bn", nn::BatchNorm2d(depth_));
  }
  bn_in_ = register_module("bn_in", nn::BatchNorm2d(in_channels_));
  conv1_ = register_module("conv1", Conv(in_channels_, depth_, 3, 1));
  prelu_ = register_module(
      "prelu", nn::PReLU(nn::PReLUOptions().num_parameters(depth_)));
  conv2_ = register_module("conv2", Conv(depth_, depth_, 3, stride_));
  bn_out_ = register_module("bn_out", nn::BatchNorm2d(depth_));
  se_ = register_module("se", SqueezeExcite(depth_, se_reduction_));
}

torch::Tensor IrSeUnitImpl::forward(const torch::Tensor& x,
                                    ActivationTaps* taps) {
  torch::Tensor shortcut;
  if (has_shortcut_conv()) {
    shortcut = TappedBn(shortcut_bn_, id_ + ".shortcut_bn", shortcut_conv_(x),
                        taps);
  } else if (stride_ != 1) {
    shortcut = torch::max_pool2d(x, /*kernel_size=*/1, /*stride=*/stride_);
  } else {
    shortcut = x;
  }
  auto r = TappedBn(bn_in_, id_ + ".bn_in", x, taps);
  r = prelu_(conv1_(r));
  r = TappedBn(bn_out_, id_ + ".bn_out", conv2_(r), taps);
  return se_(r) + shortcut;
}

IrSeNetImpl::IrSeNetImpl(BackboneSpec spec) : spec_(std::move(spec)) {
  spec_.Validate();
  reset();
}

void IrSeNetImpl::reset() {
  units_.clear();
  input_conv_ = register_module(
      "input_conv", Conv(spec_.input.channels, spec_.stem_channels, 3, 1));
  input_bn_ = register_module("input_bn", nn::BatchNorm2d(spec_.stem_channels));
  input_prelu_ = register_module(
      "input_prelu",
      nn::PReLU(nn::PReLUOptions().num_parameters(spec_.stem_channels)));
  int64_t in = spec_.stem_channels;
  for (size_t s = 0; s < spec_.stage_channels.size(); ++s) {
    for (int64_t u = 0; u < spec_.stage_units[s]; ++u) {
      const int64_t stride = u == 0 ? spec_.stage_strides[s] : 1;
      const std::string id = UnitId(s, u);
      std::string name = id;
      std::replace(name.begin(), name.end(), '.', '_');
      units_.push_back(register_module(
          name, IrSeUnit(id, in, spec_.stage_channels[s], stride,
                         spec_.se_reduction)));
      in = spec_.stage_channels[s];
    }
  }
  auto [h, w] = spec_.OutputSpatial();
  output_bn2d_ = register_module("output_bn2d", nn::BatchNorm2d(in));
  dropout_ = register_module("dropout", nn::Dropout(spec_.dropout));
  output_linear_ = register_module(
      "output_linear", nn::Linear(in * h * w, spec_.embedding_dim));
  output_bn1d_ =
      register_module("output_bn1d", nn::BatchNorm1d(spec_.embedding_dim));
}

torch::Tensor IrSeNetImpl::forward(const torch::Tensor& x,
                                   ActivationTaps* taps) {
  auto h = input_conv_(x);
  h = input_prelu_(TappedBn(input_bn_, "input.bn", h, taps));
  for (auto& unit : units_) h = unit->forward(h, taps);
  h = TappedBn(output_bn2d_, "output.bn2d", h, taps);
  h = dropout_(h).flatten(1);
  h = output_linear_(h);
  if (taps != nullptr && taps->Wants("output.bn1d")) {
    taps->Record("output.bn1d", h);
  }
  return output_bn1d_(h);
}

std::pair<torch::Tensor, torch::Tensor> IrSeNetImpl::RunningStats(
    const std::string& layer_id) const {
  auto stats = [](const auto& bn) {
    return std::make_pair(bn->running_mean, bn->running_var);
  };
  if (layer_id == "input.bn") return stats(input_bn_);
  if (layer_id == "output.bn2d") return stats(output_bn2d_);
  if (layer_id == "output.bn1d") return stats(output_bn1d_);
  for (const auto& unit : units_) {
    const std::string& prefix = unit->id();
    if (layer_id.rfind(prefix + ".", 0) != 0) continue;
    const std::string suffix = layer_id.substr(prefix.size() + 1);
    if (suffix == "bn_in") return stats(unit->bn_in());
    if (suffix == "bn_out") return stats(unit->bn_out());
    if (suffix == "shortcut_bn" && unit->has_shortcut_conv()) {
      return stats(unit->shortcut_bn());
    }
  }
  Fail(ErrorCode::kSelection, "unknown BN layer '" + layer_id + "'");
}

}  // namespace bnleak
