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


#include "bnleak/generator.h"

#include <cmath>
#include <fstream>

#include "bnleak/array_store.h"
#include "bnleak/error.h"

namespace bnleak {

namespace nn = torch::nn;

void GeneratorSpec::Validate() const {
  if (latent_dim < 1) Fail(ErrorCode::kConfig, "latent_dim must be >= 1");
  if (base_channels < 4 || base_channels % 4 != 0) {
    Fail(ErrorCode::kConfig, "base_channels must be a positive multiple of 4");
  }
  if (base_size < 1) Fail(ErrorCode::kConfig, "base_size must be >= 1");
  if (out_channels < 1) Fail(ErrorCode::kConfig, "out_channels must be >= 1");
}

void GeneratorTrainConfig::Validate() const {
  if (epochs < 1) Fail(ErrorCode::kConfig, "generator epochs must be >= 1");
  if (batch_size < 1) Fail(ErrorCode::kConfig, "generator batch_size must be >= 1");
  if (!(learning_rate > 0) || !(code_learning_rate > 0)) {
    Fail(ErrorCode::kConfig, "generator learning rates must be positive");
  }
  if (code_penalty < 0) Fail(ErrorCode::kConfig, "code_penalty must be >= 0");
}

SynthesisNetImpl::SynthesisNetImpl(GeneratorSpec spec) : spec_(std::move(spec)) {
  spec_.Validate();
  const int64_t c = spec_.base_channels;
  project_ = register_module(
      "project", nn::Linear(spec_.latent_dim, c * spec_.base_size * spec_.base_size));
  auto up = [] {
    return nn::Upsample(
        nn::UpsampleOptions().scale_factor(std::vector<double>{2, 2}).mode(torch::kNearest));
  };
  auto conv = [](int64_t in, int64_t out) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1));
  };
  auto act = [] { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); };
  body_ = register_module(
      "body", nn::Sequential(up(), conv(c, c / 2), act(), up(), conv(c / 2, c / 4), act(),
                             up(), conv(c / 4, c / 4), act(),
                             conv(c / 4, spec_.out_channels), nn::Sigmoid()));
}

torch::Tensor SynthesisNetImpl::forward(const torch::Tensor& w) {
  auto h = torch::leaky_relu(project_->forward(w), 0.2);
  h = h.view({w.size(0), spec_.base_channels, spec_.base_size, spec_.base_size});
  return body_->forward(h);
}

Generator::Generator(GeneratorSpec spec, SynthesisNet synthesis, torch::Tensor mapping_mean,
                     torch::Tensor mapping_chol)
    : spec_(std::move(spec)),
      synthesis_(std::move(synthesis)),
      mapping_mean_(std::move(mapping_mean)),
      mapping_chol_(std::move(mapping_chol)) {
  const int64_t d = spec_.latent_dim;
  if (mapping_mean_.sizes() != torch::IntArrayRef{d} ||
      mapping_chol_.sizes() != torch::IntArrayRef{d, d}) {
    Fail(ErrorCode::kShape, "mapping parameters do not match latent_dim");
  }
  synthesis_->eval();
  for (auto& p : synthesis_->parameters()) p.set_requires_grad(false);
}

std::vector<int64_t> Generator::output_shape() const {
  return {spec_.out_channels, spec_.output_size(), spec_.output_size()};
}

torch::Tensor Generator::Map(const torch::Tensor& z) const {
  if (z.dim() != 2 || z.size(1) != spec_.latent_dim) {
    Fail(ErrorCode::kShape, "latents must be (B, " + std::to_string(spec_.latent_dim) + ")");
  }
  return mapping_mean_ + torch::matmul(z.to(mapping_mean_.scalar_type()), mapping_chol_.t());
}

torch::Tensor Generator::Synthesize(const torch::Tensor& w) const {
  if (w.dim() != 2 || w.size(1) != spec_.latent_dim) {
    Fail(ErrorCode::kShape, "w must be (B, " + std::to_string(spec_.latent_dim) + ")");
  }
  SynthesisNet net = synthesis_;
  return net->forward(w);
}

Generator Generator::To(torch::ScalarType dtype) const {
  SynthesisNet net(spec_);
  LoadModuleArrays(net, ModuleArrays(synthesis_, ""), "");
  net->to(dtype);
  Generator out(spec_, net, mapping_mean_.to(dtype), mapping_chol_.to(dtype));
  out.final_reconstruction_loss = final_reconstruction_loss;
  out.seed = seed;
  return out;
}

NamedArrays Generator::ExportArrays() const {
  NamedArrays arrays = ModuleArrays(synthesis_, "synthesis.");
  arrays["mapping.mean"] = mapping_mean_;
  arrays["mapping.chol"] = mapping_chol_;
  return arrays;
}

nlohmann::json Generator::Manifest() const {
  return {{"format", "bnleak-generator/1"},
          {"spec", ToJson(spec_)},
          {"seed", seed},
          {"final_reconstruction_loss", final_reconstruction_loss},
          {"fingerprint", Fingerprint(ExportArrays())}};
}

Generator TrainGloGenerator(const torch::Tensor& images, const GeneratorSpec& spec,
                            const GeneratorTrainConfig& config) {
  spec.Validate();
  config.Validate();
  const int64_t side = spec.output_size();
  if (images.dim() != 4 || images.size(0) < 2 || images.size(1) != spec.out_channels ||
      images.size(2) != side || images.size(3) != side) {
    Fail(ErrorCode::kShape, "generator training images must be (N, " +
                                std::to_string(spec.out_channels) + ", " +
                                std::to_string(side) + ", " + std::to_string(side) + ")");
  }
  torch::manual_seed(config.seed);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed);
  const int64_t n = images.size(0);
  const int64_t d = spec.latent_dim;
  auto x = images.to(torch::kFloat32);

  SynthesisNet net(spec);
  net->train();
  auto codes = (torch::randn({n, d}, gen) * 0.5).set_requires_grad(true);
  torch::optim::Adam net_opt(net->parameters(),
                             torch::optim::AdamOptions(config.learning_rate));
  torch::optim::Adam code_opt(std::vector<torch::Tensor>{codes},
                              torch::optim::AdamOptions(config.code_learning_rate));

  double epoch_loss = 0.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto order = torch::randperm(n, gen);
    epoch_loss = 0.0;
    for (int64_t start = 0; start < n; start += config.batch_size) {
      auto idx = order.slice(0, start, std::min(n, start + config.batch_size));
      auto code = codes.index_select(0, idx);
      auto recon = net->forward(code);
      auto loss = torch::mse_loss(recon, x.index_select(0, idx)) +
                  config.code_penalty * code.square().sum(1).mean();
      net_opt.zero_grad();
      code_opt.zero_grad();
      loss.backward();
      net_opt.step();
      code_opt.step();
      const double value = loss.item<double>();
      if (!std::isfinite(value)) {
        Fail(ErrorCode::kTrainingDiverged, "generator loss is not finite");
      }
      epoch_loss += value * static_cast<double>(idx.size(0));
    }
    epoch_loss /= static_cast<double>(n);
  }

  auto fitted = codes.detach().to(torch::kFloat64);
  auto mean = fitted.mean(0);
  auto centered = fitted - mean;
  auto cov = torch::matmul(centered.t(), centered) / static_cast<double>(n - 1) +
             1e-4 * torch::eye(d, torch::kFloat64);
  auto chol = torch::linalg_cholesky(cov);
  Generator generator(spec, net, mean.to(torch::kFloat32), chol.to(torch::kFloat32));
  generator.final_reconstruction_loss = epoch_loss;
  generator.seed = config.seed;
  return generator;
}

void SaveGenerator(const Generator& generator, const std::filesystem::path& stem) {
  auto arrays_path = stem;
  arrays_path += ".bnla";
  auto json_path = stem;
  json_path += ".json";
  SaveArrays(arrays_path, generator.ExportArrays());
  std::ofstream out(json_path);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + json_path.string());
  out << generator.Manifest().dump(2) << '\n';
}

Generator LoadGenerator(const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  std::ifstream in(json_path);
  if (!in) {
    Fail(ErrorCode::kArtifactMissing, "missing generator checkpoint " + json_path.string());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kIo, "bad generator manifest: " + std::string(e.what()));
  }
  auto arrays_path = stem;
  arrays_path += ".bnla";
  const NamedArrays arrays = LoadArrays(arrays_path);
  GeneratorSpec spec = GeneratorSpecFromJson(j.at("spec"));
  SynthesisNet net(spec);
  LoadModuleArrays(net, arrays, "synthesis.");
  Generator generator(spec, net, RequireArray(arrays, "mapping.mean").clone(),
                      RequireArray(arrays, "mapping.chol").clone());
  generator.seed = j.value("seed", uint64_t{0});
  generator.final_reconstruction_loss = j.value("final_reconstruction_loss", 0.0);
  return generator;
}

nlohmann::json ToJson(const GeneratorSpec& spec) {
  return {{"latent_dim", spec.latent_dim},
          {"base_channels", spec.base_channels},
          {"base_size", spec.base_size},
          {"out_channels", spec.out_channels}};
}

GeneratorSpec GeneratorSpecFromJson(const nlohmann::json& j) {
  GeneratorSpec spec;
  spec.latent_dim = j.value("latent_dim", spec.latent_dim);
  spec.base_channels = j.value("base_channels", spec.base_channels);
  spec.base_size = j.value("base_size", spec.base_size);
  spec.out_channels = j.value("out_channels", spec.out_channels);
  spec.Validate();
  return spec;
}

nlohmann::json ToJson(const GeneratorTrainConfig& config) {
  return {{"seed", config.seed},
          {"epochs", config.epochs},
          {"batch_size", config.batch_size},
          {"learning_rate", config.learning_rate},
          {"code_learning_rate", config.code_learning_rate},
          {"code_penalty", config.code_penalty}};
}

GeneratorTrainConfig GeneratorTrainConfigFromJson(const nlohmann::json& j) {
  GeneratorTrainConfig config;
  config.seed = j.value("seed", config.seed);
  config.epochs = j.value("epochs", config.epochs);
  config.batch_size = j.value("batch_size", config.batch_size);
  config.learning_rate = j.value("learning_rate", config.learning_rate);
  config.code_learning_rate = j.value("code_learning_rate", config.code_learning_rate);
  config.code_penalty = j.value("code_penalty", config.code_penalty);
  config.Validate();
  return config;
}

}  // namespace bnleak
