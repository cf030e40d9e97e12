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


#include "bnleak/inversion_attack.h"

#include <algorithm>
#include <cmath>

#include "bnleak/error.h"
#include "bnleak/preprocess.h"

namespace bnleak {
namespace {

uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double UnitUniform(uint64_t seed, int64_t candidate, int64_t iteration, size_t op) {
  uint64_t h = SplitMix64(seed);
  h = SplitMix64(h ^ static_cast<uint64_t>(candidate));
  h = SplitMix64(h ^ static_cast<uint64_t>(iteration));
  h = SplitMix64(h ^ static_cast<uint64_t>(op));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace

MembershipScorer ScorerFor(const MembershipPipeline& pipeline) {
  return [pipeline](const torch::Tensor& images) { return pipeline.Score(images); };
}

std::string AugmentationName(AugmentationKind kind) {
  switch (kind) {
    case AugmentationKind::kIdentity: return "identity";
    case AugmentationKind::kHorizontalFlip: return "horizontal_flip";
    case AugmentationKind::kCenterCropResize: return "center_crop_resize";
    case AugmentationKind::kBrightness: return "brightness";
  }
  return "unknown";
}

AugmentationKind ParseAugmentation(const std::string& name) {
  for (auto kind : {AugmentationKind::kIdentity, AugmentationKind::kHorizontalFlip,
                    AugmentationKind::kCenterCropResize, AugmentationKind::kBrightness}) {
    if (AugmentationName(kind) == name) return kind;
  }
  Fail(ErrorCode::kConfig, "unknown augmentation '" + name + "'");
}

AugmentationSuite AugmentationSuite::Default(uint64_t seed) {
  return {{{AugmentationKind::kHorizontalFlip, 0.0},
           {AugmentationKind::kCenterCropResize, 0.9},
           {AugmentationKind::kBrightness, 0.1}},
          seed};
}

torch::Tensor AugmentationSuite::Apply(size_t k, const torch::Tensor& images,
                                       int64_t candidate, int64_t iteration) const {
  const Augmentation& op = ops.at(k);
  switch (op.kind) {
    case AugmentationKind::kIdentity:
      return images;
    case AugmentationKind::kHorizontalFlip:
      return HorizontalFlip(images);
    case AugmentationKind::kCenterCropResize: {
      const int64_t h = images.size(-2);
      const int64_t w = images.size(-1);
      const int64_t ch = std::max<int64_t>(1, std::llround(op.amount * static_cast<double>(h)));
      const int64_t cw = std::max<int64_t>(1, std::llround(op.amount * static_cast<double>(w)));
      const int64_t top = (h - ch) / 2;
      const int64_t left = (w - cw) / 2;
      auto crop = images.slice(-2, top, top + ch).slice(-1, left, left + cw);
      return ResizeBilinear(crop, h, w);
    }
    case AugmentationKind::kBrightness: {
      const double u = UnitUniform(seed, candidate, iteration, k);
      const double factor = 1.0 + op.amount * (2.0 * u - 1.0);
      return (images * factor).clamp(0.0, 1.0);
    }
  }
  return images;
}

torch::Tensor AveragedMembershipProbability(const torch::Tensor& images,
                                            const AugmentationSuite& suite,
                                            const MembershipScorer& scorer,
                                            int64_t candidate, int64_t iteration) {
  std::vector<torch::Tensor> views = {images};
  for (size_t k = 0; k < suite.size(); ++k) {
    views.push_back(suite.Apply(k, images, candidate, iteration));
  }
  auto scores = scorer(torch::cat(views));
  return scores.reshape({static_cast<int64_t>(views.size()), images.size(0)}).mean(0);
}

torch::Tensor SampleInitialLatents(int64_t n, int64_t dim, uint64_t seed) {
  if (n < 10) {
    Fail(ErrorCode::kSelectionDegenerate,
         "N = " + std::to_string(n) + " keeps no candidates; need N >= 10");
  }
  if (dim < 1) Fail(ErrorCode::kInvalidArgument, "latent dim must be >= 1");
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::randn({n, dim}, gen);
}

void CheckResizeContract(const Generator& generator, const PreprocessConfig& preprocess) {
  const auto shape = generator.output_shape();
  const auto& in = preprocess.input;
  if (shape[0] != in.channels) {
    Fail(ErrorCode::kResizeContract,
         "generator emits " + std::to_string(shape[0]) + " channels, target expects " +
             std::to_string(in.channels));
  }
  if (shape[1] * in.width != shape[2] * in.height) {
    Fail(ErrorCode::kResizeContract, "generator and target aspect ratios differ");
  }
}

CandidateSelection SelectCandidates(const torch::Tensor& z, const Generator& generator,
                                    const MembershipScorer& scorer) {
  const int64_t n = z.size(0);
  const int64_t keep = n / 10;
  if (keep < 1) {
    Fail(ErrorCode::kSelectionDegenerate, "N = " + std::to_string(n) + " keeps no candidates");
  }
  CandidateSelection selection;
  {
    torch::NoGradGuard no_grad;
    selection.scores = MapChunks(z, 100, [&](const torch::Tensor& chunk) {
                         return scorer(generator.Synthesize(generator.Map(chunk)));
                       }).to(torch::kFloat64);
  }
  auto scores = selection.scores.contiguous();
  const double* s = scores.data_ptr<double>();
  std::vector<int64_t> order(n);
  for (int64_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int64_t a, int64_t b) { return s[a] > s[b]; });
  selection.kept.assign(order.begin(), order.begin() + keep);
  selection.discarded.assign(order.begin() + keep, order.end());
  torch::NoGradGuard no_grad;
  selection.w = generator.Map(z.index_select(0, torch::tensor(selection.kept)));
  return selection;
}

OptimizedCandidate OptimizeCandidate(const torch::Tensor& w0, int iterations, double step,
                                     const AugmentationSuite& suite,
                                     const Generator& generator,
                                     const MembershipScorer& scorer, int64_t candidate) {
  if (iterations < 0) Fail(ErrorCode::kInvalidArgument, "M must be >= 0");
  OptimizedCandidate out;
  out.w_initial = w0.detach().reshape({-1}).clone();
  auto w = out.w_initial.unsqueeze(0).clone().set_requires_grad(true);
  for (int j = 0;; ++j) {
    auto image = generator.Synthesize(w);
    if (j == 0) out.image_initial = image.detach()[0].clone();
    auto p = AveragedMembershipProbability(image, suite, scorer, candidate, j);
    out.prob_trace.push_back(p.item<double>());
    if (j == iterations) {
      out.image = image.detach()[0].clone();
      break;
    }
    auto loss = -torch::log(p.clamp_min(1e-12)).sum();
    auto grad = torch::autograd::grad({loss}, {w})[0];
    if (!torch::isfinite(grad).all().item<bool>()) {
      Fail(ErrorCode::kDivergedCandidate,
           "non-finite gradient for candidate " + std::to_string(candidate) +
               " at step " + std::to_string(j));
    }
    w = (w.detach() - step * grad).set_requires_grad(true);
  }
  out.w = w.detach()[0].clone();
  return out;
}

void InversionConfig::Validate() const {
  if (n < 10) {
    Fail(ErrorCode::kSelectionDegenerate, "N must be >= 10, got " + std::to_string(n));
  }
  if (iterations < 0) Fail(ErrorCode::kConfig, "M must be >= 0");
  if (!(step > 0)) Fail(ErrorCode::kConfig, "inversion step must be positive");
}

InversionResult RunInversion(const Generator& generator, const MembershipScorer& scorer,
                             const InversionConfig& config) {
  config.Validate();
  InversionResult result;
  result.z = SampleInitialLatents(config.n, generator.latent_dim(), config.seed);
  result.selection = SelectCandidates(result.z, generator, scorer);
  for (size_t i = 0; i < result.selection.kept.size(); ++i) {
    const int64_t source = result.selection.kept[i];
    try {
      auto candidate = OptimizeCandidate(result.selection.w[i], config.iterations,
                                         config.step, config.suite, generator, scorer,
                                         static_cast<int64_t>(i));
      candidate.source_index = source;
      result.q.push_back(std::move(candidate));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDivergedCandidate) throw;
      result.diverged.push_back(source);
      result.log.push_back(std::string("dropped candidate: ") + e.what());
    }
  }
  if (result.q.empty()) Fail(ErrorCode::kFatal, "every candidate diverged");
  return result;
}

nlohmann::json ToJson(const AugmentationSuite& suite) {
  auto ops = nlohmann::json::array();
  for (const auto& op : suite.ops) {
    ops.push_back({{"kind", AugmentationName(op.kind)}, {"amount", op.amount}});
  }
  return {{"seed", suite.seed}, {"ops", ops}};
}

AugmentationSuite AugmentationSuiteFromJson(const nlohmann::json& j) {
  AugmentationSuite suite;
  suite.seed = j.value("seed", uint64_t{3});
  if (!j.contains("ops")) return AugmentationSuite::Default(suite.seed);
  for (const auto& op : j.at("ops")) {
    suite.ops.push_back({ParseAugmentation(op.at("kind")), op.value("amount", 0.0)});
  }
  return suite;
}

}  // namespace bnleak
