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

#include "bnleak/toy_faces.h"

#include <array>
#include <random>
#include <string>

#include "bnleak/array_store.h"
#include "bnleak/error.h"

namespace bnleak {
namespace {

using Rgb = std::array<float, 3>;

struct IdentityParams {
  Rgb skin, hair, eye, mouth, mark;
  float face_rx, face_ry, hairline;
  float eye_x, eye_y, eye_r;
  float mouth_y, mouth_w, mouth_h;
  float mark_x, mark_y, mark_r;
  float nose_len;
  // Identity-specific marks (freckles, scars, accessories) in face space.
  std::vector<std::array<float, 6>> marks;  // x, y, radius, r, g, b
};

struct CaptureParams {
  float shift_x, shift_y, scale;
  float gain;
  Rgb cast, background, background_tilt;
  float expression;
  float noise;
  float lateral_light;
  float yaw;
  bool occluded;
  float occluder_x, occluder_y, occluder_r;
  Rgb occluder_color;
};

class Sampler {
 public:
  explicit Sampler(uint64_t seed) : rng_(seed) {}
  float Uniform(float lo, float hi) {
    return std::uniform_real_distribution<float>(lo, hi)(rng_);
  }
  Rgb Color(float lo, float hi) { return {Uniform(lo, hi), Uniform(lo, hi), Uniform(lo, hi)}; }
  float Sign() { return Uniform(0.f, 1.f) < 0.5f ? -1.f : 1.f; }
  uint64_t Next() { return rng_(); }

 private:
  std::mt19937_64 rng_;
};

IdentityParams SampleIdentity(Sampler& s, const ToyCorpusSpec& spec) {
  IdentityParams p;
  p.skin = {s.Uniform(0.55f, 0.95f), s.Uniform(0.40f, 0.80f), s.Uniform(0.30f, 0.70f)};
  p.hair = s.Color(0.05f, 0.65f);
  p.eye = s.Color(0.0f, 0.45f);
  p.mouth = {s.Uniform(0.5f, 0.9f), s.Uniform(0.1f, 0.35f), s.Uniform(0.1f, 0.35f)};
  p.mark = s.Color(0.0f, 0.3f);
  p.face_rx = s.Uniform(0.45f, 0.65f);
  p.face_ry = s.Uniform(0.60f, 0.80f);
  p.hairline = s.Uniform(-0.55f, -0.25f);
  p.eye_x = s.Uniform(0.18f, 0.30f);
  p.eye_y = s.Uniform(-0.20f, 0.0f);
  p.eye_r = s.Uniform(0.06f, 0.11f);
  p.mouth_y = s.Uniform(0.30f, 0.45f);
  p.mouth_w = s.Uniform(0.12f, 0.25f);
  p.mouth_h = s.Uniform(0.03f, 0.07f);
  p.mark_x = s.Sign() * s.Uniform(0.15f, 0.40f);
  p.mark_y = s.Uniform(-0.10f, 0.35f);
  p.mark_r = s.Uniform(0.04f, 0.07f);
  p.nose_len = s.Uniform(0.08f, 0.18f);
  // Marks come in mirrored pairs, like most facial structure.
  for (int64_t k = 0; k < spec.identity_marks; ++k) {
    const float mx = s.Uniform(0.05f, 0.5f);
    const float my = s.Uniform(-0.5f, 0.6f);
    const float mr = s.Uniform(0.04f, 0.1f);
    const Rgb c = s.Color(0.f, 1.f);
    p.marks.push_back({mx, my, mr, c[0], c[1], c[2]});
    p.marks.push_back({-mx, my, mr, c[0], c[1], c[2]});
  }
  return p;
}

CaptureParams SampleCapture(Sampler& s, Source source, const ToyCorpusSpec& spec) {
  CaptureParams c;
  const float jitter = static_cast<float>(spec.pose_jitter);
  c.shift_x = s.Uniform(-jitter, jitter);
  c.shift_y = s.Uniform(-jitter, jitter);
  c.scale = s.Uniform(1.f - 0.66f * jitter, 1.f + 0.66f * jitter);
  c.expression = s.Uniform(0.6f, 1.4f);
  c.background = s.Color(0.1f, 0.9f);
  c.background_tilt = s.Color(-0.15f, 0.15f);
  c.gain = s.Uniform(0.8f, 1.2f);
  c.cast = s.Color(-0.05f, 0.05f);
  c.noise = static_cast<float>(spec.sensor_noise);
  c.yaw = s.Uniform(-1.f, 1.f) * static_cast<float>(spec.yaw);
  c.lateral_light = s.Uniform(-1.f, 1.f) * static_cast<float>(spec.lateral_light);
  c.occluded = s.Uniform(0.f, 1.f) < spec.occluder_probability;
  c.occluder_x = s.Uniform(-0.6f, 0.6f);
  c.occluder_y = s.Uniform(-0.6f, 0.6f);
  c.occluder_r = s.Uniform(0.12f, 0.3f);
  c.occluder_color = s.Color(0.f, 1.f);
  if (source == Source::kExternal) {
    c.gain *= static_cast<float>(spec.external_gain);
    for (int k = 0; k < 3; ++k) c.cast[k] += static_cast<float>(spec.external_cast[k]);
    c.noise = static_cast<float>(spec.external_noise);
  }
  return c;
}

torch::Tensor Ellipse(const torch::Tensor& x, const torch::Tensor& y, float cx,
                      float cy, float rx, float ry) {
  constexpr float kSoftness = 0.08f;
  auto r = ((x - cx) / rx).square() + ((y - cy) / ry).square();
  return torch::sigmoid((1.0 - r) / kSoftness);
}

void Paint(torch::Tensor& canvas, const torch::Tensor& mask, const Rgb& color) {
  auto c = torch::tensor({color[0], color[1], color[2]}).view({3, 1, 1});
  canvas = canvas * (1.0 - mask) + c * mask;
}

torch::Tensor Render(const IdentityParams& id, const CaptureParams& cap,
                     int64_t height, int64_t width, uint64_t noise_seed) {
  auto ys = torch::linspace(-1.0, 1.0, height).view({height, 1}).expand({height, width});
  auto xs = torch::linspace(-1.0, 1.0, width).view({1, width}).expand({height, width});
  // Background gradient.
  auto bg = torch::tensor({cap.background[0], cap.background[1], cap.background[2]})
                .view({3, 1, 1});
  auto tilt = torch::tensor({cap.background_tilt[0], cap.background_tilt[1],
                             cap.background_tilt[2]})
                  .view({3, 1, 1});
  torch::Tensor canvas = bg + tilt * ys.unsqueeze(0);
  // Face-local coordinates.
  auto x = (xs - cap.shift_x) / cap.scale;
  auto y = (ys - cap.shift_y) / cap.scale;
  const float cy = 0.05f;
  auto hair_mask = Ellipse(x, y, 0.f, cy - 0.05f, id.face_rx + 0.1f, id.face_ry + 0.1f) *
                   torch::sigmoid((id.hairline - y) / 0.08f);
  auto face_mask = Ellipse(x, y, 0.f, cy, id.face_rx, id.face_ry);
  Paint(canvas, face_mask, id.skin);
  Paint(canvas, hair_mask, id.hair);
  // Turning the head moves inner features sideways inside the outline.
  x = x - cap.yaw;
  for (float side : {-1.f, 1.f}) {
    Paint(canvas, Ellipse(x, y, side * id.eye_x, id.eye_y, id.eye_r, id.eye_r * 0.7f), id.eye);
  }
  Rgb nose = {id.skin[0] * 0.8f, id.skin[1] * 0.8f, id.skin[2] * 0.8f};
  Paint(canvas, Ellipse(x, y, 0.f, 0.12f, 0.04f, id.nose_len), nose);
  Paint(canvas,
        Ellipse(x, y, 0.f, id.mouth_y, id.mouth_w, id.mouth_h * cap.expression),
        id.mouth);
  Paint(canvas, Ellipse(x, y, id.mark_x, id.mark_y, id.mark_r, id.mark_r), id.mark);
  for (const auto& m : id.marks) {
    Paint(canvas, Ellipse(x, y, m[0], m[1], m[2], m[2]), {m[3], m[4], m[5]});
  }
  if (cap.occluded) {
    Paint(canvas,
          Ellipse(xs, ys, cap.occluder_x, cap.occluder_y, cap.occluder_r, cap.occluder_r),
          cap.occluder_color);
  }
  auto cast = torch::tensor({cap.cast[0], cap.cast[1], cap.cast[2]}).view({3, 1, 1});
  canvas = canvas * (cap.gain * (1.0 + cap.lateral_light * xs)) + cast;
  auto gen = at::detail::createCPUGenerator(noise_seed);
  canvas = canvas + cap.noise * at::randn({3, height, width}, gen);
  return canvas.clamp(0.0, 1.0);
}

}  // namespace

torch::Tensor FaceDataset::Gather(std::span<const int64_t> ids) const {
  auto index = torch::tensor(std::vector<int64_t>(ids.begin(), ids.end()),
                             torch::kInt64);
  return images.index_select(0, index);
}

std::vector<int64_t> FaceDataset::IdsFrom(Source s) const {
  std::vector<int64_t> ids;
  for (int64_t i = 0; i < size(); ++i) {
    if (source[i] == s) ids.push_back(i);
  }
  return ids;
}

void FaceDataset::Validate() const {
  if (!images.defined() || images.dim() != 4) {
    Fail(ErrorCode::kInvalidDataset, "images must be (N, C, H, W)");
  }
  if (images.size(0) != size() || static_cast<int64_t>(source.size()) != size()) {
    Fail(ErrorCode::kInvalidDataset, "label and image counts differ");
  }
}

void SaveDataset(const std::filesystem::path& path, const FaceDataset& data) {
  data.Validate();
  NamedArrays arrays;
  arrays["images"] = (data.images * 255.0).round().clamp(0, 255).to(torch::kUInt8);
  arrays["identity"] = torch::tensor(data.identity, torch::kInt64);
  std::vector<int64_t> source;
  for (Source s : data.source) source.push_back(static_cast<int64_t>(s));
  arrays["source"] = torch::tensor(source, torch::kInt64);
  SaveArrays(path, arrays);
}

FaceDataset LoadDataset(const std::filesystem::path& path) {
  NamedArrays arrays = LoadArrays(path);
  FaceDataset data;
  data.images = RequireArray(arrays, "images").to(torch::kFloat32) / 255.0;
  auto identity = RequireArray(arrays, "identity").contiguous();
  auto source = RequireArray(arrays, "source").contiguous();
  data.identity.assign(identity.data_ptr<int64_t>(),
                       identity.data_ptr<int64_t>() + identity.numel());
  for (int64_t i = 0; i < source.numel(); ++i) {
    data.source.push_back(static_cast<Source>(source.data_ptr<int64_t>()[i]));
  }
  data.Validate();
  return data;
}

FaceDataset MakeToyFaceDataset(const ToyCorpusSpec& spec) {
  if (spec.height < 8 || spec.width < 8) {
    Fail(ErrorCode::kInvalidArgument, "toy faces need at least 8x8 pixels");
  }
  Sampler sampler(spec.seed);
  FaceDataset data;
  std::vector<torch::Tensor> images;
  int64_t next_identity = 0;
  auto add_corpus = [&](Source source, int64_t identities, int64_t per_identity) {
    for (int64_t i = 0; i < identities; ++i) {
      const IdentityParams id = SampleIdentity(sampler, spec);
      for (int64_t k = 0; k < per_identity; ++k) {
        const CaptureParams cap = SampleCapture(sampler, source, spec);
        images.push_back(Render(id, cap, spec.height, spec.width, sampler.Next()));
        data.identity.push_back(next_identity);
        data.source.push_back(source);
      }
      ++next_identity;
    }
  };
  add_corpus(Source::kPrimary, spec.primary_identities, spec.primary_images);
  add_corpus(Source::kExternal, spec.external_identities, spec.external_images);
  add_corpus(Source::kPublic, spec.public_identities, spec.public_images);
  if (images.empty()) Fail(ErrorCode::kInvalidArgument, "empty toy corpus");
  data.images = torch::stack(images);
  // Quantize so in-memory and on-disk copies agree bit for bit.
  data.images = (data.images * 255.0).round() / 255.0;
  return data;
}

}  // namespace bnleak
