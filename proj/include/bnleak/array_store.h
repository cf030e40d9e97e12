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

#ifndef BNLEAK_ARRAY_STORE_H_
#define BNLEAK_ARRAY_STORE_H_

#include <filesystem>
#include <map>
#include <string>

#include <torch/torch.h>

namespace bnleak {

// Named-array container used for checkpoints, latents, activations and
// datasets. On-disk layout (all integers little-endian):
//
//   magic    8 bytes  "BNLA\x01\0\0\0"
//   count    u64
//   entries  count times:
//     name_len u32, name bytes (utf-8)
//     dtype    u8   (0 = f32, 1 = f64, 2 = i64, 3 = u8)
//     ndim     u8
//     dims     ndim x i64
//     nbytes   u64, raw row-major data
//
// Entries are written in lexicographic name order so identical contents give
// identical files.
using NamedArrays = std::map<std::string, torch::Tensor>;

void SaveArrays(const std::filesystem::path& path, const NamedArrays& arrays);
NamedArrays LoadArrays(const std::filesystem::path& path);

// SHA-256 over names, dtypes, shapes and raw bytes (hex string). Used as the
// reproducibility fingerprint in manifests.
std::string Fingerprint(const NamedArrays& arrays);
std::string Sha256Hex(std::string_view bytes);

// Fetches an entry or throws kIo naming the missing key.
const torch::Tensor& RequireArray(const NamedArrays& arrays,
                                  const std::string& name);

// Parameters and buffers of a torch module, keyed by prefix + name.
template <typename Module>
NamedArrays ModuleArrays(const Module& module, const std::string& prefix) {
  NamedArrays arrays;
  for (const auto& p : module->named_parameters()) {
    arrays[prefix + p.key()] = p.value().detach().clone();
  }
  for (const auto& b : module->named_buffers()) {
    arrays[prefix + b.key()] = b.value().detach().clone();
  }
  return arrays;
}

template <typename Module>
void LoadModuleArrays(Module& module, const NamedArrays& arrays,
                      const std::string& prefix) {
  torch::NoGradGuard no_grad;
  for (auto& p : module->named_parameters()) {
    p.value().copy_(RequireArray(arrays, prefix + p.key()));
  }
  for (auto& b : module->named_buffers()) {
    b.value().copy_(RequireArray(arrays, prefix + b.key()));
  }
}

}  // namespace bnleak

#endif  // BNLEAK_ARRAY_STORE_H_
