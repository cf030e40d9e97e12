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

#include "bnleak/array_store.h"

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "bnleak/error.h"

namespace bnleak {
namespace {

constexpr std::array<char, 8> kMagic = {'B', 'N', 'L', 'A', 1, 0, 0, 0};

uint8_t DtypeTag(torch::ScalarType type) {
  switch (type) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    case torch::kUInt8: return 3;
    default:
      Fail(ErrorCode::kIo, std::string("unsupported dtype ") +
                               std::string(c10::toString(type)));
  }
}

torch::ScalarType DtypeFromTag(uint8_t tag) {
  switch (tag) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    case 3: return torch::kUInt8;
    default: Fail(ErrorCode::kIo, "unknown dtype tag " + std::to_string(tag));
  }
}

template <typename T>
void WritePod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T ReadPod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) Fail(ErrorCode::kIo, "truncated array container");
  return value;
}

void Serialize(std::ostream& out, const NamedArrays& arrays) {
  out.write(kMagic.data(), kMagic.size());
  WritePod<uint64_t>(out, arrays.size());
  for (const auto& [name, tensor] : arrays) {
    torch::Tensor t = tensor.detach().contiguous().cpu();
    WritePod<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    WritePod<uint8_t>(out, DtypeTag(t.scalar_type()));
    WritePod<uint8_t>(out, static_cast<uint8_t>(t.dim()));
    for (int64_t d : t.sizes()) WritePod<int64_t>(out, d);
    const uint64_t nbytes = t.numel() * t.element_size();
    WritePod<uint64_t>(out, nbytes);
    out.write(static_cast<const char*>(t.data_ptr()),
              static_cast<std::streamsize>(nbytes));
  }
}

}  // namespace

void SaveArrays(const std::filesystem::path& path, const NamedArrays& arrays) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIo, "cannot open " + path.string());
  Serialize(out, arrays);
  if (!out) Fail(ErrorCode::kIo, "write failed for " + path.string());
}

NamedArrays LoadArrays(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kArtifactMissing, "cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) {
    Fail(ErrorCode::kIo, path.string() + " is not a BNLA container");
  }
  NamedArrays arrays;
  const auto count = ReadPod<uint64_t>(in);
  for (uint64_t i = 0; i < count; ++i) {
    const auto name_len = ReadPod<uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto dtype = DtypeFromTag(ReadPod<uint8_t>(in));
    const auto ndim = ReadPod<uint8_t>(in);
    std::vector<int64_t> dims(ndim);
    for (auto& d : dims) d = ReadPod<int64_t>(in);
    const auto nbytes = ReadPod<uint64_t>(in);
    torch::Tensor t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    if (nbytes != static_cast<uint64_t>(t.numel() * t.element_size())) {
      Fail(ErrorCode::kIo, "size mismatch for entry " + name);
    }
    in.read(static_cast<char*>(t.data_ptr()),
            static_cast<std::streamsize>(nbytes));
    if (!in) Fail(ErrorCode::kIo, "truncated entry " + name);
    arrays.emplace(std::move(name), std::move(t));
  }
  return arrays;
}

std::string Sha256Hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(
      EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    Fail(ErrorCode::kFatal, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

std::string Fingerprint(const NamedArrays& arrays) {
  std::ostringstream buffer;
  Serialize(buffer, arrays);
  return Sha256Hex(buffer.str());
}

const torch::Tensor& RequireArray(const NamedArrays& arrays,
                                  const std::string& name) {
  auto it = arrays.find(name);
  if (it == arrays.end()) Fail(ErrorCode::kIo, "missing array '" + name + "'");
  return it->second;
}

}  // namespace bnleak
