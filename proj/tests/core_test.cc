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


#include <fstream>
#include <set>

#include "bnleak/array_store.h"
#include "bnleak/preprocess.h"
#include "bnleak/toy_faces.h"
#include "test_util.h"

namespace bnleak {
namespace {

TEST(ArrayStoreTest, RoundTripAllDtypes) {
  testing::TempDir dir("bnleak_arrays");
  NamedArrays arrays = {
      {"f32", torch::randn({2, 3})},
      {"f64", torch::randn({4}, torch::kFloat64)},
      {"i64", torch::arange(6, torch::kInt64).reshape({3, 2})},
      {"u8", torch::randint(0, 255, {2, 2, 2}, torch::kUInt8)},
      {"scalar", torch::tensor(3.5)},
  };
  SaveArrays(dir.path() / "a.bnla", arrays);
  const auto loaded = LoadArrays(dir.path() / "a.bnla");
  ASSERT_EQ(loaded.size(), arrays.size());
  for (const auto& [name, t] : arrays) {
    EXPECT_EQ(loaded.at(name).scalar_type(), t.scalar_type()) << name;
    EXPECT_TRUE(torch::equal(loaded.at(name), t)) << name;
  }
  EXPECT_EQ(Fingerprint(loaded), Fingerprint(arrays));
}

TEST(ArrayStoreTest, IdenticalContentsGiveIdenticalFiles) {
  testing::TempDir dir("bnleak_arrays");
  NamedArrays arrays = {{"b", torch::ones({2})}, {"a", torch::zeros({3})}};
  SaveArrays(dir.path() / "x.bnla", arrays);
  SaveArrays(dir.path() / "y.bnla", arrays);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(slurp(dir.path() / "x.bnla"), slurp(dir.path() / "y.bnla"));
}

TEST(ArrayStoreTest, FingerprintSeesNamesShapesAndValues) {
  const NamedArrays base = {{"a", torch::zeros({2, 2})}};
  const auto fp = Fingerprint(base);
  EXPECT_EQ(fp.size(), 64u);
  EXPECT_NE(fp, Fingerprint({{"b", torch::zeros({2, 2})}}));
  EXPECT_NE(fp, Fingerprint({{"a", torch::zeros({4})}}));
  EXPECT_NE(fp, Fingerprint({{"a", torch::ones({2, 2})}}));
  EXPECT_NE(fp, Fingerprint({{"a", torch::zeros({2, 2}, torch::kFloat64)}}));
}

TEST(ArrayStoreTest, Sha256KnownVector) {
  EXPECT_EQ(Sha256Hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(ArrayStoreTest, Errors) {
  testing::TempDir dir("bnleak_arrays");
  EXPECT_BNLEAK_ERROR(LoadArrays(dir.path() / "missing.bnla"), ErrorCode::kArtifactMissing);
  {
    std::ofstream out(dir.path() / "junk.bnla", std::ios::binary);
    out << "not an array file";
  }
  EXPECT_BNLEAK_ERROR(LoadArrays(dir.path() / "junk.bnla"), ErrorCode::kIo);
  EXPECT_BNLEAK_ERROR(RequireArray({}, "x"), ErrorCode::kIo);
  SaveArrays(dir.path() / "t.bnla", {{"a", torch::zeros({100})}});
  std::filesystem::resize_file(dir.path() / "t.bnla", 60);
  EXPECT_BNLEAK_ERROR(LoadArrays(dir.path() / "t.bnla"), ErrorCode::kIo);
}

TEST(ToyFacesTest, LayoutCountsAndRange) {
  const auto spec = testing::TinyCorpusSpec();
  const auto data = MakeToyFaceDataset(spec);
  EXPECT_EQ(data.size(), 6 * 8 + 3 * 4 + 4 * 3);
  EXPECT_EQ(data.images.sizes(), (std::vector<int64_t>{data.size(), 3, 16, 16}));
  EXPECT_GE(data.images.min().item<float>(), 0.0f);
  EXPECT_LE(data.images.max().item<float>(), 1.0f);
  EXPECT_EQ(data.IdsFrom(Source::kPrimary).size(), 48u);
  EXPECT_EQ(data.IdsFrom(Source::kExternal).size(), 12u);
  EXPECT_EQ(data.IdsFrom(Source::kPublic).size(), 12u);
  // Identity labels are disjoint across corpora.
  std::set<int64_t> primary, others;
  for (int64_t i = 0; i < data.size(); ++i) {
    (data.source[i] == Source::kPrimary ? primary : others).insert(data.identity[i]);
  }
  EXPECT_EQ(primary.size(), 6u);
  for (auto id : others) EXPECT_FALSE(primary.count(id));
  // 8-bit quantized.
  auto scaled = data.images * 255.0f;
  EXPECT_TRUE(torch::allclose(scaled, scaled.round(), 0, 1e-3));
}

TEST(ToyFacesTest, DeterministicAndRoundTrips) {
  testing::TempDir dir("bnleak_toy");
  const auto spec = testing::TinyCorpusSpec();
  const auto a = MakeToyFaceDataset(spec);
  const auto b = MakeToyFaceDataset(spec);
  EXPECT_TRUE(torch::equal(a.images, b.images));
  EXPECT_EQ(a.identity, b.identity);
  SaveDataset(dir.path() / "d.bnla", a);
  const auto c = LoadDataset(dir.path() / "d.bnla");
  EXPECT_TRUE(torch::equal(a.images, c.images));
  EXPECT_EQ(a.identity, c.identity);
  EXPECT_EQ(a.source, c.source);
  auto other = spec;
  other.seed += 1;
  EXPECT_FALSE(torch::equal(a.images, MakeToyFaceDataset(other).images));
}

TEST(ToyFacesTest, GatherAndValidation) {
  const auto data = MakeToyFaceDataset(testing::TinyCorpusSpec());
  std::vector<int64_t> rows = {3, 0};
  auto g = data.Gather(rows);
  EXPECT_TRUE(torch::equal(g[0], data.images[3]));
  EXPECT_TRUE(torch::equal(g[1], data.images[0]));
  auto spec = testing::TinyCorpusSpec();
  spec.height = 4;
  EXPECT_BNLEAK_ERROR(MakeToyFaceDataset(spec), ErrorCode::kInvalidArgument);
  auto broken = data;
  broken.identity.pop_back();
  EXPECT_BNLEAK_ERROR(broken.Validate(), ErrorCode::kInvalidDataset);
}

TEST(PreprocessTest, BilinearHalfPixelOracle) {
  auto row = torch::tensor({0.0f, 1.0f}).view({1, 1, 1, 2});
  auto up = ResizeBilinear(row, 1, 4).view({4});
  EXPECT_TRUE(torch::allclose(up, torch::tensor({0.0f, 0.25f, 0.75f, 1.0f})));
  auto images = testing::RandomImages(2, 3, 8, 8, 1);
  EXPECT_TRUE(torch::equal(ResizeBilinear(images, 8, 8), images));
}

TEST(PreprocessTest, NormalizesPerChannel) {
  PreprocessConfig config;
  config.input = {3, 4, 4};
  config.mean = {0.0, 0.5, 1.0};
  config.stddev = {1.0, 0.5, 2.0};
  auto out = Preprocess(config, torch::ones({1, 3, 4, 4}));
  EXPECT_FLOAT_EQ(out[0][0][0][0].item<float>(), 1.0f);
  EXPECT_FLOAT_EQ(out[0][1][0][0].item<float>(), 1.0f);
  EXPECT_FLOAT_EQ(out[0][2][0][0].item<float>(), 0.0f);
  EXPECT_EQ(Preprocess(config, torch::ones({2, 3, 9, 7})).sizes(),
            (std::vector<int64_t>{2, 3, 4, 4}));
}

TEST(PreprocessTest, Errors) {
  PreprocessConfig config;
  EXPECT_BNLEAK_ERROR(Preprocess(config, torch::ones({3, 4, 4})), ErrorCode::kPreprocessing);
  EXPECT_BNLEAK_ERROR(Preprocess(config, torch::ones({1, 1, 4, 4})), ErrorCode::kPreprocessing);
  EXPECT_BNLEAK_ERROR(Preprocess(config, torch::ones({0, 3, 4, 4})), ErrorCode::kPreprocessing);
  config.stddev = {1.0, 0.0, 1.0};
  EXPECT_BNLEAK_ERROR(config.Validate(), ErrorCode::kConfig);
}

TEST(PreprocessTest, FlipIsAnInvolution) {
  auto images = testing::RandomImages(1, 3, 5, 6, 2);
  EXPECT_TRUE(torch::equal(HorizontalFlip(HorizontalFlip(images)), images));
  EXPECT_TRUE(torch::equal(HorizontalFlip(images)[0][0][0][0], images[0][0][0][5]));
}

}  // namespace
}  // namespace bnleak
