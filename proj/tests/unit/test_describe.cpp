#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "tae/describe.hpp"
#include "tae/error.hpp"

namespace tae {
namespace {

using testing::scratch_dir;
using testing::slim_config;
using testing::textured;

SamplingConfig grid(int stride, int max_count = 500) {
  SamplingConfig c;
  c.strategy = SamplingStrategy::grid;
  c.grid_stride = stride;
  c.max_count = max_count;
  return c;
}

TEST(SampleTestPatches, SingleWindowImage) {
  const Image img = textured(1, 64, 64);
  const auto refs = sample_test_patches(img, "x", grid(64));
  ASSERT_EQ(refs.size(), 1u);
  EXPECT_EQ(refs[0].x, 32);
  EXPECT_EQ(refs[0].y, 32);
  EXPECT_EQ(refs[0].size, 64);
  EXPECT_EQ(refs[0].image_id, "x");
}

TEST(SampleTestPatches, GridMatchesWindowEnumeration) {
  const Image img = textured(2, 256, 256);
  const auto refs = sample_test_patches(img, "x", grid(32));
  std::set<std::pair<int, int>> expect;
  for (int oy = 0; oy + 64 <= 256; ++oy) {
    for (int ox = 0; ox + 64 <= 256; ++ox) {
      if (ox % 32 == 0 && oy % 32 == 0) expect.insert({ox + 32, oy + 32});
    }
  }
  std::set<std::pair<int, int>> got;
  for (const auto& r : refs) got.insert({static_cast<int>(r.x), static_cast<int>(r.y)});
  EXPECT_EQ(refs.size(), 49u);
  EXPECT_EQ(got, expect);
}

TEST(SampleTestPatches, GridIsCenteredWhenStrideDoesNotDivide) {
  const Image img = textured(3, 100, 90);
  const auto refs = sample_test_patches(img, "x", grid(16));
  // Horizontal: 36 spare pixels, origins 2, 18, 34. Vertical: 26 spare, origins 5, 21.
  std::set<std::pair<int, int>> expect;
  for (int ox : {2, 18, 34})
    for (int oy : {5, 21}) expect.insert({ox + 32, oy + 32});
  std::set<std::pair<int, int>> got;
  for (const auto& r : refs) got.insert({static_cast<int>(r.x), static_cast<int>(r.y)});
  EXPECT_EQ(got, expect);
}

TEST(SampleTestPatches, ConstantImageFallsBackToGrid) {
  const Image img(256, 256, 3, 128);
  SamplingConfig c;
  const auto refs = sample_test_patches(img, "flat", c);
  EXPECT_EQ(refs, sample_test_patches(img, "flat", grid(c.grid_stride)));
  EXPECT_FALSE(refs.empty());
  c.grid_fallback = false;
  EXPECT_TRUE(sample_test_patches(img, "flat", c).empty());
}

TEST(SampleTestPatches, KeypointWindowsInsideAndCapped) {
  const Image img = textured(4, 320, 240);
  SamplingConfig c;
  c.max_count = 37;
  const auto refs = sample_test_patches(img, "x", c);
  EXPECT_LE(refs.size(), 37u);
  EXPECT_GT(refs.size(), 20u);
  for (const auto& r : refs) EXPECT_TRUE(window_fits(r.x, r.y, 64, 320, 240));
}

TEST(SampleTestPatches, CountMonotoneInCap) {
  const Image img = textured(5, 256, 256);
  for (auto strategy : {SamplingStrategy::keypoint, SamplingStrategy::grid}) {
    std::size_t prev = 0;
    for (int cap : {1, 5, 10, 30, 60, 200}) {
      SamplingConfig c;
      c.strategy = strategy;
      c.max_count = cap;
      const auto n = sample_test_patches(img, "x", c).size();
      EXPECT_GE(n, prev);
      EXPECT_LE(n, static_cast<std::size_t>(cap));
      prev = n;
    }
  }
}

TEST(SampleTestPatches, TooSmall) {
  const Image img = textured(6, 63, 200);
  EXPECT_THROW(sample_test_patches(img, "x"), TooSmallImage);
}

class DescribeTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    Rng rng(7);
    net_ = new EmbeddingNetwork(slim_config(), rng);
  }
  static void TearDownTestSuite() {
    delete net_;
    net_ = nullptr;
  }
  static EmbeddingNetwork* net_;
};
EmbeddingNetwork* DescribeTest::net_ = nullptr;

TEST_F(DescribeTest, DeterministicAndCopyInvariant) {
  const Image img = textured(8, 200, 180);
  const Image copy = img;
  SamplingConfig c;
  c.max_count = 40;
  const FeatureSet a = describe_image(*net_, img, "x", c);
  const FeatureSet b = describe_image(*net_, copy, "x", c);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.dim, 32);
  EXPECT_EQ(a.embeddings.size(), a.size() * 32);
}

TEST_F(DescribeTest, CapRespected) {
  const Image img = textured(9, 200, 180);
  SamplingConfig c;
  c.max_count = 10;
  EXPECT_LE(describe_image(*net_, img, "x", c).size(), 10u);
}

TEST_F(DescribeTest, EmbeddingsMatchCropThenForward) {
  const Image img = textured(10, 200, 180);
  SamplingConfig c;
  c.max_count = 12;
  const FeatureSet fs = describe_image(*net_, img, "x", c);
  ASSERT_GT(fs.size(), 0u);
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const auto& r = fs.patches[i];
    const int ox = static_cast<int>(std::lround(r.x)) - 32, oy = static_cast<int>(std::lround(r.y)) - 32;
    nn::Tensor t(1, 64, 64, 3);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        for (int ch = 0; ch < 3; ++ch)
          t.data[(static_cast<std::size_t>(y) * 64 + x) * 3 + ch] = img.at(ox + x, oy + y, ch) / 255.0f;
    const nn::Tensor e = net_->forward(t, nn::Mode::eval);
    double norm = 0;
    for (int k = 0; k < fs.dim; ++k) {
      EXPECT_NEAR(fs.embedding(i)[static_cast<std::size_t>(k)], e.data[static_cast<std::size_t>(k)], 1e-5);
      norm += double(fs.embedding(i)[static_cast<std::size_t>(k)]) * fs.embedding(i)[static_cast<std::size_t>(k)];
    }
    EXPECT_NEAR(norm, 1.0, 1e-5);
  }
}

TEST_F(DescribeTest, PatchSizeMustMatchNetwork) {
  SamplingConfig c;
  c.patch_size = 48;
  EXPECT_THROW(describe_image(*net_, textured(1), "x", c), InvalidConfiguration);
}

TEST(RawDescriptor, UnitNormAndMeanFree) {
  const Image img = textured(11, 64, 64);
  const auto d = raw_pixel_descriptor(img.pixels, 64);
  ASSERT_EQ(d.size(), 256u);
  double sum = 0, sq = 0;
  for (float v : d) {
    sum += v;
    sq += double(v) * v;
  }
  EXPECT_NEAR(sum, 0.0, 1e-4);
  EXPECT_NEAR(sq, 1.0, 1e-5);
  const Image flat(64, 64, 3, 77);
  for (float v : raw_pixel_descriptor(flat.pixels, 64)) EXPECT_NEAR(v, 1.0 / 16.0, 1e-6);
}

TEST(RawDescriptor, BoxAverageOracle) {
  const Image img = textured(12, 64, 64);
  const auto lum = luminance(img);
  std::vector<double> boxes(256, 0.0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) boxes[static_cast<std::size_t>((y / 4) * 16 + x / 4)] += lum[static_cast<std::size_t>(y * 64 + x)] / 16.0;
  double mean = 0;
  for (double b : boxes) mean += b / 256.0;
  double norm = 0;
  for (double& b : boxes) {
    b -= mean;
    norm += b * b;
  }
  norm = std::sqrt(norm);
  const auto d = raw_pixel_descriptor(img.pixels, 64);
  for (std::size_t i = 0; i < 256; ++i) EXPECT_NEAR(d[i], boxes[i] / norm, 1e-5);
}

FeatureSet random_features(std::size_t n, int dim, std::uint64_t seed, const std::string& id = "img") {
  Rng rng(seed);
  FeatureSet fs;
  fs.image_id = id;
  fs.dim = dim;
  for (std::size_t i = 0; i < n; ++i) {
    fs.patches.push_back({id, 32.0 + static_cast<double>(i) * 0.25, 40.5, 64});
    const auto v = testing::random_unit(rng, dim);
    fs.embeddings.insert(fs.embeddings.end(), v.begin(), v.end());
  }
  return fs;
}

TEST(FeatureFile, EmptyRoundTrip) {
  const auto dir = scratch_dir("feat_empty");
  FeatureSet fs;
  fs.image_id = "empty";
  save_features(fs, dir / "e.feat");
  EXPECT_EQ(load_features(dir / "e.feat"), fs);
}

TEST(FeatureFile, LargeRoundTripBitExact) {
  const auto dir = scratch_dir("feat_large");
  const FeatureSet fs = random_features(1000, 256, 13, "caf\xc3\xa9 image");
  save_features(fs, dir / "f.feat");
  const FeatureSet back = load_features(dir / "f.feat");
  EXPECT_EQ(back, fs);
  EXPECT_EQ(std::memcmp(back.embeddings.data(), fs.embeddings.data(), fs.embeddings.size() * 4), 0);
}

TEST(FeatureFile, TruncatedLastRowNamesRecord) {
  const auto dir = scratch_dir("feat_trunc");
  const FeatureSet fs = random_features(10, 256, 14);
  save_features(fs, dir / "f.feat");
  const auto full = std::filesystem::file_size(dir / "f.feat");
  std::filesystem::resize_file(dir / "f.feat", full - 7);
  try {
    load_features(dir / "f.feat");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.location(), 9u);
    EXPECT_NE(std::string(e.what()).find('9'), std::string::npos);
  }
}

TEST(FeatureFile, BadMagicAndTrailingBytes) {
  const auto dir = scratch_dir("feat_bad");
  const FeatureSet fs = random_features(3, 8, 15);
  save_features(fs, dir / "f.feat");
  {
    std::fstream f(dir / "f.feat", std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
  }
  EXPECT_THROW(load_features(dir / "f.feat"), ParseError);
  save_features(fs, dir / "g.feat");
  {
    std::ofstream f(dir / "g.feat", std::ios::app | std::ios::binary);
    f.put('\0');
  }
  EXPECT_THROW(load_features(dir / "g.feat"), ParseError);
  EXPECT_THROW(load_features(dir / "missing.feat"), FileError);
}

TEST(SamplingConfig, JsonRoundTrip) {
  SamplingConfig c = grid(24, 99);
  c.min_keypoints = 7;
  const auto d = sampling_config_from_json(to_json(c));
  EXPECT_EQ(to_json(d), to_json(c));
  EXPECT_EQ(sampling_strategy_from_string("grid"), SamplingStrategy::grid);
  EXPECT_THROW(sampling_strategy_from_string("dense"), InvalidConfiguration);
}

}  // namespace
}  // namespace tae
