#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tae/embednet.hpp"
#include "tae/image.hpp"
#include "tae/keypoints.hpp"
#include "tae/quadgen.hpp"

namespace tae {

enum class SamplingStrategy { keypoint, grid };

std::string_view to_string(SamplingStrategy s);
SamplingStrategy sampling_strategy_from_string(std::string_view s);

struct SamplingConfig {
  SamplingStrategy strategy = SamplingStrategy::keypoint;
  int max_count = 500;
  int patch_size = 64;
  int grid_stride = 32;
  /// Keypoint sampling switches to the grid when fewer than this many fire.
  int min_keypoints = 20;
  bool grid_fallback = true;
  DetectorConfig detector;

  void validate() const;
};

nlohmann::json to_json(const SamplingConfig& c);
SamplingConfig sampling_config_from_json(const nlohmann::json& j);

/// Patch windows for test-time description, all fully inside the image.
/// The grid is centered: origins start at ((w - size) % stride) / 2.
/// Throws TooSmallImage when the image cannot hold one patch.
std::vector<PatchRef> sample_test_patches(const Image& image, const std::string& image_id,
                                          const SamplingConfig& config = {});

/// Patches of one image and their embeddings, row i belonging to patch i.
struct FeatureSet {
  std::string image_id;
  std::vector<PatchRef> patches;
  int dim = 256;
  std::vector<float> embeddings;

  std::size_t size() const noexcept { return patches.size(); }
  std::span<const float> embedding(std::size_t i) const {
    return {embeddings.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  bool operator==(const FeatureSet&) const = default;
};

FeatureSet describe_image(EmbeddingNetwork& net, const Image& image, const std::string& image_id,
                          const SamplingConfig& config = {});

/// Baseline descriptor: the patch's luma box-averaged down to side x side,
/// mean-removed and scaled to unit norm (a flat patch maps to the uniform
/// unit vector).
std::vector<float> raw_pixel_descriptor(std::span<const std::uint8_t> patch, int patch_size,
                                        int side = 16);

/// describe_image with raw_pixel_descriptor in place of the network.
FeatureSet describe_image_raw(const Image& image, const std::string& image_id,
                              const SamplingConfig& config = {}, int side = 16);

/// Binary layout, little-endian:
///   "TAEF" | u32 version | u32 id length | id bytes | u64 count | u32 dim
///   | count x (f64 x, f64 y, u32 size) | count x dim f32
void save_features(const FeatureSet& fs, const std::filesystem::path& path);
/// Throws ParseError on a bad header or truncated payload; the location is
/// the index of the first incomplete record.
FeatureSet load_features(const std::filesystem::path& path);

}  // namespace tae
