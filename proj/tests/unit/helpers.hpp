#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tae/embednet.hpp"
#include "tae/image.hpp"
#include "tae/procedural.hpp"
#include "tae/quadgen.hpp"
#include "tae/rng.hpp"

namespace tae::testing {

inline Image textured(std::uint64_t seed, int w = 192, int h = 160) {
  Rng rng(seed);
  return procedural_image(rng, w, h);
}

inline std::vector<float> random_unit(Rng& rng, int dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(dim));
  double n = 0;
  for (auto& x : v) {
    x = g(rng);
    n += x * x;
  }
  n = std::sqrt(n);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / n);
  return out;
}

/// Three small conv blocks and narrow fully connected layers; cheap enough
/// for training inside unit tests.
inline EmbeddingNetworkConfig slim_config() {
  EmbeddingNetworkConfig c;
  c.conv_blocks = {{4, 5, 2}, {8, 3, 1}, {8, 3, 1}};
  c.fc_input = 8 * 8 * 8;
  c.fc_hidden = 64;
  c.embedding_dim = 32;
  return c;
}

/// Mixed-difficulty quadruplets from `images` procedural images, image i
/// paired with image i+1 as the negative source.
inline QuadrupletDataset toy_dataset(int images, int per_image, std::uint64_t seed, int side = 160) {
  QuadrupletDataset ds;
  for (int i = 0; i < images; ++i) {
    const Image a = textured(seed + static_cast<std::uint64_t>(i), side, side);
    const Image n = textured(seed + static_cast<std::uint64_t>((i + 1) % images), side, side);
    Rng rng(seed * 1000 + static_cast<std::uint64_t>(i));
    auto batch = make_quadruplets(a, "img" + std::to_string(i), n, "img" + std::to_string((i + 1) % images),
                                  DifficultyMix::mixed, per_image, rng);
    ds.records.insert(ds.records.end(), batch.records.begin(), batch.records.end());
    ds.patches.merge(batch.patches);
  }
  return ds;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tae_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace tae::testing
