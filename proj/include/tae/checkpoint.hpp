#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "tae/embednet.hpp"

namespace tae {

struct NamedArray {
  std::string name;
  std::vector<float> values;

  bool operator==(const NamedArray&) const = default;
};

/// Network weights, batch-norm running moments, optional optimizer state and
/// free-form training metadata, stored in a single file:
///   "TAECKPT1" | u64 header length | JSON header | float32 LE payload
/// The header records the network config, the metadata and the name and
/// length of every array in payload order.
struct Checkpoint {
  EmbeddingNetworkConfig config;
  std::vector<NamedArray> state;
  std::vector<NamedArray> optimizer;
  nlohmann::json metadata = nlohmann::json::object();
};

Checkpoint snapshot(EmbeddingNetwork& net, nlohmann::json metadata = nlohmann::json::object());
/// Throws ShapeError when names or sizes disagree with the network.
void restore(EmbeddingNetwork& net, const Checkpoint& ckpt);
EmbeddingNetwork network_from_checkpoint(const Checkpoint& ckpt);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tae
