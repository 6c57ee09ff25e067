#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tae/nn.hpp"
#include "tae/rng.hpp"

namespace tae {

struct ConvBlockSpec {
  int out_channels = 0;
  int kernel = 0;
  int padding = 0;

  bool operator==(const ConvBlockSpec&) const = default;
};

/// Conv(+bias) -> batch norm -> ReLU -> 2x2 max-pool per block, then
/// fc(fc_input -> fc_hidden) -> batch norm -> ReLU -> fc(-> embedding_dim)
/// -> L2 normalization. Defaults reproduce the 7,564,800-parameter network.
struct EmbeddingNetworkConfig {
  int input_size = 64;
  int input_channels = 3;
  std::vector<ConvBlockSpec> conv_blocks{{32, 11, 9}, {64, 9, 7}, {128, 7, 5}, {256, 5, 3}, {512, 3, 1}};
  int fc_input = 4608;
  int fc_hidden = 1024;
  int embedding_dim = 256;
  float bn_momentum = 0.1f;
  float bn_eps = 1e-5f;

  bool operator==(const EmbeddingNetworkConfig&) const = default;
};

nlohmann::json to_json(const EmbeddingNetworkConfig& c);
EmbeddingNetworkConfig network_config_from_json(const nlohmann::json& j);

/// Spatial size after each convolution and each pooling.
struct StageSize {
  int conv = 0;
  int pool = 0;
};

/// Throws InvalidArchitecture when a stage underflows or the flattened size
/// disagrees with fc_input.
std::vector<StageSize> spatial_trace(const EmbeddingNetworkConfig& config);

struct LayerParameterCount {
  std::string layer;
  std::size_t count = 0;
};

class EmbeddingNetwork {
 public:
  /// Builds the network with fan-in scaled random weights drawn from `rng`.
  EmbeddingNetwork(const EmbeddingNetworkConfig& config, Rng& rng);

  const EmbeddingNetworkConfig& config() const noexcept { return config_; }

  /// patches: [N, input_size, input_size, input_channels] with values in
  /// [0, 1]. Returns [N, 1, 1, embedding_dim], each row of unit norm.
  nn::Tensor forward(const nn::Tensor& patches, nn::Mode mode);

  /// Back-propagates d(loss)/d(embeddings) from the last training-mode
  /// forward pass, accumulating parameter gradients.
  void backward(const nn::Tensor& grad_embeddings);

  void zero_grad();

  /// Evaluation-mode embeddings computed in chunks of at most `chunk`.
  nn::Tensor embed(const nn::Tensor& patches, int chunk = 64);

  std::vector<nn::Param*> parameters();
  std::vector<nn::Buffer*> buffers();

  /// Trainable scalars, batch-norm scale and shift included.
  std::size_t count_parameters() const;
  std::vector<LayerParameterCount> layer_parameter_counts() const;

  /// Spatial sizes recorded by the most recent forward pass.
  const std::vector<StageSize>& observed_trace() const noexcept { return observed_; }

 private:
  struct Block {
    nn::Conv2d conv;
    nn::BatchNorm bn;
    nn::Relu relu;
    nn::MaxPool2 pool;
  };

  EmbeddingNetworkConfig config_;
  std::vector<Block> blocks_;
  nn::Linear fc1_;
  nn::BatchNorm bn_fc1_;
  nn::Relu relu_fc1_;
  nn::Linear fc2_;
  nn::L2Normalize normalize_;
  std::vector<StageSize> observed_;
};

/// Packs 8-bit HWC patches (values 0..255) into a [N, size, size, 3] tensor
/// scaled to [0, 1].
nn::Tensor patches_to_tensor(std::span<const std::span<const std::uint8_t>> patches, int size);

}  // namespace tae
