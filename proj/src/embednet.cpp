#include "tae/embednet.hpp"

#include <cmath>

#include "tae/error.hpp"

namespace tae {

using nlohmann::json;

json to_json(const EmbeddingNetworkConfig& c) {
  json blocks = json::array();
  for (const auto& b : c.conv_blocks) blocks.push_back({b.out_channels, b.kernel, b.padding});
  return {{"input_size", c.input_size},   {"input_channels", c.input_channels},
          {"conv_blocks", blocks},        {"fc_input", c.fc_input},
          {"fc_hidden", c.fc_hidden},     {"embedding_dim", c.embedding_dim},
          {"bn_momentum", c.bn_momentum}, {"bn_eps", c.bn_eps}};
}

EmbeddingNetworkConfig network_config_from_json(const json& j) {
  EmbeddingNetworkConfig c;
  c.input_size = j.value("input_size", c.input_size);
  c.input_channels = j.value("input_channels", c.input_channels);
  if (j.contains("conv_blocks")) {
    c.conv_blocks.clear();
    for (const auto& b : j.at("conv_blocks")) {
      c.conv_blocks.push_back({b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>()});
    }
  }
  c.fc_input = j.value("fc_input", c.fc_input);
  c.fc_hidden = j.value("fc_hidden", c.fc_hidden);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
  c.bn_eps = j.value("bn_eps", c.bn_eps);
  return c;
}

std::vector<StageSize> spatial_trace(const EmbeddingNetworkConfig& config) {
  if (config.conv_blocks.empty()) throw InvalidArchitecture("at least one convolution block is required");
  std::vector<StageSize> trace;
  int size = config.input_size;
  for (std::size_t i = 0; i < config.conv_blocks.size(); ++i) {
    const auto& b = config.conv_blocks[i];
    if (b.kernel < 1 || b.padding < 0 || b.out_channels < 1) {
      throw InvalidArchitecture("block " + std::to_string(i + 1) + " has invalid geometry");
    }
    const int conv = size + 2 * b.padding - b.kernel + 1;
    if (conv < 1) {
      throw InvalidArchitecture("block " + std::to_string(i + 1) + ": " + std::to_string(size) +
                                "px map underflows a " + std::to_string(b.kernel) + "px kernel");
    }
    const int pool = conv / 2;
    if (pool < 1) {
      throw InvalidArchitecture("block " + std::to_string(i + 1) + ": nothing left after pooling");
    }
    trace.push_back({conv, pool});
    size = pool;
  }
  const int flat = size * size * config.conv_blocks.back().out_channels;
  if (flat != config.fc_input) {
    throw InvalidArchitecture("input " + std::to_string(config.input_size) + "px flattens to " +
                              std::to_string(flat) + " features, fc expects " +
                              std::to_string(config.fc_input));
  }
  return trace;
}

namespace {

void init_normal(nn::Param& p, double stddev, Rng& rng) {
  std::normal_distribution<float> dist(0.0f, static_cast<float>(stddev));
  for (auto& v : p.value) v = dist(rng);
}

}  // namespace

EmbeddingNetwork::EmbeddingNetwork(const EmbeddingNetworkConfig& config, Rng& rng)
    : config_(config),
      fc1_("fc1", config.fc_input, config.fc_hidden),
      bn_fc1_("bn_fc1", config.fc_hidden, config.bn_momentum, config.bn_eps),
      fc2_("fc2", config.fc_hidden, config.embedding_dim) {
  spatial_trace(config_);
  int in = config_.input_channels;
  for (std::size_t i = 0; i < config_.conv_blocks.size(); ++i) {
    const auto& b = config_.conv_blocks[i];
    const std::string name = "conv" + std::to_string(i + 1);
    blocks_.push_back(Block{nn::Conv2d(name, in, b.out_channels, b.kernel, b.padding),
                            nn::BatchNorm(name + ".bn", b.out_channels, config_.bn_momentum, config_.bn_eps),
                            nn::Relu(), nn::MaxPool2()});
    in = b.out_channels;
  }
  for (auto& block : blocks_) {
    const int fan_in = block.conv.kernel() * block.conv.kernel() * block.conv.in_channels();
    init_normal(block.conv.weight(), std::sqrt(2.0 / fan_in), rng);
  }
  init_normal(fc1_.weight(), std::sqrt(2.0 / config_.fc_input), rng);
  init_normal(fc2_.weight(), std::sqrt(1.0 / config_.fc_hidden), rng);
}

nn::Tensor EmbeddingNetwork::forward(const nn::Tensor& patches, nn::Mode mode) {
  if (patches.h != config_.input_size || patches.w != config_.input_size ||
      patches.c != config_.input_channels) {
    throw ShapeError("expected patches of " + std::to_string(config_.input_size) + "x" +
                     std::to_string(config_.input_size) + "x" + std::to_string(config_.input_channels) +
                     ", got " + std::to_string(patches.h) + "x" + std::to_string(patches.w) + "x" +
                     std::to_string(patches.c));
  }
  if (patches.n < 1) return nn::Tensor(0, 1, 1, config_.embedding_dim);
  observed_.clear();
  nn::Tensor x = patches;
  for (auto& b : blocks_) {
    x = b.conv.forward(x, mode);
    const int conv_size = x.h;
    x = b.bn.forward(x, mode);
    x = b.relu.forward(x, mode);
    x = b.pool.forward(x, mode);
    observed_.push_back({conv_size, x.h});
  }
  x = fc1_.forward(x, mode);
  x = bn_fc1_.forward(x, mode);
  x = relu_fc1_.forward(x, mode);
  x = fc2_.forward(x, mode);
  return normalize_.forward(x, mode);
}

void EmbeddingNetwork::backward(const nn::Tensor& grad_embeddings) {
  nn::Tensor g = normalize_.backward(grad_embeddings);
  g = fc2_.backward(g);
  g = relu_fc1_.backward(g);
  g = bn_fc1_.backward(g);
  g = fc1_.backward(g);
  const auto& last = blocks_.back();
  const int side = observed_.empty() ? 0 : observed_.back().pool;
  g.h = side;
  g.w = side;
  g.c = last.conv.out_channels();
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    auto& b = blocks_[i];
    g = b.pool.backward(g);
    g = b.relu.backward(g);
    g = b.bn.backward(g);
    g = b.conv.backward(g, i > 0);
  }
}

void EmbeddingNetwork::zero_grad() {
  for (auto* p : parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
}

nn::Tensor EmbeddingNetwork::embed(const nn::Tensor& patches, int chunk) {
  nn::Tensor out(patches.n, 1, 1, config_.embedding_dim);
  for (int first = 0; first < patches.n; first += chunk) {
    const int count = std::min(chunk, patches.n - first);
    nn::Tensor part(count, patches.h, patches.w, patches.c);
    std::copy(patches.sample(first), patches.sample(first) + part.size(), part.data.begin());
    const nn::Tensor e = forward(part, nn::Mode::eval);
    std::copy(e.data.begin(), e.data.end(), out.sample(first));
  }
  return out;
}

std::vector<nn::Param*> EmbeddingNetwork::parameters() {
  std::vector<nn::Param*> out;
  for (auto& b : blocks_) {
    out.push_back(&b.conv.weight());
    out.push_back(&b.conv.bias());
    out.push_back(&b.bn.gamma());
    out.push_back(&b.bn.beta());
  }
  out.push_back(&fc1_.weight());
  out.push_back(&fc1_.bias());
  out.push_back(&bn_fc1_.gamma());
  out.push_back(&bn_fc1_.beta());
  out.push_back(&fc2_.weight());
  out.push_back(&fc2_.bias());
  return out;
}

std::vector<nn::Buffer*> EmbeddingNetwork::buffers() {
  std::vector<nn::Buffer*> out;
  for (auto& b : blocks_) {
    out.push_back(&b.bn.running_mean());
    out.push_back(&b.bn.running_var());
  }
  out.push_back(&bn_fc1_.running_mean());
  out.push_back(&bn_fc1_.running_var());
  return out;
}

std::vector<LayerParameterCount> EmbeddingNetwork::layer_parameter_counts() const {
  std::vector<LayerParameterCount> out;
  int in = config_.input_channels;
  for (std::size_t i = 0; i < config_.conv_blocks.size(); ++i) {
    const auto& b = config_.conv_blocks[i];
    const std::size_t conv = static_cast<std::size_t>(b.out_channels) * (static_cast<std::size_t>(in) * b.kernel * b.kernel + 1);
    out.push_back({"conv" + std::to_string(i + 1) + "+bn", conv + 2 * static_cast<std::size_t>(b.out_channels)});
    in = b.out_channels;
  }
  out.push_back({"fc1", static_cast<std::size_t>(config_.fc_input + 1) * config_.fc_hidden});
  out.push_back({"bn_fc1", 2 * static_cast<std::size_t>(config_.fc_hidden)});
  out.push_back({"fc2", static_cast<std::size_t>(config_.fc_hidden + 1) * config_.embedding_dim});
  return out;
}

std::size_t EmbeddingNetwork::count_parameters() const {
  // Counted from the live tensors rather than the config formula.
  std::size_t total = 0;
  for (const auto& b : blocks_) {
    total += b.conv.weight().value.size() + b.conv.bias().value.size();
    total += b.bn.gamma().value.size() + b.bn.beta().value.size();
  }
  total += fc1_.weight().value.size() + fc1_.bias().value.size();
  total += bn_fc1_.gamma().value.size() + bn_fc1_.beta().value.size();
  total += fc2_.weight().value.size() + fc2_.bias().value.size();
  return total;
}

nn::Tensor patches_to_tensor(std::span<const std::span<const std::uint8_t>> patches, int size) {
  nn::Tensor t(static_cast<int>(patches.size()), size, size, 3);
  const std::size_t per = t.sample_size();
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (patches[i].size() != per) throw ShapeError("patch has the wrong number of bytes");
    float* dst = t.sample(static_cast<int>(i));
    for (std::size_t k = 0; k < per; ++k) dst[k] = patches[i][k] / 255.0f;
  }
  return t;
}

}  // namespace tae
