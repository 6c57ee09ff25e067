#include "tae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "tae/error.hpp"

namespace tae {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'T', 'A', 'E', 'C', 'K', 'P', 'T', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host order and must be little-endian");

}  // namespace

Checkpoint snapshot(EmbeddingNetwork& net, json metadata) {
  Checkpoint ckpt;
  ckpt.config = net.config();
  for (const auto* p : net.parameters()) ckpt.state.push_back({p->name, p->value});
  for (const auto* b : net.buffers()) ckpt.state.push_back({b->name, b->value});
  ckpt.metadata = std::move(metadata);
  return ckpt;
}

void restore(EmbeddingNetwork& net, const Checkpoint& ckpt) {
  std::vector<std::vector<float>*> targets;
  std::vector<const std::string*> names;
  for (auto* p : net.parameters()) {
    targets.push_back(&p->value);
    names.push_back(&p->name);
  }
  for (auto* b : net.buffers()) {
    targets.push_back(&b->value);
    names.push_back(&b->name);
  }
  if (targets.size() != ckpt.state.size()) throw ShapeError("checkpoint does not match the network layout");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (*names[i] != ckpt.state[i].name || targets[i]->size() != ckpt.state[i].values.size()) {
      throw ShapeError("checkpoint tensor " + ckpt.state[i].name + " does not match " + *names[i]);
    }
    *targets[i] = ckpt.state[i].values;
  }
}

EmbeddingNetwork network_from_checkpoint(const Checkpoint& ckpt) {
  Rng unused(0);
  EmbeddingNetwork net(ckpt.config, unused);
  restore(net, ckpt);
  return net;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json arrays = json::array();
  for (const auto& a : ckpt.state) arrays.push_back({{"name", a.name}, {"size", a.values.size()}, {"section", "state"}});
  for (const auto& a : ckpt.optimizer) {
    arrays.push_back({{"name", a.name}, {"size", a.values.size()}, {"section", "optimizer"}});
  }
  const std::string header =
      json{{"config", to_json(ckpt.config)}, {"metadata", ckpt.metadata}, {"arrays", arrays}}.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof kMagic);
  const std::uint64_t len = header.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof len);
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto* section : {&ckpt.state, &ckpt.optimizer}) {
    for (const auto& a : *section) {
      os.write(reinterpret_cast<const char*>(a.values.data()),
               static_cast<std::streamsize>(a.values.size() * sizeof(float)));
    }
  }
  if (!os) throw FileError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot read checkpoint " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw ParseError(path.string() + " is not a checkpoint", 0);
  }
  if (!is.read(reinterpret_cast<char*>(&len), sizeof len) || len > (std::uint64_t{1} << 32)) {
    throw ParseError(path.string() + ": bad header length", 0);
  }
  std::string header(len, '\0');
  if (!is.read(header.data(), static_cast<std::streamsize>(len))) {
    throw ParseError(path.string() + ": truncated header", 0);
  }
  Checkpoint ckpt;
  json h;
  try {
    h = json::parse(header);
    ckpt.config = network_config_from_json(h.at("config"));
    ckpt.metadata = h.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  std::size_t index = 0;
  for (const auto& a : h.at("arrays")) {
    NamedArray arr{a.at("name").get<std::string>(), std::vector<float>(a.at("size").get<std::size_t>())};
    if (!is.read(reinterpret_cast<char*>(arr.values.data()),
                 static_cast<std::streamsize>(arr.values.size() * sizeof(float)))) {
      throw ParseError(path.string() + ": truncated array " + arr.name, index);
    }
    (a.at("section").get<std::string>() == "optimizer" ? ckpt.optimizer : ckpt.state).push_back(std::move(arr));
    ++index;
  }
  return ckpt;
}

}  // namespace tae
