#include "tae/journal.hpp"

#include <cstdio>
#include <fstream>

#include "tae/error.hpp"

namespace tae {
namespace {

using nlohmann::json;

std::string node_name(const std::string& case_id, int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_n%02d", index);
  return case_id + buf;
}

bool side_ok(const Image& img, const JournalConfig& c) {
  return img.width >= c.min_side && img.height >= c.min_side && img.width <= c.max_side &&
         img.height <= c.max_side;
}

}  // namespace

json to_json(const JournalConfig& c) {
  return {{"pool", to_json(c.pool)}, {"min_chain", c.min_chain}, {"max_chain", c.max_chain},
          {"min_side", c.min_side},  {"max_side", c.max_side},   {"max_attempts", c.max_attempts}};
}

JournalConfig journal_config_from_json(const json& j) {
  JournalConfig c;
  if (j.contains("pool")) c.pool = transform_pool_from_json(j.at("pool"));
  c.min_chain = j.value("min_chain", c.min_chain);
  c.max_chain = j.value("max_chain", c.max_chain);
  c.min_side = j.value("min_side", c.min_side);
  c.max_side = j.value("max_side", c.max_side);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  return c;
}

JournalCase make_synthetic_journal(const Image& seed, const std::string& case_id, int n_nodes,
                                   double branching, Rng& rng, const JournalConfig& config) {
  if (n_nodes < 2) throw InvalidConfiguration("a journal needs at least two nodes");
  if (config.min_chain < 1 || config.max_chain < config.min_chain) {
    throw InvalidConfiguration("bad chain length range");
  }
  JournalCase out;
  out.journal.case_id = case_id;
  out.journal.nodes.push_back(node_name(case_id, 0));
  out.images.push_back(seed);
  out.parent.push_back(-1);
  out.depth.push_back(0);

  TransformPool photometric = config.pool;
  std::erase_if(photometric.enabled, [](TransformKind k) { return is_geometric(k); });

  for (int i = 1; i < n_nodes; ++i) {
    const int last = i - 1;
    const int parent = uniform_real(rng, 0, 1) < branching ? uniform_int(rng, 0, last) : last;
    const int length = uniform_int(rng, config.min_chain, config.max_chain);
    ChainResult child;
    bool accepted = false;
    for (int attempt = 0; attempt < config.max_attempts && !accepted; ++attempt) {
      try {
        child = compose_chain(out.images[static_cast<std::size_t>(parent)], length, rng, true, config.pool);
        accepted = side_ok(child.image, config);
      } catch (const DegenerateTransform&) {
      }
    }
    if (!accepted) {
      // Photometric edits keep the parent's size, which already satisfies the
      // bounds. Fall back to them when geometric draws keep failing.
      const int photo_len = std::min<int>(length, static_cast<int>(photometric.enabled.size()));
      child = compose_chain(out.images[static_cast<std::size_t>(parent)], std::max(1, photo_len), rng,
                            true, photometric);
    }
    const std::string name = node_name(case_id, i);
    const std::string& parent_name = out.journal.nodes[static_cast<std::size_t>(parent)];
    out.journal.edges.emplace_back(parent_name, name);
    out.journal.chains.emplace(edge_key(parent_name, name), child.chain);
    out.journal.nodes.push_back(name);
    out.parent.push_back(parent);
    out.depth.push_back(out.depth[static_cast<std::size_t>(parent)] +
                        static_cast<int>(child.chain.specs.size()));
    out.images.push_back(std::move(child.image));
  }
  return out;
}

json to_json(const GroundTruthJournal& j) {
  json edges = json::array();
  for (const auto& [a, b] : j.edges) edges.push_back({a, b});
  json chains = json::object();
  for (const auto& [k, c] : j.chains) chains[k] = to_json(c);
  return {{"case_id", j.case_id}, {"nodes", j.nodes}, {"edges", edges}, {"chains", chains}};
}

GroundTruthJournal journal_from_json(const json& j) {
  GroundTruthJournal out;
  out.case_id = j.at("case_id").get<std::string>();
  out.nodes = j.at("nodes").get<std::vector<std::string>>();
  for (const auto& e : j.at("edges")) {
    out.edges.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
  }
  if (j.contains("chains")) {
    for (const auto& [k, c] : j.at("chains").items()) out.chains.emplace(k, transform_chain_from_json(c));
  }
  return out;
}

ProvenanceGraph journal_graph(const GroundTruthJournal& j) {
  ProvenanceGraph g;
  g.nodes = j.nodes;
  for (const auto& [a, b] : j.edges) g.edges.push_back({a, b, std::nullopt});
  return g;
}

void write_journal_case(const JournalCase& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < c.images.size(); ++i) {
    write_image(c.images[i], dir / (c.journal.nodes[i] + ".png"));
  }
  std::ofstream os(dir / "journal.json", std::ios::binary);
  if (!os) throw FileError("cannot write " + (dir / "journal.json").string());
  os << to_json(c.journal).dump(1) << '\n';
}

GroundTruthJournal read_journal(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot read journal " + path.string());
  try {
    return journal_from_json(json::parse(is));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

}  // namespace tae
