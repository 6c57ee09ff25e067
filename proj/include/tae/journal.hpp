#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tae/image.hpp"
#include "tae/provgraph.hpp"
#include "tae/rng.hpp"
#include "tae/transforms.hpp"

namespace tae {

/// Ground-truth derivation tree. Each edge is stored (parent, child) and the
/// chain that produced the child is keyed by edge_key(parent, child).
struct GroundTruthJournal {
  std::string case_id;
  std::vector<std::string> nodes;
  std::vector<std::pair<std::string, std::string>> edges;
  std::map<std::string, TransformChain> chains;

  bool operator==(const GroundTruthJournal&) const = default;
};

inline std::string edge_key(const std::string& parent, const std::string& child) {
  return parent + "--" + child;
}

struct JournalConfig {
  TransformPool pool = TransformPool::standard();
  int min_chain = 1;
  int max_chain = 3;
  /// Children outside [min_side, max_side] are redrawn.
  int min_side = 96;
  int max_side = 384;
  int max_attempts = 25;
};

nlohmann::json to_json(const JournalConfig& c);
JournalConfig journal_config_from_json(const nlohmann::json& j);

struct JournalCase {
  GroundTruthJournal journal;
  std::vector<Image> images;   // aligned with journal.nodes
  std::vector<int> parent;     // -1 for the root
  std::vector<int> depth;      // transforms applied since the root
};

/// Grows a random derivation tree from `seed`. Each new node is a transformed
/// copy (min_chain..max_chain pooled transforms, no repeated kind) of an
/// existing node: with probability `branching` a uniformly chosen one,
/// otherwise the most recent one, so 0 yields a chain and 1 a uniform
/// random recursive tree.
JournalCase make_synthetic_journal(const Image& seed, const std::string& case_id, int n_nodes,
                                   double branching, Rng& rng, const JournalConfig& config = {});

nlohmann::json to_json(const GroundTruthJournal& j);
GroundTruthJournal journal_from_json(const nlohmann::json& j);

/// Undirected view used for scoring.
ProvenanceGraph journal_graph(const GroundTruthJournal& j);

/// Writes `<dir>/journal.json` and one PNG per node named `<node>.png`.
void write_journal_case(const JournalCase& c, const std::filesystem::path& dir);
GroundTruthJournal read_journal(const std::filesystem::path& path);

}  // namespace tae
