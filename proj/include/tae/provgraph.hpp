#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace tae {

struct DissimilarityMatrix;

struct GraphEdge {
  std::string a;
  std::string b;
  std::optional<double> weight;

  bool operator==(const GraphEdge&) const = default;
};

/// Undirected graph over image identifiers. Ground-truth journals carry no
/// weights; spanning trees built from a matrix do.
struct ProvenanceGraph {
  std::vector<std::string> nodes;
  std::vector<GraphEdge> edges;

  bool operator==(const ProvenanceGraph&) const = default;
};

/// Throws InvalidInput on dangling endpoints, self-loops or duplicate edges.
void validate(const ProvenanceGraph& g);

/// Minimum spanning tree by Kruskal's algorithm. Equal weights are broken by
/// (smaller index, larger index) in matrix order, so the result is a pure
/// function of the matrix.
ProvenanceGraph kruskal_spanning_tree(const DissimilarityMatrix& d);

double total_weight(const ProvenanceGraph& g);

enum class GraphFormat { json, dot };

nlohmann::json to_json(const ProvenanceGraph& g);
ProvenanceGraph graph_from_json(const nlohmann::json& j);
/// Graphviz undirected graph; weights printed with four decimals.
std::string to_dot(const ProvenanceGraph& g);

void export_graph(const ProvenanceGraph& g, GraphFormat format, const std::filesystem::path& path);
ProvenanceGraph import_graph(const std::filesystem::path& path);

}  // namespace tae
