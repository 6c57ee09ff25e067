#include "tae/provgraph.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "tae/dissim.hpp"
#include "tae/error.hpp"

namespace tae {
namespace {

using nlohmann::json;

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<int> rank_;
};

std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void validate(const ProvenanceGraph& g) {
  std::set<std::string> nodes;
  for (const auto& n : g.nodes) {
    if (!nodes.insert(n).second) throw InvalidInput("duplicate node " + n);
  }
  std::set<std::pair<std::string, std::string>> edges;
  for (const auto& e : g.edges) {
    if (!nodes.count(e.a) || !nodes.count(e.b)) throw InvalidInput("edge endpoint is not a node: " + e.a + "--" + e.b);
    if (e.a == e.b) throw InvalidInput("self-loop on " + e.a);
    if (!edges.insert(std::minmax(e.a, e.b)).second) throw InvalidInput("duplicate edge " + e.a + "--" + e.b);
  }
}

ProvenanceGraph kruskal_spanning_tree(const DissimilarityMatrix& d) {
  const std::size_t k = d.size();
  if (k < 2) throw InvalidInput("a provenance graph needs at least two images");
  if (d.values.size() != k) throw InvalidInput("matrix row count differs from id count");
  struct Candidate {
    double w;
    std::size_t i, j;
  };
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < k; ++i) {
    if (d.values[i].size() != k) throw InvalidInput("matrix is not square");
    for (std::size_t j = i + 1; j < k; ++j) cands.push_back({d(i, j), i, j});
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
    if (x.w != y.w) return x.w < y.w;
    return std::tie(x.i, x.j) < std::tie(y.i, y.j);
  });
  ProvenanceGraph g;
  g.nodes = d.image_ids;
  DisjointSets sets(k);
  for (const auto& c : cands) {
    if (sets.unite(c.i, c.j)) {
      g.edges.push_back({d.image_ids[c.i], d.image_ids[c.j], c.w});
      if (g.edges.size() == k - 1) break;
    }
  }
  return g;
}

double total_weight(const ProvenanceGraph& g) {
  double sum = 0;
  for (const auto& e : g.edges) sum += e.weight.value_or(0.0);
  return sum;
}

json to_json(const ProvenanceGraph& g) {
  json edges = json::array();
  for (const auto& e : g.edges) {
    json je{{"a", e.a}, {"b", e.b}};
    if (e.weight) je["w"] = *e.weight;
    edges.push_back(std::move(je));
  }
  return {{"nodes", g.nodes}, {"edges", edges}};
}

ProvenanceGraph graph_from_json(const json& j) {
  ProvenanceGraph g;
  g.nodes = j.at("nodes").get<std::vector<std::string>>();
  for (const auto& e : j.at("edges")) {
    GraphEdge edge{e.at("a").get<std::string>(), e.at("b").get<std::string>(), std::nullopt};
    if (e.contains("w") && !e.at("w").is_null()) edge.weight = e.at("w").get<double>();
    g.edges.push_back(std::move(edge));
  }
  validate(g);
  return g;
}

std::string to_dot(const ProvenanceGraph& g) {
  std::ostringstream out;
  out << "graph provenance {\n";
  for (const auto& n : g.nodes) out << "  " << dot_quote(n) << " [label=" << dot_quote(n) << "];\n";
  for (const auto& e : g.edges) {
    out << "  " << dot_quote(e.a) << " -- " << dot_quote(e.b);
    if (e.weight) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.4f", *e.weight);
      out << " [label=\"" << buf << "\", weight=\"" << buf << "\"]";
    }
    out << ";\n";
  }
  out << "}\n";
  return out.str();
}

void export_graph(const ProvenanceGraph& g, GraphFormat format, const std::filesystem::path& path) {
  validate(g);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  if (format == GraphFormat::json) {
    out << to_json(g).dump(2) << '\n';
  } else {
    out << to_dot(g);
  }
  if (!out) throw FileError("failed writing " + path.string());
}

ProvenanceGraph import_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
  return graph_from_json(j);
}

}  // namespace tae
