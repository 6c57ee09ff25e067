#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "tae/provgraph.hpp"

namespace tae {

struct GraphScore {
  double vo = 0;
  double eo = 0;
  double veo = 0;

  bool operator==(const GraphScore&) const = default;
};

/// F1 over node sets. Throws InvalidCase when the ground truth has no nodes.
double vertex_overlap(const ProvenanceGraph& gt, const ProvenanceGraph& cand);
/// F1 over unordered edge sets. A ground truth without edges scores 1 against
/// an edgeless candidate and 0 otherwise.
double edge_overlap(const ProvenanceGraph& gt, const ProvenanceGraph& cand);
/// F1 over the disjoint union of nodes and edges.
double vertex_edge_overlap(const ProvenanceGraph& gt, const ProvenanceGraph& cand);
GraphScore score_graph(const ProvenanceGraph& gt, const ProvenanceGraph& cand);

struct ScoredCase {
  std::string case_id;
  GraphScore score;
};

struct BatchScore {
  GraphScore mean;
  /// Population standard deviation.
  GraphScore stddev;
  std::vector<ScoredCase> cases;
};

struct ScoreCase {
  std::string case_id;
  ProvenanceGraph gt;
  ProvenanceGraph cand;
};

/// Throws InvalidInput on an empty case list.
BatchScore score_batch(const std::vector<ScoreCase>& cases);

/// case_id,vo,eo,veo with one row per case.
std::string report_csv(const BatchScore& batch);
nlohmann::json summary_json(const BatchScore& batch);

}  // namespace tae
