#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "tae/describe.hpp"

namespace tae {

struct DissimilarityMatrix {
  std::vector<std::string> image_ids;
  std::vector<std::vector<double>> values;

  std::size_t size() const noexcept { return image_ids.size(); }
  double operator()(std::size_t i, std::size_t j) const { return values[i][j]; }
  bool operator==(const DissimilarityMatrix&) const = default;
};

struct PatchMatch {
  std::size_t a = 0;
  std::size_t b = 0;
  double distance = 0;

  bool operator==(const PatchMatch&) const = default;
};

/// Brute-force all-to-all matching that keeps only pairs which are each
/// other's nearest neighbor. Ties resolve to the lowest index. Sorted by `a`.
std::vector<PatchMatch> mutual_best_matches(const FeatureSet& a, const FeatureSet& b);

/// Mean distance over mutual best matches. Without any mutual match, falls
/// back to the mean of the two one-directional best-match means.
double image_dissimilarity(const FeatureSet& a, const FeatureSet& b);

/// All C(k,2) pairwise dissimilarities, mirrored, zero diagonal.
DissimilarityMatrix build_matrix(const std::vector<FeatureSet>& sets);

nlohmann::json to_json(const DissimilarityMatrix& d);
DissimilarityMatrix dissimilarity_from_json(const nlohmann::json& j);

}  // namespace tae
