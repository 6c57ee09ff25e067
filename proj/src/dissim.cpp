#include "tae/dissim.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "tae/error.hpp"
#include "tae/rankloss.hpp"

namespace tae {
namespace {

using nlohmann::json;

// Row-major |A| x |B| distance table.
std::vector<double> distance_table(const FeatureSet& a, const FeatureSet& b) {
  if (a.size() == 0 || b.size() == 0) throw EmptySet("cannot match an empty feature set");
  if (a.dim != b.dim) throw ShapeError("feature sets disagree on dimension");
  std::vector<double> t(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) t[i * b.size() + j] = pairwise_distance(a.embedding(i), b.embedding(j));
  }
  return t;
}

}  // namespace

std::vector<PatchMatch> mutual_best_matches(const FeatureSet& a, const FeatureSet& b) {
  const auto t = distance_table(a, b);
  const std::size_t na = a.size(), nb = b.size();
  std::vector<std::size_t> row_best(na, 0), col_best(nb, 0);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 1; j < nb; ++j) {
      if (t[i * nb + j] < t[i * nb + row_best[i]]) row_best[i] = j;
    }
  }
  for (std::size_t j = 0; j < nb; ++j) {
    for (std::size_t i = 1; i < na; ++i) {
      if (t[i * nb + j] < t[col_best[j] * nb + j]) col_best[j] = i;
    }
  }
  std::vector<PatchMatch> out;
  for (std::size_t i = 0; i < na; ++i) {
    const std::size_t j = row_best[i];
    if (col_best[j] == i) out.push_back({i, j, t[i * nb + j]});
  }
  return out;
}

double image_dissimilarity(const FeatureSet& a, const FeatureSet& b) {
  const auto matches = mutual_best_matches(a, b);
  if (!matches.empty()) {
    // Summed in ascending order so swapping the arguments gives the same bits.
    std::vector<double> d;
    d.reserve(matches.size());
    for (const auto& m : matches) d.push_back(m.distance);
    std::sort(d.begin(), d.end());
    double sum = 0;
    for (double x : d) sum += x;
    return sum / static_cast<double>(d.size());
  }
  // The smallest table entry is always a mutual match, so this only runs on
  // non-finite distances.
  const auto t = distance_table(a, b);
  const std::size_t na = a.size(), nb = b.size();
  double row_sum = 0, col_sum = 0;
  for (std::size_t i = 0; i < na; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nb; ++j) best = std::min(best, t[i * nb + j]);
    row_sum += best;
  }
  for (std::size_t j = 0; j < nb; ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < na; ++i) best = std::min(best, t[i * nb + j]);
    col_sum += best;
  }
  return 0.5 * (row_sum / static_cast<double>(na) + col_sum / static_cast<double>(nb));
}

DissimilarityMatrix build_matrix(const std::vector<FeatureSet>& sets) {
  if (sets.size() < 2) throw InvalidInput("a dissimilarity matrix needs at least two images");
  std::set<std::string> seen;
  DissimilarityMatrix d;
  for (const auto& s : sets) {
    if (!seen.insert(s.image_id).second) throw InvalidInput("duplicate image id " + s.image_id);
    d.image_ids.push_back(s.image_id);
  }
  const std::size_t k = sets.size();
  d.values.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double v = image_dissimilarity(sets[i], sets[j]);
      d.values[i][j] = v;
      d.values[j][i] = v;
    }
  }
  return d;
}

json to_json(const DissimilarityMatrix& d) { return {{"image_ids", d.image_ids}, {"values", d.values}}; }

DissimilarityMatrix dissimilarity_from_json(const json& j) {
  DissimilarityMatrix d;
  d.image_ids = j.at("image_ids").get<std::vector<std::string>>();
  d.values = j.at("values").get<std::vector<std::vector<double>>>();
  if (d.values.size() != d.image_ids.size()) throw InvalidInput("matrix row count differs from id count");
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.values[i].size() != d.size()) throw InvalidInput("matrix is not square");
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (d.values[i][j] != d.values[j][i]) throw InvalidInput("matrix is not symmetric");
    }
    if (d.values[i][i] != 0) throw InvalidInput("matrix diagonal is not zero");
  }
  return d;
}

}  // namespace tae
