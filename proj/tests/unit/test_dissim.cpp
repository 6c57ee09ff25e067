#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "tae/dissim.hpp"
#include "tae/error.hpp"
#include "tae/rankloss.hpp"

namespace tae {
namespace {

FeatureSet random_set(std::size_t n, int dim, Rng& rng, const std::string& id) {
  FeatureSet fs;
  fs.image_id = id;
  fs.dim = dim;
  for (std::size_t i = 0; i < n; ++i) {
    fs.patches.push_back({id, static_cast<double>(i), 0.0, 64});
    const auto v = testing::random_unit(rng, dim);
    fs.embeddings.insert(fs.embeddings.end(), v.begin(), v.end());
  }
  return fs;
}

FeatureSet perturbed(const FeatureSet& base, double sigma, Rng& rng, const std::string& id) {
  FeatureSet fs = base;
  fs.image_id = id;
  std::normal_distribution<double> g(0.0, sigma);
  for (std::size_t i = 0; i < fs.size(); ++i) {
    double norm = 0;
    for (int k = 0; k < fs.dim; ++k) {
      float& v = fs.embeddings[i * static_cast<std::size_t>(fs.dim) + static_cast<std::size_t>(k)];
      v += static_cast<float>(g(rng));
      norm += double(v) * v;
    }
    norm = std::sqrt(norm);
    for (int k = 0; k < fs.dim; ++k) fs.embeddings[i * static_cast<std::size_t>(fs.dim) + static_cast<std::size_t>(k)] /= static_cast<float>(norm);
  }
  return fs;
}

std::vector<std::vector<double>> table(const FeatureSet& a, const FeatureSet& b) {
  std::vector<std::vector<double>> t(a.size(), std::vector<double>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) t[i][j] = pairwise_distance(a.embedding(i), b.embedding(j));
  return t;
}

// Row argmin intersected with column argmin, first index on ties.
std::vector<PatchMatch> oracle_matches(const FeatureSet& a, const FeatureSet& b) {
  const auto t = table(a, b);
  std::vector<std::size_t> row(a.size()), col(b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    row[i] = static_cast<std::size_t>(std::min_element(t[i].begin(), t[i].end()) - t[i].begin());
  for (std::size_t j = 0; j < b.size(); ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < a.size(); ++i)
      if (t[i][j] < t[best][j]) best = i;
    col[j] = best;
  }
  std::vector<PatchMatch> out;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (col[row[i]] == i) out.push_back({i, row[i], t[i][row[i]]});
  return out;
}

TEST(MutualBestMatches, IdenticalSetsMatchIdentity) {
  Rng rng(1);
  const FeatureSet a = random_set(25, 32, rng, "a");
  const auto m = mutual_best_matches(a, a);
  ASSERT_EQ(m.size(), 25u);
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(m[i].a, i);
    EXPECT_EQ(m[i].b, i);
    EXPECT_EQ(m[i].distance, 0.0);
  }
  EXPECT_EQ(image_dissimilarity(a, a), 0.0);
}

TEST(MutualBestMatches, SinglePatchEach) {
  Rng rng(2);
  const FeatureSet a = random_set(1, 16, rng, "a"), b = random_set(1, 16, rng, "b");
  const auto m = mutual_best_matches(a, b);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].a, 0u);
  EXPECT_EQ(m[0].b, 0u);
}

TEST(MutualBestMatches, MatchesExhaustiveTable) {
  Rng rng(3);
  for (int t = 0; t < 30; ++t) {
    const FeatureSet a = random_set(20, 32, rng, "a"), b = random_set(30, 32, rng, "b");
    EXPECT_EQ(mutual_best_matches(a, b), oracle_matches(a, b));
  }
}

TEST(MutualBestMatches, TiesGoToLowestIndex) {
  FeatureSet a;
  a.image_id = "a";
  a.dim = 2;
  a.patches = {{"a", 0, 0, 64}};
  a.embeddings = {1, 0};
  FeatureSet b;
  b.image_id = "b";
  b.dim = 2;
  b.patches = {{"b", 0, 0, 64}, {"b", 1, 0, 64}};
  b.embeddings = {0, 1, 0, 1};
  const auto m = mutual_best_matches(a, b);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].b, 0u);
}

TEST(MutualBestMatches, Errors) {
  Rng rng(4);
  const FeatureSet a = random_set(3, 8, rng, "a");
  FeatureSet empty;
  empty.dim = 8;
  EXPECT_THROW(mutual_best_matches(a, empty), EmptySet);
  EXPECT_THROW(mutual_best_matches(empty, a), EmptySet);
  const FeatureSet c = random_set(3, 16, rng, "c");
  EXPECT_THROW(mutual_best_matches(a, c), ShapeError);
}

TEST(ImageDissimilarity, EqualsOracleMeanAndIsSymmetric) {
  Rng rng(5);
  for (int t = 0; t < 30; ++t) {
    const FeatureSet a = random_set(1 + t % 17, 24, rng, "a"), b = random_set(1 + (t * 7) % 23, 24, rng, "b");
    const auto m = oracle_matches(a, b);
    ASSERT_FALSE(m.empty());
    double mean = 0;
    for (const auto& p : m) mean += p.distance;
    mean /= static_cast<double>(m.size());
    EXPECT_NEAR(image_dissimilarity(a, b), mean, 1e-6);
    EXPECT_EQ(image_dissimilarity(a, b), image_dissimilarity(b, a));
  }
}

TEST(ImageDissimilarity, PermutationInvariant) {
  Rng rng(6);
  const FeatureSet a = random_set(15, 16, rng, "a"), b = random_set(19, 16, rng, "b");
  std::vector<std::size_t> perm(b.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  FeatureSet c = b;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    c.patches[i] = b.patches[perm[i]];
    std::copy_n(b.embedding(perm[i]).begin(), 16, c.embeddings.begin() + static_cast<std::ptrdiff_t>(i * 16));
  }
  auto distances = [](std::vector<PatchMatch> m) {
    std::vector<double> d;
    for (const auto& p : m) d.push_back(p.distance);
    std::sort(d.begin(), d.end());
    return d;
  };
  EXPECT_EQ(distances(mutual_best_matches(a, b)), distances(mutual_best_matches(a, c)));
  EXPECT_NEAR(image_dissimilarity(a, b), image_dissimilarity(a, c), 1e-12);
}

TEST(BuildMatrix, TwoSets) {
  Rng rng(7);
  const std::vector<FeatureSet> sets{random_set(5, 8, rng, "x"), random_set(6, 8, rng, "y")};
  const auto d = build_matrix(sets);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d(0, 0), 0.0);
  EXPECT_EQ(d(1, 1), 0.0);
  EXPECT_EQ(d(0, 1), d(1, 0));
  EXPECT_EQ(d(0, 1), image_dissimilarity(sets[0], sets[1]));
  EXPECT_EQ(d.image_ids, (std::vector<std::string>{"x", "y"}));
}

TEST(BuildMatrix, FiveSetsSymmetricInRange) {
  Rng rng(8);
  std::vector<FeatureSet> sets;
  for (int i = 0; i < 5; ++i) sets.push_back(random_set(10, 16, rng, "s" + std::to_string(i)));
  const auto d = build_matrix(sets);
  int off = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(d(i, i), 0.0);
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_EQ(d(i, j), d(j, i));
      EXPECT_GE(d(i, j), 0.0);
      EXPECT_LE(d(i, j), 2.0);
      if (i < j) {
        ++off;
        EXPECT_EQ(d(i, j), image_dissimilarity(sets[i], sets[j]));
      }
    }
  }
  EXPECT_EQ(off, 10);
}

TEST(BuildMatrix, PerturbationMagnitudeOrdersDissimilarity) {
  Rng rng(9);
  const FeatureSet s1 = random_set(40, 64, rng, "s1");
  const FeatureSet s2 = perturbed(s1, 0.01, rng, "s2");
  const FeatureSet s3 = perturbed(s1, 0.2, rng, "s3");
  const auto d = build_matrix({s1, s2, s3});
  EXPECT_LT(d(0, 1), d(0, 2));
}

TEST(BuildMatrix, Errors) {
  Rng rng(10);
  const FeatureSet a = random_set(3, 8, rng, "a");
  EXPECT_THROW(build_matrix({a}), InvalidInput);
  EXPECT_THROW(build_matrix({a, a}), InvalidInput);
}

TEST(DissimilarityMatrix, JsonRoundTripAndValidation) {
  DissimilarityMatrix d{{"a", "b", "c"}, {{0, 0.5, 0.25}, {0.5, 0, 0.125}, {0.25, 0.125, 0}}};
  EXPECT_EQ(dissimilarity_from_json(to_json(d)), d);
  auto j = to_json(d);
  j["values"][0][1] = 0.75;
  EXPECT_THROW(dissimilarity_from_json(j), InvalidInput);
  j = to_json(d);
  j["values"][1][1] = 0.1;
  EXPECT_THROW(dissimilarity_from_json(j), InvalidInput);
}

}  // namespace
}  // namespace tae
