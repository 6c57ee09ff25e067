#include <gtest/gtest.h>

#include <fstream>
#include <functional>
#include <map>
#include <set>

#include "helpers.hpp"
#include "tae/error.hpp"
#include "tae/journal.hpp"
#include "tae/keypoints.hpp"
#include "tae/quadgen.hpp"

namespace tae {
namespace {

using testing::scratch_dir;
using testing::textured;

Image checkerboard(int w, int h, int square) {
  Image img(w, h, 3, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t v = ((x / square + y / square) % 2) ? 230 : 20;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = v;
    }
  }
  return img;
}

TEST(DetectKeypoints, ConstantImageHasNone) {
  const Image img(128, 128, 3, 90);
  EXPECT_TRUE(detect_keypoints(img, 100).empty());
}

TEST(DetectKeypoints, CapAndOrdering) {
  const auto kps = detect_keypoints(textured(1, 256, 256), 5);
  ASSERT_FALSE(kps.empty());
  EXPECT_LE(kps.size(), 5u);
  for (std::size_t i = 1; i < kps.size(); ++i) EXPECT_GE(kps[i - 1].response, kps[i].response);
}

TEST(DetectKeypoints, EveryKeypointAdmitsAWindow) {
  const Image img = textured(2, 200, 150);
  for (const auto& k : detect_keypoints(img, 2000)) EXPECT_TRUE(window_fits(k.x, k.y, 64, img.width, img.height));
}

TEST(DetectKeypoints, Errors) {
  EXPECT_THROW(detect_keypoints(textured(3, 63, 200), 10), TooSmallImage);
  EXPECT_THROW(detect_keypoints(textured(3), 0), InvalidConfiguration);
}

// Corners (saddles) outrank the square centers, which respond as blobs at
// the coarser scales. The strongest keypoints must cover every corner found
// by an exhaustive scan of the grid intersections.
TEST(DetectKeypoints, CheckerboardCornersAreFound) {
  const int sq = 16;
  const Image img = checkerboard(192, 192, sq);
  const auto kps = detect_keypoints(img, 2000);
  std::vector<std::pair<double, double>> corners;
  for (int gy = sq; gy < img.height; gy += sq) {
    for (int gx = sq; gx < img.width; gx += sq) {
      if (window_fits(gx - 1, gy - 1, 64, img.width, img.height) && window_fits(gx, gy, 64, img.width, img.height)) {
        corners.emplace_back(gx - 0.5, gy - 0.5);
      }
    }
  }
  ASSERT_GE(kps.size(), corners.size());
  auto near_corner = [&](const Keypoint& k) {
    const double cx = std::round((k.x + 0.5) / sq) * sq - 0.5;
    const double cy = std::round((k.y + 0.5) / sq) * sq - 0.5;
    return std::hypot(k.x - cx, k.y - cy) <= 1.0;
  };
  // Corners whose window only fits on one side of the pixel boundary can
  // also fire, so the corner prefix may be longer than the scan.
  const auto prefix = static_cast<std::size_t>(std::find_if_not(kps.begin(), kps.end(), near_corner) - kps.begin());
  EXPECT_GE(prefix, corners.size());
  for (const auto& [cx, cy] : corners) {
    const bool found = std::any_of(kps.begin(), kps.begin() + static_cast<std::ptrdiff_t>(prefix),
                                   [&](const Keypoint& k) { return std::hypot(k.x - cx, k.y - cy) <= 1.0; });
    EXPECT_TRUE(found) << "corner " << cx << "," << cy;
  }
  for (std::size_t i = prefix; i < kps.size(); ++i) {
    EXPECT_LT(kps[i].response, kps[prefix - 1].response);
    EXPECT_NEAR(std::fmod(kps[i].x, sq), sq / 2.0, 1.0) << kps[i].x;
    EXPECT_NEAR(std::fmod(kps[i].y, sq), sq / 2.0, 1.0) << kps[i].y;
  }
}

QuadrupletBatch batch_for(DifficultyMix mix, std::uint64_t seed, const QuadgenConfig& cfg = {}) {
  Rng rng(seed);
  return make_quadruplets(textured(seed, 256, 256), "anchor", textured(seed + 1000, 256, 256), "neg", mix, 15, rng,
                          cfg);
}

TEST(MakeQuadruplets, HardRecordsOnly) {
  const auto b = batch_for(DifficultyMix::hard, 1);
  ASSERT_FALSE(b.records.empty());
  for (const auto& r : b.records) {
    EXPECT_EQ(r.difficulty, Difficulty::hard);
    const auto pair = std::pair{r.m, r.m + r.n};
    EXPECT_TRUE((pair == std::pair{1, 2} || pair == std::pair{2, 3}));
    EXPECT_NO_THROW(validate(r));
  }
}

TEST(MakeQuadruplets, EasyRecordsOnly) {
  const auto b = batch_for(DifficultyMix::easy, 2);
  ASSERT_FALSE(b.records.empty());
  for (const auto& r : b.records) {
    const auto pair = std::pair{r.m, r.m + r.n};
    EXPECT_TRUE((pair == std::pair{1, 4} || pair == std::pair{2, 5}));
  }
}

TEST(MakeQuadruplets, MixedProducesBoth) {
  QuadgenConfig cfg;
  Rng rng(3);
  const auto b = make_quadruplets(textured(3, 320, 320), "a", textured(4, 256, 256), "n", DifficultyMix::mixed, 60,
                                  rng, cfg);
  std::set<Difficulty> seen;
  for (const auto& r : b.records) seen.insert(r.difficulty);
  EXPECT_EQ(seen.size(), 2u);
}

TEST(MakeQuadruplets, NegativeFromOtherImageAndPatchesStored) {
  const auto b = batch_for(DifficultyMix::mixed, 4);
  for (const auto& r : b.records) {
    EXPECT_NE(r.negative.image_id, r.anchor.image_id);
    for (const auto* ref : {&r.anchor, &r.positive, &r.weak_positive, &r.negative}) {
      EXPECT_TRUE(b.patches.find(*ref).has_value());
      EXPECT_EQ(ref->size, 64);
    }
  }
}

TEST(MakeQuadruplets, IdentityPoolPositiveEqualsAnchor) {
  QuadgenConfig cfg;
  cfg.pool = TransformPool::identity_debug();
  const auto b = batch_for(DifficultyMix::mixed, 5, cfg);
  ASSERT_FALSE(b.records.empty());
  for (const auto& r : b.records) {
    const auto a = b.patches.data(r.anchor), p = b.patches.data(r.positive);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), p.begin()));
  }
}

TEST(MakeQuadruplets, PositiveEqualsReplayedChainCrop) {
  const Image anchor = textured(6, 256, 256);
  Rng rng(6);
  const auto b = make_quadruplets(anchor, "anchor", textured(7, 256, 256), "neg", DifficultyMix::mixed, 10, rng);
  ASSERT_FALSE(b.records.empty());
  for (const auto& r : b.records) {
    ASSERT_EQ(r.chain_ids.size(), 2u);
    const auto& m_chain = b.chains.at(r.chain_ids[0]);
    const auto& n_chain = b.chains.at(r.chain_ids[1]);
    EXPECT_EQ(static_cast<int>(m_chain.specs.size()), r.m);
    EXPECT_EQ(static_cast<int>(n_chain.specs.size()), r.n);
    const auto positive = apply_chain(anchor, m_chain.specs);
    const auto expect_center = map_point(positive.chain.homography, {r.anchor.x, r.anchor.y});
    EXPECT_NEAR(expect_center.x(), r.positive.x, 1e-9);
    EXPECT_NEAR(expect_center.y(), r.positive.y, 1e-9);
    const Image crop = crop_patch(positive.image, r.positive.x, r.positive.y, 64);
    const auto stored = b.patches.data(r.positive);
    EXPECT_TRUE(std::equal(stored.begin(), stored.end(), crop.pixels.begin()));
    // No kind repeats across the whole m+n sequence.
    std::set<TransformKind> kinds;
    for (const auto& s : m_chain.specs) EXPECT_TRUE(kinds.insert(s.kind).second);
    for (const auto& s : n_chain.specs) EXPECT_TRUE(kinds.insert(s.kind).second);
  }
}

TEST(MakeQuadruplets, QuarterTurnPositiveIsRotatedAnchorPatch) {
  // Oracle independent of the warp code: rotate the anchor patch itself.
  const Image anchor = textured(8, 240, 200);
  const TransformSpec rot{TransformKind::rotation, {{"degrees", 90}}};
  const auto turned = apply_transform(anchor, rot);
  const double cx = 120, cy = 100;
  const auto c = map_point(turned.mapping, {cx, cy});
  const Image a = crop_patch(anchor, cx, cy, 64);
  const Image p = crop_patch(turned.image, c.x(), c.y(), 64);
  // Check pixels a fixed distance inside the patch, which rotate onto pixels
  // still inside the positive window.
  int checked = 0;
  for (int y = 4; y < 60; ++y) {
    for (int x = 4; x < 60; ++x) {
      const auto q = map_point(turned.mapping, {cx - 32 + x, cy - 32 + y});
      const int px = static_cast<int>(std::lround(q.x() - (std::lround(c.x()) - 32)));
      const int py = static_cast<int>(std::lround(q.y() - (std::lround(c.y()) - 32)));
      if (px < 0 || py < 0 || px >= 64 || py >= 64) continue;
      for (int ch = 0; ch < 3; ++ch) ASSERT_EQ(p.at(px, py, ch), a.at(x, y, ch));
      ++checked;
    }
  }
  EXPECT_GT(checked, 2500);
}

TEST(MakeQuadruplets, NonIdentityChainChangesThePatch) {
  const auto b = batch_for(DifficultyMix::mixed, 9);
  for (const auto& r : b.records) {
    const auto a = b.patches.data(r.anchor), p = b.patches.data(r.positive);
    EXPECT_FALSE(std::equal(a.begin(), a.end(), p.begin()));
  }
}

TEST(MakeQuadruplets, Deterministic) {
  const auto a = batch_for(DifficultyMix::mixed, 10), b = batch_for(DifficultyMix::mixed, 10);
  EXPECT_EQ(a.records, b.records);
  EXPECT_EQ(a.patches.refs(), b.patches.refs());
}

QuadrupletRecord sample_record(const std::string& id, int i) {
  QuadrupletRecord r;
  r.anchor = {id, 10.0 + i, 20.25, 64};
  r.positive = {id + "/p", 11.5, 19.0 + i, 64};
  r.weak_positive = {id + "/wp", 12.0, 18.0, 64};
  r.negative = {"other", 40.0, 40.0, 64};
  r.m = 2;
  r.n = 3;
  r.difficulty = Difficulty::easy;
  r.chain_ids = {id + "/m", id + "/n"};
  return r;
}

TEST(Manifest, EmptyRoundTrip) {
  const auto dir = scratch_dir("manifest_empty");
  write_manifest({}, dir / "m.jsonl");
  EXPECT_EQ(std::filesystem::file_size(dir / "m.jsonl"), 0u);
  EXPECT_TRUE(read_manifest(dir / "m.jsonl").empty());
}

TEST(Manifest, HundredRecordsKeepOrder) {
  const auto dir = scratch_dir("manifest_100");
  std::vector<QuadrupletRecord> records;
  for (int i = 0; i < 100; ++i) records.push_back(sample_record("img" + std::to_string(i), i));
  write_manifest(records, dir / "m.jsonl");
  std::ifstream in(dir / "m.jsonl");
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 100);
  EXPECT_EQ(read_manifest(dir / "m.jsonl"), records);
}

TEST(Manifest, NonAsciiIdsSurvive) {
  const auto dir = scratch_dir("manifest_utf8");
  Rng rng(5);
  // Random code points from several scripts, encoded as UTF-8.
  auto utf8 = [](char32_t cp) {
    std::string s;
    if (cp < 0x80) {
      s += static_cast<char>(cp);
    } else if (cp < 0x800) {
      s += static_cast<char>(0xC0 | (cp >> 6));
      s += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      s += static_cast<char>(0xE0 | (cp >> 12));
      s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      s += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      s += static_cast<char>(0xF0 | (cp >> 18));
      s += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      s += static_cast<char>(0x80 | (cp & 0x3F));
    }
    return s;
  };
  const std::vector<std::pair<char32_t, char32_t>> blocks{{0xC0, 0x24F}, {0x391, 0x3C9}, {0x4E00, 0x4FFF}, {0x1F600, 0x1F64F}, {0x20, 0x7E}};
  std::vector<QuadrupletRecord> records;
  for (int i = 0; i < 50; ++i) {
    std::string id;
    for (int k = 0; k < 8; ++k) {
      const auto& [lo, hi] = blocks[static_cast<std::size_t>(uniform_int(rng, 0, 4))];
      id += utf8(static_cast<char32_t>(uniform_int(rng, static_cast<int>(lo), static_cast<int>(hi))));
    }
    records.push_back(sample_record(id, i));
  }
  write_manifest(records, dir / "m.jsonl");
  const auto back = read_manifest(dir / "m.jsonl");
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i].anchor.image_id, records[i].anchor.image_id);
  EXPECT_EQ(back, records);
}

TEST(Manifest, MalformedLineReportsLineNumber) {
  const auto dir = scratch_dir("manifest_bad");
  write_manifest({sample_record("a", 0), sample_record("b", 1)}, dir / "m.jsonl");
  {
    std::ofstream out(dir / "m.jsonl", std::ios::app);
    out << "{\"anchor\": oops}\n";
  }
  try {
    read_manifest(dir / "m.jsonl");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.location(), 3u);
  }
}

TEST(Manifest, InvalidRecordIsRejected) {
  auto r = sample_record("a", 0);
  r.difficulty = Difficulty::hard;  // (2, 5) is an easy pair
  EXPECT_THROW(validate(r), InvalidInput);
  r = sample_record("a", 0);
  r.negative.image_id = r.anchor.image_id;
  EXPECT_THROW(validate(r), InvalidInput);
}

TEST(Dataset, SaveLoadRoundTrip) {
  const auto dir = scratch_dir("dataset");
  auto b = batch_for(DifficultyMix::mixed, 11);
  QuadrupletDataset ds{b.records, b.patches};
  save_dataset(ds, dir);
  const auto back = load_dataset(dir);
  EXPECT_EQ(back.records, ds.records);
  ASSERT_EQ(back.patches.size(), ds.patches.size());
  for (std::size_t i = 0; i < ds.patches.size(); ++i) {
    const auto x = ds.patches.data(i), y = back.patches.data(i);
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
  }
}

TEST(Dataset, SplitByAnchorKeepsImagesApart) {
  std::vector<QuadrupletRecord> records;
  for (int img = 0; img < 20; ++img) {
    for (int k = 0; k < 5; ++k) records.push_back(sample_record("img" + std::to_string(img), k));
  }
  Rng rng(1);
  const auto [train, val] = split_by_anchor(records, 0.1, rng);
  EXPECT_EQ(train.size() + val.size(), records.size());
  EXPECT_EQ(val.size(), 10u);
  std::set<std::string> t, v;
  for (const auto& r : train) t.insert(r.anchor.image_id);
  for (const auto& r : val) v.insert(r.anchor.image_id);
  for (const auto& id : v) EXPECT_FALSE(t.count(id));
}

// ---- journals --------------------------------------------------------------

bool is_tree(const ProvenanceGraph& g) {
  if (g.edges.size() + 1 != g.nodes.size()) return false;
  std::map<std::string, std::string> parent;
  for (const auto& n : g.nodes) parent[n] = n;
  std::function<std::string(const std::string&)> find = [&](const std::string& x) {
    return parent[x] == x ? x : parent[x] = find(parent[x]);
  };
  for (const auto& e : g.edges) {
    const auto a = find(e.a), b = find(e.b);
    if (a == b) return false;
    parent[a] = b;
  }
  return true;
}

TEST(Journal, TwoNodesOneEdge) {
  Rng rng(1);
  const Image seed = textured(1, 200, 200);
  const auto jc = make_synthetic_journal(seed, "c", 2, 0.5, rng);
  ASSERT_EQ(jc.journal.edges.size(), 1u);
  const auto& [parent, child] = jc.journal.edges[0];
  const auto& chain = jc.journal.chains.at(edge_key(parent, child));
  EXPECT_EQ(apply_chain(jc.images[0], chain.specs).image, jc.images[1]);
}

TEST(Journal, TenNodesFormATree) {
  for (double branching : {0.0, 0.5, 1.0}) {
    Rng rng(2);
    const auto jc = make_synthetic_journal(textured(2, 200, 200), "c", 10, branching, rng);
    EXPECT_EQ(jc.journal.edges.size(), 9u);
    const auto g = journal_graph(jc.journal);
    EXPECT_TRUE(is_tree(g));
    // Removing any edge disconnects the graph.
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
      ProvenanceGraph cut = g;
      cut.edges.erase(cut.edges.begin() + static_cast<std::ptrdiff_t>(k));
      std::map<std::string, std::set<std::string>> adj;
      for (const auto& e : cut.edges) {
        adj[e.a].insert(e.b);
        adj[e.b].insert(e.a);
      }
      std::set<std::string> seen{cut.nodes[0]};
      std::vector<std::string> stack{cut.nodes[0]};
      while (!stack.empty()) {
        const auto x = stack.back();
        stack.pop_back();
        for (const auto& y : adj[x]) {
          if (seen.insert(y).second) stack.push_back(y);
        }
      }
      EXPECT_LT(seen.size(), cut.nodes.size());
    }
  }
}

TEST(Journal, DepthEqualsSummedChainLengths) {
  Rng rng(3);
  const auto jc = make_synthetic_journal(textured(3, 200, 200), "c", 9, 1.0, rng);
  for (std::size_t i = 0; i < jc.images.size(); ++i) {
    int depth = 0;
    for (int k = static_cast<int>(i); jc.parent[static_cast<std::size_t>(k)] >= 0; k = jc.parent[static_cast<std::size_t>(k)]) {
      const auto& p = jc.journal.nodes[static_cast<std::size_t>(jc.parent[static_cast<std::size_t>(k)])];
      const auto& c = jc.journal.nodes[static_cast<std::size_t>(k)];
      depth += static_cast<int>(jc.journal.chains.at(edge_key(p, c)).specs.size());
    }
    EXPECT_EQ(depth, jc.depth[i]);
  }
}

TEST(Journal, ChainBranchingZeroIsAPath) {
  Rng rng(4);
  const auto jc = make_synthetic_journal(textured(4, 200, 200), "c", 6, 0.0, rng);
  for (std::size_t i = 1; i < jc.parent.size(); ++i) EXPECT_EQ(jc.parent[i], static_cast<int>(i) - 1);
}

TEST(Journal, WriteReadRoundTrip) {
  const auto dir = scratch_dir("journal");
  Rng rng(5);
  const auto jc = make_synthetic_journal(textured(5, 160, 160), "case_x", 4, 1.0, rng);
  write_journal_case(jc, dir);
  const auto back = read_journal(dir / "journal.json");
  EXPECT_EQ(back.case_id, jc.journal.case_id);
  EXPECT_EQ(back.nodes, jc.journal.nodes);
  EXPECT_EQ(back.edges, jc.journal.edges);
  for (std::size_t i = 0; i < jc.images.size(); ++i) {
    EXPECT_EQ(read_image(dir / (jc.journal.nodes[i] + ".png")), jc.images[i]);
  }
}

}  // namespace
}  // namespace tae
