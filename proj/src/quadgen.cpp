#include "tae/quadgen.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "tae/error.hpp"

namespace tae {
namespace {

using nlohmann::json;

struct Schedule {
  int m;
  int total;
};

constexpr Schedule kEasy[] = {{1, 4}, {2, 5}};
constexpr Schedule kHard[] = {{1, 2}, {2, 3}};

std::string read_line_json_error(const std::string& what, std::size_t line) {
  return "line " + std::to_string(line) + ": " + what;
}

std::set<TransformKind> kinds_of(const TransformChain& chain) {
  std::set<TransformKind> out;
  for (const auto& s : chain.specs) out.insert(s.kind);
  return out;
}

}  // namespace

std::string_view to_string(Difficulty d) { return d == Difficulty::easy ? "easy" : "hard"; }

Difficulty difficulty_from_string(std::string_view s) {
  if (s == "easy") return Difficulty::easy;
  if (s == "hard") return Difficulty::hard;
  throw InvalidInput("unknown difficulty: " + std::string(s));
}

DifficultyMix difficulty_mix_from_string(std::string_view s) {
  if (s == "easy") return DifficultyMix::easy;
  if (s == "hard") return DifficultyMix::hard;
  if (s == "mixed") return DifficultyMix::mixed;
  throw InvalidInput("unknown difficulty mix: " + std::string(s));
}

void validate(const QuadrupletRecord& r) {
  if (r.m < 1 || r.n < 1) throw InvalidInput("m and n must be at least 1");
  const auto& options = r.difficulty == Difficulty::easy ? kEasy : kHard;
  const bool ok = std::any_of(std::begin(options), std::end(options),
                              [&](Schedule s) { return s.m == r.m && s.total == r.m + r.n; });
  if (!ok) {
    throw InvalidInput("(m, m+n) = (" + std::to_string(r.m) + ", " + std::to_string(r.m + r.n) +
                       ") is not a " + std::string(to_string(r.difficulty)) + " schedule");
  }
  if (r.negative.image_id == r.anchor.image_id) {
    throw InvalidInput("negative patch comes from the anchor image");
  }
}

json to_json(const PatchRef& ref) {
  return {{"image_id", ref.image_id}, {"x", ref.x}, {"y", ref.y}, {"size", ref.size}};
}

PatchRef patch_ref_from_json(const json& j) {
  return {j.at("image_id").get<std::string>(), j.at("x").get<double>(), j.at("y").get<double>(),
          j.at("size").get<int>()};
}

json to_json(const QuadrupletRecord& r) {
  return {{"anchor", to_json(r.anchor)},
          {"positive", to_json(r.positive)},
          {"weak_positive", to_json(r.weak_positive)},
          {"negative", to_json(r.negative)},
          {"m", r.m},
          {"n", r.n},
          {"difficulty", std::string(to_string(r.difficulty))},
          {"chain_ids", r.chain_ids}};
}

QuadrupletRecord quadruplet_from_json(const json& j) {
  QuadrupletRecord r;
  r.anchor = patch_ref_from_json(j.at("anchor"));
  r.positive = patch_ref_from_json(j.at("positive"));
  r.weak_positive = patch_ref_from_json(j.at("weak_positive"));
  r.negative = patch_ref_from_json(j.at("negative"));
  r.m = j.at("m").get<int>();
  r.n = j.at("n").get<int>();
  r.difficulty = difficulty_from_string(j.at("difficulty").get<std::string>());
  r.chain_ids = j.at("chain_ids").get<std::vector<std::string>>();
  return r;
}

// --- PatchStore -------------------------------------------------------------

std::size_t PatchStore::add(const PatchRef& ref, const Image& patch) {
  if (patch.width != patch_size_ || patch.height != patch_size_ || patch.channels != 3) {
    throw ShapeError("patch must be " + std::to_string(patch_size_) + "x" +
                     std::to_string(patch_size_) + "x3");
  }
  if (auto slot = find(ref)) return *slot;
  const std::size_t slot = index_.size();
  blob_.insert(blob_.end(), patch.pixels.begin(), patch.pixels.end());
  index_.push_back(ref);
  lookup_.emplace(ref, slot);
  return slot;
}

std::optional<std::size_t> PatchStore::find(const PatchRef& ref) const {
  const auto it = lookup_.find(ref);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::span<const std::uint8_t> PatchStore::data(std::size_t slot) const {
  if (slot >= index_.size()) throw InvalidInput("patch slot out of range");
  return {blob_.data() + slot * patch_bytes(), patch_bytes()};
}

std::span<const std::uint8_t> PatchStore::data(const PatchRef& ref) const {
  const auto slot = find(ref);
  if (!slot) throw InvalidInput("patch not in store: " + ref.image_id);
  return data(*slot);
}

void PatchStore::merge(const PatchStore& other) {
  if (other.patch_size_ != patch_size_) throw ShapeError("patch sizes differ");
  for (std::size_t i = 0; i < other.size(); ++i) {
    if (find(other.index_[i])) continue;
    const auto d = other.data(i);
    blob_.insert(blob_.end(), d.begin(), d.end());
    lookup_.emplace(other.index_[i], index_.size());
    index_.push_back(other.index_[i]);
  }
}

void PatchStore::save(const std::filesystem::path& dir, const std::string& stem) const {
  std::ofstream bin(dir / (stem + ".bin"), std::ios::binary);
  if (!bin) throw FileError("cannot write " + (dir / (stem + ".bin")).string());
  bin.write(reinterpret_cast<const char*>(blob_.data()), static_cast<std::streamsize>(blob_.size()));
  std::ofstream idx(dir / (stem + ".idx.jsonl"), std::ios::binary);
  if (!idx) throw FileError("cannot write " + (dir / (stem + ".idx.jsonl")).string());
  for (const auto& ref : index_) idx << to_json(ref).dump(-1, ' ', false) << '\n';
}

PatchStore PatchStore::load(const std::filesystem::path& dir, const std::string& stem) {
  std::ifstream idx(dir / (stem + ".idx.jsonl"), std::ios::binary);
  if (!idx) throw FileError("cannot read " + (dir / (stem + ".idx.jsonl")).string());
  std::vector<PatchRef> refs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(idx, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      refs.push_back(patch_ref_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(read_line_json_error(e.what(), line_no), line_no);
    }
  }
  PatchStore store(refs.empty() ? 64 : refs.front().size);
  std::ifstream bin(dir / (stem + ".bin"), std::ios::binary);
  if (!bin) throw FileError("cannot read " + (dir / (stem + ".bin")).string());
  store.blob_.assign(std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>());
  if (store.blob_.size() != refs.size() * store.patch_bytes()) {
    throw ParseError("patch blob holds " + std::to_string(store.blob_.size()) +
                         " bytes, index expects " + std::to_string(refs.size() * store.patch_bytes()),
                     store.blob_.size() / std::max<std::size_t>(1, store.patch_bytes()));
  }
  store.index_ = std::move(refs);
  for (std::size_t i = 0; i < store.index_.size(); ++i) store.lookup_.emplace(store.index_[i], i);
  return store;
}

// --- config -------------------------------------------------------------------

json to_json(const QuadgenConfig& c) {
  return {{"patch_size", c.patch_size},
          {"pool", to_json(c.pool)},
          {"detector",
           {{"sigmas", c.detector.sigmas},
            {"threshold", c.detector.threshold},
            {"min_distance", c.detector.min_distance}}},
          {"easy_fraction", c.easy_fraction},
          {"negative_keypoints", c.negative_keypoints}};
}

QuadgenConfig quadgen_config_from_json(const json& j) {
  QuadgenConfig c;
  c.patch_size = j.value("patch_size", c.patch_size);
  if (j.contains("pool")) c.pool = transform_pool_from_json(j.at("pool"));
  if (j.contains("detector")) {
    const auto& d = j.at("detector");
    if (d.contains("sigmas")) c.detector.sigmas = d.at("sigmas").get<std::vector<double>>();
    c.detector.threshold = d.value("threshold", c.detector.threshold);
    c.detector.min_distance = d.value("min_distance", c.detector.min_distance);
  }
  c.detector.patch_size = c.patch_size;
  c.easy_fraction = j.value("easy_fraction", c.easy_fraction);
  c.negative_keypoints = j.value("negative_keypoints", c.negative_keypoints);
  return c;
}

// --- generation ---------------------------------------------------------------

QuadrupletBatch make_quadruplets(const Image& anchor, const std::string& anchor_id,
                                 const Image& negative, const std::string& negative_id,
                                 DifficultyMix difficulty, int count, Rng& rng,
                                 const QuadgenConfig& config) {
  if (anchor_id == negative_id) throw InvalidInput("anchor and negative images must differ");
  const int ps = config.patch_size;
  DetectorConfig detector = config.detector;
  detector.patch_size = ps;

  QuadrupletBatch out{{}, PatchStore(ps), {}, 0};
  if (count < 1) return out;
  const auto anchor_kps = detect_keypoints(anchor, count, detector);
  const auto negative_kps = detect_keypoints(negative, std::max(1, config.negative_keypoints), detector);
  out.detected = anchor_kps.size();

  for (std::size_t k = 0; k < anchor_kps.size(); ++k) {
    const Keypoint& kp = anchor_kps[k];
    Difficulty d = difficulty == DifficultyMix::easy ? Difficulty::easy : Difficulty::hard;
    if (difficulty == DifficultyMix::mixed) {
      d = uniform_real(rng, 0, 1) < config.easy_fraction ? Difficulty::easy : Difficulty::hard;
    }
    const Schedule sched = (d == Difficulty::easy ? kEasy : kHard)[uniform_int(rng, 0, 1)];

    // The negative is drawn before the chains so its choice does not depend on
    // whether the keypoint survives.
    PatchRef neg_ref{negative_id, 0, 0, ps};
    if (!negative_kps.empty()) {
      const auto& nk = negative_kps[static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<int>(negative_kps.size()) - 1))];
      neg_ref.x = nk.x;
      neg_ref.y = nk.y;
    } else {
      neg_ref.x = uniform_int(rng, ps / 2, negative.width - ps / 2);
      neg_ref.y = uniform_int(rng, ps / 2, negative.height - ps / 2);
    }

    ChainResult pos, weak;
    try {
      pos = compose_chain(anchor, sched.m, rng, true, config.pool);
      const auto pos_kp = propagate_keypoints({kp}, pos.chain.homography, pos.image.width,
                                              pos.image.height, ps);
      if (pos_kp.empty()) continue;
      weak = compose_chain(pos.image, sched.total - sched.m, rng, true, config.pool,
                           kinds_of(pos.chain));
      const auto weak_kp = propagate_keypoints(pos_kp, weak.chain.homography, weak.image.width,
                                               weak.image.height, ps);
      if (weak_kp.empty()) continue;

      const std::string stem = anchor_id + "/k" + std::to_string(k);
      QuadrupletRecord rec;
      rec.anchor = {anchor_id, kp.x, kp.y, ps};
      rec.positive = {stem + "/p", pos_kp[0].x, pos_kp[0].y, ps};
      rec.weak_positive = {stem + "/wp", weak_kp[0].x, weak_kp[0].y, ps};
      rec.negative = neg_ref;
      rec.m = sched.m;
      rec.n = sched.total - sched.m;
      rec.difficulty = d;
      rec.chain_ids = {stem + "/m", stem + "/n"};

      out.patches.add(rec.anchor, crop_patch(anchor, kp.x, kp.y, ps));
      out.patches.add(rec.positive, crop_patch(pos.image, pos_kp[0].x, pos_kp[0].y, ps));
      out.patches.add(rec.weak_positive, crop_patch(weak.image, weak_kp[0].x, weak_kp[0].y, ps));
      out.patches.add(rec.negative, crop_patch(negative, neg_ref.x, neg_ref.y, ps));
      out.chains.emplace(rec.chain_ids[0], pos.chain);
      out.chains.emplace(rec.chain_ids[1], weak.chain);
      out.records.push_back(std::move(rec));
    } catch (const DegenerateTransform&) {
      continue;
    }
  }
  return out;
}

// --- manifests ----------------------------------------------------------------

void write_manifest(const std::vector<QuadrupletRecord>& records, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("cannot write manifest " + path.string());
  for (const auto& r : records) os << to_json(r).dump(-1, ' ', false) << '\n';
  if (!os) throw FileError("failed writing manifest " + path.string());
}

std::vector<QuadrupletRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot read manifest " + path.string());
  std::vector<QuadrupletRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto rec = quadruplet_from_json(json::parse(line));
      validate(rec);
      out.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": " + read_line_json_error(e.what(), line_no), line_no);
    } catch (const InvalidInput& e) {
      throw ParseError(path.string() + ": " + read_line_json_error(e.what(), line_no), line_no);
    }
  }
  return out;
}

void write_chains(const std::map<std::string, TransformChain>& chains,
                  const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("cannot write " + path.string());
  for (const auto& [id, chain] : chains) {
    os << json{{"id", id}, {"chain", to_json(chain)}}.dump(-1, ' ', false) << '\n';
  }
}

std::map<std::string, TransformChain> read_chains(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot read " + path.string());
  std::map<std::string, TransformChain> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      out.emplace(j.at("id").get<std::string>(), transform_chain_from_json(j.at("chain")));
    } catch (const json::exception& e) {
      throw ParseError(read_line_json_error(e.what(), line_no), line_no);
    }
  }
  return out;
}

void save_dataset(const QuadrupletDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_manifest(ds.records, dir / "manifest.jsonl");
  ds.patches.save(dir);
}

QuadrupletDataset load_dataset(const std::filesystem::path& dir) {
  QuadrupletDataset ds{read_manifest(dir / "manifest.jsonl"), PatchStore::load(dir)};
  for (const auto& r : ds.records) {
    for (const auto* ref : {&r.anchor, &r.positive, &r.weak_positive, &r.negative}) {
      if (!ds.patches.find(*ref)) throw InvalidInput("manifest references missing patch " + ref->image_id);
    }
  }
  return ds;
}

std::pair<std::vector<QuadrupletRecord>, std::vector<QuadrupletRecord>> split_by_anchor(
    const std::vector<QuadrupletRecord>& records, double fraction, Rng& rng) {
  std::set<std::string> anchors;
  for (const auto& r : records) anchors.insert(r.anchor.image_id);
  std::vector<std::string> ids(anchors.begin(), anchors.end());
  std::shuffle(ids.begin(), ids.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(ids.size())));
  if (ids.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, ids.size() - 1);
  const std::set<std::string> held(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(n_val, ids.size())));
  std::pair<std::vector<QuadrupletRecord>, std::vector<QuadrupletRecord>> out;
  for (const auto& r : records) {
    (held.contains(r.anchor.image_id) ? out.second : out.first).push_back(r);
  }
  return out;
}

}  // namespace tae
