#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tae/image.hpp"
#include "tae/keypoints.hpp"
#include "tae/rng.hpp"
#include "tae/transforms.hpp"

namespace tae {

/// A square window of an image, addressed by its center.
struct PatchRef {
  std::string image_id;
  double x = 0;
  double y = 0;
  int size = 64;

  auto operator<=>(const PatchRef&) const = default;
  bool operator==(const PatchRef&) const = default;
};

enum class Difficulty { easy, hard };
/// What make_quadruplets should produce: one difficulty, or a per-record
/// draw between the two.
enum class DifficultyMix { easy, hard, mixed };

std::string_view to_string(Difficulty d);
Difficulty difficulty_from_string(std::string_view s);
DifficultyMix difficulty_mix_from_string(std::string_view s);

/// anchor -> (m transforms) -> positive -> (n more) -> weak positive, plus a
/// negative from an unrelated image. Easy records use (m, m+n) of (1,4) or
/// (2,5); hard ones (1,2) or (2,3).
struct QuadrupletRecord {
  PatchRef anchor;
  PatchRef positive;
  PatchRef weak_positive;
  PatchRef negative;
  int m = 1;
  int n = 1;
  Difficulty difficulty = Difficulty::hard;
  std::vector<std::string> chain_ids;

  bool operator==(const QuadrupletRecord&) const = default;
};

/// Throws InvalidInput when (m, m+n) does not match the difficulty.
void validate(const QuadrupletRecord& record);

nlohmann::json to_json(const PatchRef& ref);
PatchRef patch_ref_from_json(const nlohmann::json& j);
nlohmann::json to_json(const QuadrupletRecord& record);
QuadrupletRecord quadruplet_from_json(const nlohmann::json& j);

/// Fixed-size 8-bit RGB patches in one contiguous blob, indexed by PatchRef.
class PatchStore {
 public:
  explicit PatchStore(int patch_size = 64) : patch_size_(patch_size) {}

  int patch_size() const noexcept { return patch_size_; }
  std::size_t size() const noexcept { return index_.size(); }
  std::size_t patch_bytes() const noexcept {
    return static_cast<std::size_t>(patch_size_) * patch_size_ * 3;
  }

  /// Stores the patch unless an identical ref is already present; returns
  /// the slot either way.
  std::size_t add(const PatchRef& ref, const Image& patch);
  std::optional<std::size_t> find(const PatchRef& ref) const;
  std::span<const std::uint8_t> data(std::size_t slot) const;
  /// Throws InvalidInput for unknown refs.
  std::span<const std::uint8_t> data(const PatchRef& ref) const;
  const std::vector<PatchRef>& refs() const noexcept { return index_; }

  void merge(const PatchStore& other);

  /// Writes `<stem>.bin` (raw patches) and `<stem>.idx.jsonl` (refs).
  void save(const std::filesystem::path& dir, const std::string& stem = "patches") const;
  static PatchStore load(const std::filesystem::path& dir, const std::string& stem = "patches");

 private:
  int patch_size_;
  std::vector<std::uint8_t> blob_;
  std::vector<PatchRef> index_;
  std::map<PatchRef, std::size_t> lookup_;
};

struct QuadgenConfig {
  int patch_size = 64;
  TransformPool pool = TransformPool::standard();
  DetectorConfig detector;
  /// Share of easy records when the mix is `mixed`.
  double easy_fraction = 0.5;
  /// Keypoints considered on the negative image.
  int negative_keypoints = 200;
};

nlohmann::json to_json(const QuadgenConfig& c);
QuadgenConfig quadgen_config_from_json(const nlohmann::json& j);

struct QuadrupletBatch {
  std::vector<QuadrupletRecord> records;
  PatchStore patches;
  std::map<std::string, TransformChain> chains;
  /// Keypoints detected on the anchor image (before propagation losses).
  std::size_t detected = 0;
};

/// Produces one record per anchor keypoint that survives both chains (up to
/// `count` keypoints are tried). Positive and weak-positive chains never
/// repeat a kind across the full m+n sequence.
QuadrupletBatch make_quadruplets(const Image& anchor, const std::string& anchor_id,
                                 const Image& negative, const std::string& negative_id,
                                 DifficultyMix difficulty, int count, Rng& rng,
                                 const QuadgenConfig& config = {});

void write_manifest(const std::vector<QuadrupletRecord>& records, const std::filesystem::path& path);
std::vector<QuadrupletRecord> read_manifest(const std::filesystem::path& path);

void write_chains(const std::map<std::string, TransformChain>& chains,
                  const std::filesystem::path& path);
std::map<std::string, TransformChain> read_chains(const std::filesystem::path& path);

/// Records plus the pixels they reference.
struct QuadrupletDataset {
  std::vector<QuadrupletRecord> records;
  PatchStore patches;
};

void save_dataset(const QuadrupletDataset& ds, const std::filesystem::path& dir);
QuadrupletDataset load_dataset(const std::filesystem::path& dir);

/// Holds out `fraction` of the distinct anchor images (at least one when
/// there are two or more) so that no anchor image spans both splits.
std::pair<std::vector<QuadrupletRecord>, std::vector<QuadrupletRecord>> split_by_anchor(
    const std::vector<QuadrupletRecord>& records, double fraction, Rng& rng);

}  // namespace tae
