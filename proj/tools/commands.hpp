#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tae/describe.hpp"
#include "tae/error.hpp"
#include "tae/journal.hpp"
#include "tae/metrics.hpp"
#include "tae/quadgen.hpp"
#include "tae/trainer.hpp"

namespace tae::cli {

namespace fs = std::filesystem;

/// Everything a command can be configured with. Loaded from the --config
/// JSON file; command-line flags are applied on top.
struct PipelineConfig {
  std::uint64_t seed = 1;

  // synth
  std::string corpus;
  int procedural_images = 0;
  int procedural_size = 256;
  DifficultyMix difficulty = DifficultyMix::mixed;
  int patches_per_image = 40;
  QuadgenConfig quadgen;

  // train
  EmbeddingNetworkConfig network;
  TrainConfig train;
  double val_fraction = 0.1;
  /// Upper bound on validation records (0 keeps all).
  int max_val_records = 0;

  // describe
  SamplingConfig sampling;

  // synth-journal
  JournalConfig journal;
  int n_cases = 20;
  int min_nodes = 5;
  int max_nodes = 10;
  /// Cycled over cases: 0 grows a chain, 1 a random recursive tree.
  std::vector<double> branching{0.0, 1.0};
  int journal_side = 256;
};

nlohmann::json to_json(const PipelineConfig& c);
/// Missing keys keep their defaults.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

struct Context {
  fs::path workdir;
  PipelineConfig config;
  bool verbose = false;
  std::ostream* log = nullptr;

  void info(const std::string& msg) const;
};

/// Raised for problems the user fixes by changing the command line.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Advisory exclusive lock on `<workdir>/.tae.lock`, released on destruction
/// or process exit. Throws Error when another process holds it.
class WorkdirLock {
 public:
  explicit WorkdirLock(const fs::path& workdir);
  ~WorkdirLock();
  WorkdirLock(const WorkdirLock&) = delete;
  WorkdirLock& operator=(const WorkdirLock&) = delete;

 private:
  int fd_ = -1;
};

/// Image files directly inside each directory (sorted by name) and plain
/// files as given.
std::vector<fs::path> expand_image_inputs(const std::vector<fs::path>& inputs);

struct SynthSummary {
  std::size_t images = 0;
  std::size_t records = 0;
  /// Records kept per anchor image, in corpus order.
  std::vector<std::pair<std::string, std::size_t>> per_image;
};

/// Writes manifest.jsonl, patches.bin, patches.idx.jsonl, chains.jsonl and
/// synth_report.json into `out`.
SynthSummary cmd_synth(const Context& ctx, const fs::path& out);

/// Writes one `<case_id>/` directory (journal.json plus node PNGs) per case.
std::vector<std::string> cmd_synth_journal(const Context& ctx, const fs::path& out);

/// Writes best.ckpt, last.ckpt, history.csv and split.json into `out`.
TrainResult cmd_train(const Context& ctx, const fs::path& data, const fs::path& out, bool resume);

enum class Descriptor { network, raw };

/// Describes every image into `<out>/<stem>.feat`; returns the files written.
std::vector<fs::path> cmd_describe(const Context& ctx, const std::vector<fs::path>& images,
                                   Descriptor descriptor, const std::optional<fs::path>& model,
                                   const fs::path& out);

/// Inputs are .feat files or images (described on the fly). Writes
/// matrix.json, graph.json and graph.dot into `out`.
ProvenanceGraph cmd_graph(const Context& ctx, const std::vector<fs::path>& inputs, Descriptor descriptor,
                          const std::optional<fs::path>& model, const fs::path& out);

struct ScoreOutcome {
  BatchScore batch;
  std::vector<std::string> missing;
};

/// Pairs `<journals>/<case>/journal.json` with `<candidates>/<case>/graph.json`
/// and writes report.csv and summary.json into `out`. Cases without a
/// candidate are listed in the summary and skipped.
ScoreOutcome cmd_score(const Context& ctx, const fs::path& journals, const fs::path& candidates,
                       const fs::path& out);

/// synth-journal, describe, graph and score in sequence under `out`.
ScoreOutcome cmd_pipeline(const Context& ctx, Descriptor descriptor, const std::optional<fs::path>& model,
                          const fs::path& out);

}  // namespace tae::cli
