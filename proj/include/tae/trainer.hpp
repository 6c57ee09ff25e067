#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"
#include "tae/checkpoint.hpp"
#include "tae/embednet.hpp"
#include "tae/quadgen.hpp"
#include "tae/rankloss.hpp"

namespace tae {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double lr_decay_factor = 0.1;
  int plateau_patience = 5;
  int max_epochs = 100;
  int batch_size = 64;
  MarginSet margins;
  /// Easy share of every batch.
  double easy_fraction = 0.5;
  double weight_decay = 0.0;
  /// Batches per epoch; 0 means one pass over the training records.
  int batches_per_epoch = 0;
  /// Forward chunk size when evaluating.
  int eval_chunk = 64;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_precision = 0;
  /// Learning rate used during this epoch.
  double lr = 0;
};

nlohmann::json to_json(const EpochRecord& r);
EpochRecord epoch_record_from_json(const nlohmann::json& j);

/// Multiplies the rate by `factor` once `patience` consecutive epochs pass
/// without a new best validation loss.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, int patience);

  double lr() const noexcept { return lr_; }
  /// Feeds one epoch's validation loss; returns true when the rate dropped.
  bool step(double val_loss);

  nlohmann::json state() const;
  void load_state(const nlohmann::json& j);

 private:
  double lr_;
  double factor_;
  int patience_;
  std::optional<double> best_;
  int bad_epochs_ = 0;
};

struct Evaluation {
  double loss = 0;
  double precision = 0;
  std::vector<QuadrupletDistances> distances;
};

/// Mean loss and similarity precision in evaluation mode. Throws
/// UndefinedMetric when `records` is empty.
Evaluation evaluate(EmbeddingNetwork& net, const std::vector<QuadrupletRecord>& records,
                    const PatchStore& patches, const MarginSet& margins, int chunk = 64);

struct TrainResult {
  /// Highest validation precision seen, or the starting weights when no
  /// epoch improved on them.
  Checkpoint best;
  /// State after the final epoch, including optimizer velocities; feed it
  /// back through ResumeState to continue.
  Checkpoint last;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_precision = 0;
};

struct ResumeState {
  Checkpoint last;
  std::optional<Checkpoint> best;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// SGD with Nesterov momentum on the quadruplet rank loss. Batch order for
/// epoch e depends only on (seed, e), so a resumed run replays the same
/// batches as an uninterrupted one. Throws InvalidConfiguration when the
/// validation set is empty or either difficulty is missing from training.
TrainResult train(EmbeddingNetwork& net, const std::vector<QuadrupletRecord>& train_records,
                  const std::vector<QuadrupletRecord>& val_records, const PatchStore& patches,
                  const TrainConfig& config, std::uint64_t seed,
                  const std::optional<ResumeState>& resume = std::nullopt,
                  const EpochCallback& on_epoch = {});

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace tae
