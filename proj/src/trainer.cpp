#include "tae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <utility>

#include "tae/error.hpp"

namespace tae {
namespace {

using nlohmann::json;

const std::string kVelocityPrefix = "velocity/";

nn::Tensor gather(const PatchStore& store, const std::vector<std::size_t>& slots) {
  std::vector<std::span<const std::uint8_t>> views;
  views.reserve(slots.size());
  for (auto s : slots) views.push_back(store.data(s));
  return patches_to_tensor(views, store.patch_size());
}

std::size_t slot_of(const PatchStore& store, const PatchRef& ref) {
  auto slot = store.find(ref);
  if (!slot) throw InvalidInput("patch store has no entry for " + ref.image_id);
  return *slot;
}

std::span<const float> row(const nn::Tensor& t, int i) { return {t.sample(i), t.sample_size()}; }
std::span<float> row(nn::Tensor& t, int i) { return {t.sample(i), t.sample_size()}; }

// Cycles through a shuffled index list, reshuffling at every wrap.
class Cycler {
 public:
  Cycler(std::vector<std::size_t> items, Rng& rng) : items_(std::move(items)), rng_(rng) {
    std::shuffle(items_.begin(), items_.end(), rng_);
  }
  std::size_t next() {
    if (pos_ == items_.size()) {
      std::shuffle(items_.begin(), items_.end(), rng_);
      pos_ = 0;
    }
    return items_[pos_++];
  }

 private:
  std::vector<std::size_t> items_;
  Rng& rng_;
  std::size_t pos_ = 0;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw InvalidConfiguration("learning_rate must be positive");
  if (momentum < 0 || momentum >= 1) throw InvalidConfiguration("momentum must lie in [0, 1)");
  if (!(lr_decay_factor > 0 && lr_decay_factor < 1)) {
    throw InvalidConfiguration("lr_decay_factor must lie in (0, 1)");
  }
  if (plateau_patience < 1) throw InvalidConfiguration("plateau_patience must be at least 1");
  if (max_epochs < 0) throw InvalidConfiguration("max_epochs must be non-negative");
  if (batch_size < 2) throw InvalidConfiguration("batch_size must be at least 2");
  if (easy_fraction < 0 || easy_fraction > 1) throw InvalidConfiguration("easy_fraction must lie in [0, 1]");
  if (weight_decay < 0) throw InvalidConfiguration("weight_decay must be non-negative");
  if (batches_per_epoch < 0) throw InvalidConfiguration("batches_per_epoch must be non-negative");
  if (eval_chunk < 1) throw InvalidConfiguration("eval_chunk must be positive");
  margins.validate();
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"lr_decay_factor", c.lr_decay_factor},
          {"plateau_patience", c.plateau_patience},
          {"max_epochs", c.max_epochs},
          {"batch_size", c.batch_size},
          {"margins", {{"mu1", c.margins.mu1}, {"mu2", c.margins.mu2}, {"mu3", c.margins.mu3}}},
          {"easy_fraction", c.easy_fraction},
          {"weight_decay", c.weight_decay},
          {"batches_per_epoch", c.batches_per_epoch},
          {"eval_chunk", c.eval_chunk}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
  c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("margins")) {
    const auto& m = j.at("margins");
    c.margins.mu1 = m.value("mu1", c.margins.mu1);
    c.margins.mu2 = m.value("mu2", c.margins.mu2);
    c.margins.mu3 = m.value("mu3", c.margins.mu3);
  }
  c.easy_fraction = j.value("easy_fraction", c.easy_fraction);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batches_per_epoch = j.value("batches_per_epoch", c.batches_per_epoch);
  c.eval_chunk = j.value("eval_chunk", c.eval_chunk);
  c.validate();
  return c;
}

json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"val_loss", r.val_loss},
          {"val_precision", r.val_precision},
          {"lr", r.lr}};
}

EpochRecord epoch_record_from_json(const json& j) {
  return {j.at("epoch").get<int>(), j.at("train_loss").get<double>(), j.at("val_loss").get<double>(),
          j.at("val_precision").get<double>(), j.at("lr").get<double>()};
}

PlateauScheduler::PlateauScheduler(double lr, double factor, int patience)
    : lr_(lr), factor_(factor), patience_(patience) {}

bool PlateauScheduler::step(double val_loss) {
  if (!best_ || val_loss < *best_) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return false;
  }
  if (++bad_epochs_ >= patience_) {
    lr_ *= factor_;
    bad_epochs_ = 0;
    return true;
  }
  return false;
}

json PlateauScheduler::state() const {
  json j{{"lr", lr_}, {"bad_epochs", bad_epochs_}};
  j["best"] = best_ ? json(*best_) : json(nullptr);
  return j;
}

void PlateauScheduler::load_state(const json& j) {
  lr_ = j.at("lr").get<double>();
  bad_epochs_ = j.at("bad_epochs").get<int>();
  if (j.at("best").is_null()) {
    best_.reset();
  } else {
    best_ = j.at("best").get<double>();
  }
}

Evaluation evaluate(EmbeddingNetwork& net, const std::vector<QuadrupletRecord>& records,
                    const PatchStore& patches, const MarginSet& margins, int chunk) {
  if (records.empty()) throw UndefinedMetric("evaluation over an empty record set");
  // Negatives and anchors recur across records; embed each stored patch once.
  std::map<std::size_t, int> position;
  std::vector<std::size_t> slots;
  auto want = [&](const PatchRef& ref) {
    const std::size_t s = slot_of(patches, ref);
    if (position.emplace(s, static_cast<int>(slots.size())).second) slots.push_back(s);
  };
  for (const auto& r : records) {
    want(r.anchor);
    want(r.positive);
    want(r.weak_positive);
    want(r.negative);
  }
  nn::Tensor emb(static_cast<int>(slots.size()), 1, 1, net.config().embedding_dim);
  const std::size_t dim = emb.sample_size();
  for (std::size_t first = 0; first < slots.size(); first += static_cast<std::size_t>(chunk)) {
    const std::size_t last = std::min(slots.size(), first + static_cast<std::size_t>(chunk));
    std::vector<std::size_t> part(slots.begin() + static_cast<std::ptrdiff_t>(first),
                                  slots.begin() + static_cast<std::ptrdiff_t>(last));
    const nn::Tensor out = net.forward(gather(patches, part), nn::Mode::eval);
    std::copy(out.data.begin(), out.data.end(), emb.data.begin() + static_cast<std::ptrdiff_t>(first * dim));
  }
  Evaluation ev;
  ev.distances.reserve(records.size());
  double loss = 0;
  for (const auto& r : records) {
    auto at = [&](const PatchRef& ref) { return row(std::as_const(emb), position.at(*patches.find(ref))); };
    const auto d = quadruplet_distances(at(r.anchor), at(r.positive), at(r.weak_positive), at(r.negative));
    loss += rank_loss(d, margins);
    ev.distances.push_back(d);
  }
  ev.loss = loss / static_cast<double>(records.size());
  ev.precision = similarity_precision(ev.distances);
  return ev;
}

TrainResult train(EmbeddingNetwork& net, const std::vector<QuadrupletRecord>& train_records,
                  const std::vector<QuadrupletRecord>& val_records, const PatchStore& patches,
                  const TrainConfig& config, std::uint64_t seed,
                  const std::optional<ResumeState>& resume, const EpochCallback& on_epoch) {
  config.validate();
  if (val_records.empty()) throw InvalidConfiguration("validation set is empty");
  std::vector<std::size_t> easy, hard;
  for (std::size_t i = 0; i < train_records.size(); ++i) {
    (train_records[i].difficulty == Difficulty::easy ? easy : hard).push_back(i);
  }
  if (config.max_epochs > 0 && (easy.empty() || hard.empty())) {
    throw InvalidConfiguration("training set needs both easy and hard quadruplets");
  }

  auto params = net.parameters();
  std::vector<std::vector<float>> velocity;
  for (const auto* p : params) velocity.emplace_back(p->value.size(), 0.0f);

  PlateauScheduler scheduler(config.learning_rate, config.lr_decay_factor, config.plateau_patience);
  TrainResult result;
  int start_epoch = 0;
  double best_precision = -std::numeric_limits<double>::infinity();

  if (resume) {
    const Checkpoint& last = resume->last;
    restore(net, last);
    if (last.optimizer.size() != params.size()) throw ShapeError("checkpoint optimizer state does not match");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (last.optimizer[i].name != kVelocityPrefix + params[i]->name ||
          last.optimizer[i].values.size() != velocity[i].size()) {
        throw ShapeError("checkpoint optimizer state does not match " + params[i]->name);
      }
      velocity[i] = last.optimizer[i].values;
    }
    const json& meta = last.metadata;
    start_epoch = meta.at("epoch").get<int>();
    scheduler.load_state(meta.at("scheduler"));
    for (const auto& h : meta.at("history")) result.history.push_back(epoch_record_from_json(h));
    if (resume->best) {
      result.best = *resume->best;
      result.best_epoch = resume->best->metadata.value("epoch", 0);
      best_precision = resume->best->metadata.value("val_precision", best_precision);
    } else {
      result.best = snapshot(net, {{"epoch", start_epoch}});
      result.best_epoch = start_epoch;
    }
  } else {
    result.best = snapshot(net, {{"epoch", 0}});
  }

  const int dim = net.config().embedding_dim;
  const int b = config.batch_size;
  const int n_easy = static_cast<int>(std::lround(b * config.easy_fraction));
  const int batches = config.batches_per_epoch > 0
                          ? config.batches_per_epoch
                          : std::max<int>(1, static_cast<int>((train_records.size() + b - 1) / b));

  for (int epoch = start_epoch + 1; epoch <= config.max_epochs; ++epoch) {
    Rng rng = make_rng(seed, "epoch/" + std::to_string(epoch));
    Cycler easy_cycle(easy, rng), hard_cycle(hard, rng);
    const double lr = scheduler.lr();
    double loss_sum = 0;

    for (int batch = 0; batch < batches; ++batch) {
      std::vector<std::size_t> picks;
      for (int i = 0; i < b; ++i) picks.push_back(i < n_easy ? easy_cycle.next() : hard_cycle.next());
      // Rows [0,b) anchors, [b,2b) positives, [2b,3b) weak positives, [3b,4b) negatives.
      std::vector<std::size_t> slots(static_cast<std::size_t>(4 * b));
      for (int i = 0; i < b; ++i) {
        const auto& r = train_records[picks[static_cast<std::size_t>(i)]];
        slots[static_cast<std::size_t>(i)] = slot_of(patches, r.anchor);
        slots[static_cast<std::size_t>(b + i)] = slot_of(patches, r.positive);
        slots[static_cast<std::size_t>(2 * b + i)] = slot_of(patches, r.weak_positive);
        slots[static_cast<std::size_t>(3 * b + i)] = slot_of(patches, r.negative);
      }
      const nn::Tensor emb = net.forward(gather(patches, slots), nn::Mode::train);
      nn::Tensor grad(4 * b, 1, 1, dim);
      double loss = 0;
      for (int i = 0; i < b; ++i) {
        loss += quadruplet_rank_loss_backward(row(emb, i), row(emb, b + i), row(emb, 2 * b + i),
                                              row(emb, 3 * b + i), config.margins, row(grad, i),
                                              row(grad, b + i), row(grad, 2 * b + i),
                                              row(grad, 3 * b + i), 1.0 / b);
      }
      loss_sum += loss / b;
      net.zero_grad();
      net.backward(grad);
      const float mu = static_cast<float>(config.momentum);
      const float step = static_cast<float>(lr);
      const float wd = static_cast<float>(config.weight_decay);
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto& value = params[k]->value;
        const auto& g = params[k]->grad;
        auto& v = velocity[k];
        for (std::size_t i = 0; i < value.size(); ++i) {
          const float gi = g[i] + wd * value[i];
          v[i] = mu * v[i] + gi;
          value[i] -= step * (gi + mu * v[i]);
        }
      }
    }

    const Evaluation ev = evaluate(net, val_records, patches, config.margins, config.eval_chunk);
    EpochRecord rec{epoch, loss_sum / batches, ev.loss, ev.precision, lr};
    result.history.push_back(rec);
    scheduler.step(ev.loss);
    if (ev.precision > best_precision) {
      best_precision = ev.precision;
      result.best_epoch = epoch;
      result.best = snapshot(net, {{"epoch", epoch}, {"val_precision", ev.precision}});
    }
    if (on_epoch) on_epoch(rec);
  }

  json history = json::array();
  for (const auto& h : result.history) history.push_back(to_json(h));
  result.last = snapshot(net, {{"epoch", result.history.empty() ? start_epoch : result.history.back().epoch},
                               {"scheduler", scheduler.state()},
                               {"history", history},
                               {"train_config", to_json(config)}});
  for (std::size_t k = 0; k < params.size(); ++k) {
    result.last.optimizer.push_back({kVelocityPrefix + params[k]->name, velocity[k]});
  }
  result.best_precision = std::isfinite(best_precision) ? best_precision : 0.0;
  return result;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  out << "epoch,train_loss,val_loss,val_precision,lr\n";
  for (const auto& h : history) {
    out << h.epoch << ',' << fmt(h.train_loss) << ',' << fmt(h.val_loss) << ',' << fmt(h.val_precision)
        << ',' << fmt(h.lr) << '\n';
  }
  if (!out) throw FileError("failed writing " + path.string());
}

}  // namespace tae
