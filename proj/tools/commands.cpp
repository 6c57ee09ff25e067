#include "commands.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include "tae/procedural.hpp"
#include "tae/provgraph.hpp"
#include "tae/dissim.hpp"

namespace tae::cli {
namespace {

using nlohmann::json;

const std::set<std::string> kImageExtensions{".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".ppm"};

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return kImageExtensions.count(ext) > 0;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  out << text;
  if (!out) throw FileError("failed writing " + path.string());
}

std::string image_id_of(const fs::path& p) { return p.stem().string(); }

struct NamedImage {
  std::string id;
  Image image;
};

// Corpus images in name order, or procedural scenes when no corpus is set.
std::vector<NamedImage> load_corpus(const Context& ctx) {
  const auto& c = ctx.config;
  std::vector<NamedImage> out;
  if (!c.corpus.empty()) {
    for (const auto& p : expand_image_inputs({c.corpus})) {
      try {
        out.push_back({image_id_of(p), read_image(p)});
      } catch (const Error& e) {
        throw InvalidInput("image " + p.string() + ": " + e.what());
      }
    }
    return out;
  }
  if (c.procedural_images < 1) throw UsageError("no corpus given and procedural image count is zero");
  for (int i = 0; i < c.procedural_images; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "proc%04d", i);
    Rng rng = make_rng(c.seed, std::string("procedural/") + id);
    out.push_back({id, procedural_image(rng, c.procedural_size, c.procedural_size)});
  }
  return out;
}

FeatureSet describe_one(const Context& ctx, const Image& img, const std::string& id, Descriptor descriptor,
                        EmbeddingNetwork* net) {
  if (descriptor == Descriptor::raw) return describe_image_raw(img, id, ctx.config.sampling);
  return describe_image(*net, img, id, ctx.config.sampling);
}

std::optional<EmbeddingNetwork> load_network(Descriptor descriptor, const std::optional<fs::path>& model) {
  if (descriptor == Descriptor::raw) return std::nullopt;
  if (!model) throw UsageError("a --model checkpoint is required for the network descriptor");
  return network_from_checkpoint(load_checkpoint(*model));
}

}  // namespace

json to_json(const PipelineConfig& c) {
  return {{"seed", c.seed},
          {"corpus", c.corpus},
          {"procedural_images", c.procedural_images},
          {"procedural_size", c.procedural_size},
          {"difficulty", c.difficulty == DifficultyMix::easy   ? "easy"
                         : c.difficulty == DifficultyMix::hard ? "hard"
                                                               : "mixed"},
          {"patches_per_image", c.patches_per_image},
          {"quadgen", to_json(c.quadgen)},
          {"network", to_json(c.network)},
          {"train", to_json(c.train)},
          {"val_fraction", c.val_fraction},
          {"max_val_records", c.max_val_records},
          {"sampling", to_json(c.sampling)},
          {"journal", to_json(c.journal)},
          {"n_cases", c.n_cases},
          {"min_nodes", c.min_nodes},
          {"max_nodes", c.max_nodes},
          {"branching", c.branching},
          {"journal_side", c.journal_side}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig c;
  c.seed = j.value("seed", c.seed);
  c.corpus = j.value("corpus", c.corpus);
  c.procedural_images = j.value("procedural_images", c.procedural_images);
  c.procedural_size = j.value("procedural_size", c.procedural_size);
  if (j.contains("difficulty")) c.difficulty = difficulty_mix_from_string(j.at("difficulty").get<std::string>());
  c.patches_per_image = j.value("patches_per_image", c.patches_per_image);
  if (j.contains("quadgen")) c.quadgen = quadgen_config_from_json(j.at("quadgen"));
  if (j.contains("network")) c.network = network_config_from_json(j.at("network"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.max_val_records = j.value("max_val_records", c.max_val_records);
  if (j.contains("sampling")) c.sampling = sampling_config_from_json(j.at("sampling"));
  if (j.contains("journal")) c.journal = journal_config_from_json(j.at("journal"));
  c.n_cases = j.value("n_cases", c.n_cases);
  c.min_nodes = j.value("min_nodes", c.min_nodes);
  c.max_nodes = j.value("max_nodes", c.max_nodes);
  c.branching = j.value("branching", c.branching);
  c.journal_side = j.value("journal_side", c.journal_side);
  return c;
}

void Context::info(const std::string& msg) const {
  if (verbose && log) *log << msg << std::endl;
}

WorkdirLock::WorkdirLock(const fs::path& workdir) {
  fs::create_directories(workdir);
  const fs::path path = workdir / ".tae.lock";
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd_ < 0) throw FileError("cannot open lock file " + path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error("workdir " + workdir.string() + " is in use by another tae process");
  }
}

WorkdirLock::~WorkdirLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

std::vector<fs::path> expand_image_inputs(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file() && is_image(e.path())) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(in)) {
      out.push_back(in);
    } else {
      throw FileError("no such file or directory: " + in.string());
    }
  }
  return out;
}

SynthSummary cmd_synth(const Context& ctx, const fs::path& out) {
  const auto& c = ctx.config;
  if (c.patches_per_image < 1) throw UsageError("patches per image must be positive");
  const auto corpus = load_corpus(ctx);
  if (corpus.size() < 2) throw UsageError("synth needs at least two images (negatives come from other images)");
  QuadrupletDataset ds{{}, PatchStore(c.quadgen.patch_size)};
  std::map<std::string, TransformChain> chains;
  SynthSummary summary;
  summary.images = corpus.size();
  for (const auto& img : corpus) {
    if (img.image.width < c.quadgen.patch_size || img.image.height < c.quadgen.patch_size) {
      throw TooSmallImage("image " + img.id + ": " + std::to_string(img.image.width) + "x" +
                          std::to_string(img.image.height) + " cannot hold a " +
                          std::to_string(c.quadgen.patch_size) + "px patch");
    }
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& anchor = corpus[i];
    Rng rng = make_rng(c.seed, "synth/" + anchor.id);
    std::size_t j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(corpus.size()) - 2));
    if (j >= i) ++j;
    QuadrupletBatch batch;
    try {
      batch = make_quadruplets(anchor.image, anchor.id, corpus[j].image, corpus[j].id, c.difficulty,
                               c.patches_per_image, rng, c.quadgen);
    } catch (const Error& e) {
      throw InvalidInput("image " + anchor.id + ": " + e.what());
    }
    ctx.info("synth " + anchor.id + ": " + std::to_string(batch.records.size()) + " quadruplets");
    summary.per_image.emplace_back(anchor.id, batch.records.size());
    ds.records.insert(ds.records.end(), batch.records.begin(), batch.records.end());
    ds.patches.merge(batch.patches);
    chains.insert(batch.chains.begin(), batch.chains.end());
  }
  summary.records = ds.records.size();
  fs::create_directories(out);
  save_dataset(ds, out);
  write_chains(chains, out / "chains.jsonl");
  json report{{"images", summary.images}, {"records", summary.records}, {"per_image", json::array()}};
  for (const auto& [id, n] : summary.per_image) report["per_image"].push_back({{"image", id}, {"records", n}});
  write_text(out / "synth_report.json", report.dump(2) + "\n");
  return summary;
}

std::vector<std::string> cmd_synth_journal(const Context& ctx, const fs::path& out) {
  const auto& c = ctx.config;
  if (c.n_cases < 1) throw UsageError("case count must be positive");
  if (c.min_nodes < 2 || c.max_nodes < c.min_nodes) throw UsageError("node range must satisfy 2 <= min <= max");
  if (c.branching.empty()) throw UsageError("branching list is empty");
  std::vector<NamedImage> corpus;
  if (!c.corpus.empty()) corpus = load_corpus(ctx);
  std::vector<std::string> ids;
  fs::create_directories(out);
  for (int k = 0; k < c.n_cases; ++k) {
    char id[32];
    std::snprintf(id, sizeof id, "case%03d", k);
    Rng rng = make_rng(c.seed, std::string("journal/") + id);
    const int n_nodes = uniform_int(rng, c.min_nodes, c.max_nodes);
    const double branching = c.branching[static_cast<std::size_t>(k) % c.branching.size()];
    Image root;
    if (corpus.empty()) {
      Rng img_rng = make_rng(c.seed, std::string("journal-root/") + id);
      root = procedural_image(img_rng, c.journal_side, c.journal_side);
    } else {
      root = corpus[static_cast<std::size_t>(k) % corpus.size()].image;
    }
    const JournalCase jc = make_synthetic_journal(root, id, n_nodes, branching, rng, c.journal);
    fs::create_directories(out / id);
    write_journal_case(jc, out / id);
    ctx.info(std::string("journal ") + id + ": " + std::to_string(n_nodes) + " nodes");
    ids.emplace_back(id);
  }
  return ids;
}

TrainResult cmd_train(const Context& ctx, const fs::path& data, const fs::path& out, bool resume) {
  const auto& c = ctx.config;
  if (!fs::exists(data / "manifest.jsonl")) throw FileError("no manifest at " + (data / "manifest.jsonl").string());
  const QuadrupletDataset ds = load_dataset(data);
  Rng split_rng = make_rng(c.seed, "split");
  auto [train_set, val_set] = split_by_anchor(ds.records, c.val_fraction, split_rng);
  if (c.max_val_records > 0 && val_set.size() > static_cast<std::size_t>(c.max_val_records)) {
    val_set.resize(static_cast<std::size_t>(c.max_val_records));
  }
  std::set<std::string> train_images, val_images;
  for (const auto& r : train_set) train_images.insert(r.anchor.image_id);
  for (const auto& r : val_set) val_images.insert(r.anchor.image_id);
  fs::create_directories(out);
  write_text(out / "split.json", json{{"train_images", train_images},
                                      {"val_images", val_images},
                                      {"train_records", train_set.size()},
                                      {"val_records", val_set.size()}}
                                     .dump(2) + "\n");
  ctx.info("train: " + std::to_string(train_set.size()) + " training and " + std::to_string(val_set.size()) +
           " validation quadruplets");

  std::optional<ResumeState> state;
  EmbeddingNetworkConfig net_config = c.network;
  if (resume) {
    if (!fs::exists(out / "last.ckpt")) throw FileError("nothing to resume: no " + (out / "last.ckpt").string());
    state = ResumeState{load_checkpoint(out / "last.ckpt"), std::nullopt};
    if (fs::exists(out / "best.ckpt")) state->best = load_checkpoint(out / "best.ckpt");
    net_config = state->last.config;
  }
  Rng init = make_rng(c.seed, "init");
  EmbeddingNetwork net(net_config, init);
  const TrainResult result = train(net, train_set, val_set, ds.patches, c.train, derive_seed(c.seed, "train"), state,
                                   [&](const EpochRecord& e) {
                                     ctx.info("epoch " + std::to_string(e.epoch) + " train_loss " +
                                              std::to_string(e.train_loss) + " val_loss " +
                                              std::to_string(e.val_loss) + " val_precision " +
                                              std::to_string(e.val_precision) + " lr " + std::to_string(e.lr));
                                   });
  save_checkpoint(result.best, out / "best.ckpt");
  save_checkpoint(result.last, out / "last.ckpt");
  write_history_csv(result.history, out / "history.csv");
  return result;
}

std::vector<fs::path> cmd_describe(const Context& ctx, const std::vector<fs::path>& images, Descriptor descriptor,
                                   const std::optional<fs::path>& model, const fs::path& out) {
  const auto paths = expand_image_inputs(images);
  if (paths.empty()) throw UsageError("no images to describe");
  std::set<std::string> ids;
  for (const auto& p : paths) {
    if (!ids.insert(image_id_of(p)).second) throw InvalidInput("two inputs share the image id " + image_id_of(p));
  }
  auto net = load_network(descriptor, model);
  fs::create_directories(out);
  std::vector<fs::path> written;
  for (const auto& p : paths) {
    const std::string id = image_id_of(p);
    FeatureSet fs_;
    try {
      fs_ = describe_one(ctx, read_image(p), id, descriptor, net ? &*net : nullptr);
    } catch (const Error& e) {
      throw InvalidInput("image " + p.string() + ": " + e.what());
    }
    const fs::path dst = out / (id + ".feat");
    save_features(fs_, dst);
    ctx.info("describe " + id + ": " + std::to_string(fs_.size()) + " patches");
    written.push_back(dst);
  }
  return written;
}

ProvenanceGraph cmd_graph(const Context& ctx, const std::vector<fs::path>& inputs, Descriptor descriptor,
                          const std::optional<fs::path>& model, const fs::path& out) {
  std::vector<fs::path> feats, images;
  for (const auto& in : inputs) {
    if (fs::is_regular_file(in) && in.extension() == ".feat") {
      feats.push_back(in);
    } else if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file() && e.path().extension() == ".feat") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      if (found.empty()) {
        images.push_back(in);
      } else {
        feats.insert(feats.end(), found.begin(), found.end());
      }
    } else {
      images.push_back(in);
    }
  }
  if (!feats.empty() && !images.empty()) throw UsageError("mix of feature files and images");
  std::vector<FeatureSet> sets;
  if (!feats.empty()) {
    for (const auto& f : feats) sets.push_back(load_features(f));
  } else {
    const auto paths = expand_image_inputs(images);
    std::optional<EmbeddingNetwork> net;
    if (paths.size() >= 2) net = load_network(descriptor, model);
    for (const auto& p : paths) {
      try {
        sets.push_back(describe_one(ctx, read_image(p), image_id_of(p), descriptor, net ? &*net : nullptr));
      } catch (const Error& e) {
        throw InvalidInput("image " + p.string() + ": " + e.what());
      }
    }
  }
  if (sets.size() < 2) throw UsageError("graph needs at least two inputs");
  const DissimilarityMatrix d = build_matrix(sets);
  const ProvenanceGraph g = kruskal_spanning_tree(d);
  fs::create_directories(out);
  write_text(out / "matrix.json", to_json(d).dump(2) + "\n");
  export_graph(g, GraphFormat::json, out / "graph.json");
  export_graph(g, GraphFormat::dot, out / "graph.dot");
  ctx.info("graph: " + std::to_string(g.nodes.size()) + " nodes, total weight " + std::to_string(total_weight(g)));
  return g;
}

ScoreOutcome cmd_score(const Context& ctx, const fs::path& journals, const fs::path& candidates,
                       const fs::path& out) {
  if (!fs::is_directory(journals)) throw FileError("no journal directory " + journals.string());
  std::vector<fs::path> cases;
  for (const auto& e : fs::directory_iterator(journals)) {
    if (e.is_directory() && fs::exists(e.path() / "journal.json")) cases.push_back(e.path());
  }
  std::sort(cases.begin(), cases.end());
  ScoreOutcome outcome;
  std::vector<ScoreCase> scored;
  for (const auto& dir : cases) {
    const GroundTruthJournal j = read_journal(dir / "journal.json");
    const fs::path cand = candidates / j.case_id / "graph.json";
    if (!fs::exists(cand)) {
      outcome.missing.push_back(j.case_id);
      continue;
    }
    scored.push_back({j.case_id, journal_graph(j), import_graph(cand)});
  }
  if (scored.empty()) throw InvalidInput("no case has both a journal and a candidate graph");
  outcome.batch = score_batch(scored);
  fs::create_directories(out);
  write_text(out / "report.csv", report_csv(outcome.batch));
  json summary = summary_json(outcome.batch);
  summary["missing"] = outcome.missing;
  write_text(out / "summary.json", summary.dump(2) + "\n");
  for (const auto& m : outcome.missing) ctx.info("score: no candidate for " + m);
  return outcome;
}

ScoreOutcome cmd_pipeline(const Context& ctx, Descriptor descriptor, const std::optional<fs::path>& model,
                          const fs::path& out) {
  const auto ids = cmd_synth_journal(ctx, out / "journals");
  for (const auto& id : ids) {
    const GroundTruthJournal j = read_journal(out / "journals" / id / "journal.json");
    std::vector<fs::path> images;
    for (const auto& n : j.nodes) images.push_back(out / "journals" / id / (n + ".png"));
    const auto feats = cmd_describe(ctx, images, descriptor, model, out / "features" / id);
    cmd_graph(ctx, feats, descriptor, model, out / "graphs" / id);
  }
  return cmd_score(ctx, out / "journals", out / "graphs", out / "score");
}

}  // namespace tae::cli
