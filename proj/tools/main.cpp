#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

namespace fs = std::filesystem;
using namespace tae;
using namespace tae::cli;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

Descriptor parse_descriptor(const std::string& s) {
  if (s == "tae" || s == "network") return Descriptor::network;
  if (s == "raw") return Descriptor::raw;
  throw UsageError("unknown descriptor " + s + " (expected tae or raw)");
}

template <typename T>
void override_with(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformation-aware patch embeddings and provenance graphs"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string workdir = ".";
  bool verbose = false;
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--workdir", workdir, "Working directory for outputs");
  app.add_flag("-v,--verbose", verbose, "Progress messages on stderr");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a quadruplet dataset");
  std::optional<std::string> corpus;
  std::optional<int> procedural, procedural_size, per_image;
  std::optional<std::string> difficulty;
  std::string synth_out;
  synth->add_option("--images", corpus, "Directory of corpus images");
  synth->add_option("--procedural", procedural, "Use N procedural images instead of a corpus");
  synth->add_option("--size", procedural_size, "Side length of procedural images");
  synth->add_option("--difficulty", difficulty, "easy, hard or mixed")->check(CLI::IsMember({"easy", "hard", "mixed"}));
  synth->add_option("--per-image", per_image, "Anchor keypoints tried per image");
  synth->add_option("--out", synth_out, "Output directory (default <workdir>/data)");

  // synth-journal
  auto* sj = app.add_subcommand("synth-journal", "Generate ground-truth provenance journals");
  std::optional<int> n_cases, min_nodes, max_nodes, journal_side;
  std::optional<std::vector<double>> branching;
  std::string sj_out;
  sj->add_option("--images", corpus, "Directory of root images (procedural when absent)");
  sj->add_option("--cases", n_cases, "Number of journals");
  sj->add_option("--min-nodes", min_nodes, "Fewest nodes per journal");
  sj->add_option("--max-nodes", max_nodes, "Most nodes per journal");
  sj->add_option("--branching", branching, "Branching probabilities, cycled over cases");
  sj->add_option("--side", journal_side, "Side length of procedural root images");
  sj->add_option("--out", sj_out, "Output directory (default <workdir>/journals)");

  // train
  auto* tr = app.add_subcommand("train", "Train the embedding network");
  std::string data_dir, model_dir;
  std::optional<int> epochs, batch_size, batches_per_epoch, max_val;
  std::optional<double> lr;
  bool resume = false;
  tr->add_option("--data", data_dir, "Dataset directory (default <workdir>/data)");
  tr->add_option("--out", model_dir, "Model directory (default <workdir>/model)");
  tr->add_option("--epochs", epochs, "Maximum epoch count");
  tr->add_option("--batch-size", batch_size, "Quadruplets per batch");
  tr->add_option("--batches-per-epoch", batches_per_epoch, "Batches per epoch (0: one pass)");
  tr->add_option("--lr", lr, "Initial learning rate");
  tr->add_option("--max-val", max_val, "Cap on validation quadruplets");
  tr->add_flag("--resume", resume, "Continue from <out>/last.ckpt");

  // describe
  auto* de = app.add_subcommand("describe", "Write one feature file per image");
  std::vector<std::string> describe_inputs;
  std::optional<std::string> model;
  std::string descriptor = "tae", describe_out;
  std::optional<std::string> strategy;
  std::optional<int> max_count;
  de->add_option("inputs", describe_inputs, "Images or directories of images")->required();
  de->add_option("--model", model, "Checkpoint (default <workdir>/model/best.ckpt)");
  de->add_option("--descriptor", descriptor, "tae or raw");
  de->add_option("--strategy", strategy, "keypoint or grid")->check(CLI::IsMember({"keypoint", "grid"}));
  de->add_option("--max-count", max_count, "Patch cap per image");
  de->add_option("--out", describe_out, "Output directory (default <workdir>/features)");

  // graph
  auto* gr = app.add_subcommand("graph", "Build a provenance graph");
  std::vector<std::string> graph_inputs;
  std::string graph_out;
  gr->add_option("inputs", graph_inputs, "Feature files, images, or directories of either")->required();
  gr->add_option("--model", model, "Checkpoint used when images are given");
  gr->add_option("--descriptor", descriptor, "tae or raw");
  gr->add_option("--strategy", strategy, "keypoint or grid")->check(CLI::IsMember({"keypoint", "grid"}));
  gr->add_option("--max-count", max_count, "Patch cap per image");
  gr->add_option("--out", graph_out, "Output directory (default <workdir>/graph)");

  // score
  auto* sc = app.add_subcommand("score", "Score candidate graphs against journals");
  std::string journals_dir, candidates_dir, score_out;
  sc->add_option("--journals", journals_dir, "Journal directory")->required();
  sc->add_option("--candidates", candidates_dir, "Directory of <case>/graph.json")->required();
  sc->add_option("--out", score_out, "Output directory (default <workdir>/score)");

  // pipeline
  auto* pl = app.add_subcommand("pipeline", "synth-journal, describe, graph and score in one run");
  std::string pipeline_out;
  pl->add_option("--model", model, "Checkpoint (default <workdir>/model/best.ckpt)");
  pl->add_option("--descriptor", descriptor, "tae or raw");
  pl->add_option("--images", corpus, "Directory of root images (procedural when absent)");
  pl->add_option("--cases", n_cases, "Number of journals");
  pl->add_option("--min-nodes", min_nodes, "Fewest nodes per journal");
  pl->add_option("--max-nodes", max_nodes, "Most nodes per journal");
  pl->add_option("--strategy", strategy, "keypoint or grid")->check(CLI::IsMember({"keypoint", "grid"}));
  pl->add_option("--max-count", max_count, "Patch cap per image");
  pl->add_option("--out", pipeline_out, "Output directory (default <workdir>/pipeline)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    Context ctx;
    ctx.workdir = workdir;
    ctx.verbose = verbose;
    ctx.log = &std::cerr;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw UsageError(config_path + ": " + e.what());
      }
      ctx.config = pipeline_config_from_json(j);
    }
    auto& c = ctx.config;
    override_with(seed, c.seed);
    override_with(corpus, c.corpus);
    override_with(procedural, c.procedural_images);
    override_with(procedural_size, c.procedural_size);
    if (difficulty) c.difficulty = difficulty_mix_from_string(*difficulty);
    override_with(per_image, c.patches_per_image);
    override_with(n_cases, c.n_cases);
    override_with(min_nodes, c.min_nodes);
    override_with(max_nodes, c.max_nodes);
    override_with(branching, c.branching);
    override_with(journal_side, c.journal_side);
    override_with(epochs, c.train.max_epochs);
    override_with(batch_size, c.train.batch_size);
    override_with(batches_per_epoch, c.train.batches_per_epoch);
    override_with(lr, c.train.learning_rate);
    override_with(max_val, c.max_val_records);
    if (strategy) c.sampling.strategy = sampling_strategy_from_string(*strategy);
    override_with(max_count, c.sampling.max_count);
    c.train.validate();
    c.sampling.validate();

    const fs::path wd = ctx.workdir;
    WorkdirLock lock(wd);
    auto or_default = [&](const std::string& given, const char* sub) {
      return given.empty() ? wd / sub : fs::path(given);
    };
    const Descriptor desc = parse_descriptor(descriptor);
    const std::optional<fs::path> model_path =
        model ? std::optional<fs::path>(*model)
              : (desc == Descriptor::network ? std::optional<fs::path>(wd / "model" / "best.ckpt") : std::nullopt);

    if (*synth) {
      const auto s = cli::cmd_synth(ctx, or_default(synth_out, "data"));
      std::cout << "synth: " << s.records << " quadruplets from " << s.images << " images\n";
    } else if (*sj) {
      const auto ids = cli::cmd_synth_journal(ctx, or_default(sj_out, "journals"));
      std::cout << "synth-journal: " << ids.size() << " cases\n";
    } else if (*tr) {
      const auto r = cli::cmd_train(ctx, or_default(data_dir, "data"), or_default(model_dir, "model"), resume);
      std::cout << "train: " << r.history.size() << " epochs, best epoch " << r.best_epoch << " precision "
                << r.best_precision << "\n";
    } else if (*de) {
      std::vector<fs::path> inputs(describe_inputs.begin(), describe_inputs.end());
      const auto files = cli::cmd_describe(ctx, inputs, desc, model_path, or_default(describe_out, "features"));
      std::cout << "describe: " << files.size() << " feature files\n";
    } else if (*gr) {
      std::vector<fs::path> inputs(graph_inputs.begin(), graph_inputs.end());
      if (inputs.size() < 2 && !(inputs.size() == 1 && fs::is_directory(inputs[0]))) {
        throw UsageError("graph needs at least two inputs");
      }
      const auto g = cli::cmd_graph(ctx, inputs, desc, model_path, or_default(graph_out, "graph"));
      std::cout << "graph: " << g.nodes.size() << " nodes, " << g.edges.size() << " edges\n";
    } else if (*sc) {
      const auto o = cli::cmd_score(ctx, journals_dir, candidates_dir, or_default(score_out, "score"));
      std::printf("score: %zu cases, VO %.4f EO %.4f VEO %.4f\n", o.batch.cases.size(), o.batch.mean.vo,
                  o.batch.mean.eo, o.batch.mean.veo);
      for (const auto& m : o.missing) std::cerr << "tae: no candidate graph for case " << m << "\n";
      if (!o.missing.empty()) return kExitData;
    } else if (*pl) {
      const auto o = cli::cmd_pipeline(ctx, desc, model_path, or_default(pipeline_out, "pipeline"));
      std::printf("pipeline: %zu cases, VO %.4f EO %.4f VEO %.4f\n", o.batch.cases.size(), o.batch.mean.vo,
                  o.batch.mean.eo, o.batch.mean.veo);
    }
    return 0;
  } catch (const cli::UsageError& e) {
    std::cerr << "tae: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidConfiguration& e) {
    std::cerr << "tae: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "tae: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "tae: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
