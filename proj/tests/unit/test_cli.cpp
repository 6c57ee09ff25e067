#include <gtest/gtest.h>
#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "helpers.hpp"
#include "tae/checkpoint.hpp"
#include "tae/dissim.hpp"
#include "tae/provgraph.hpp"

namespace tae {
namespace {

namespace fs = std::filesystem;
using testing::scratch_dir;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Runs the tae binary; returns its exit status.
int run(const std::string& args) {
  const std::string cmd = std::string(TAE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Slim network and short training so CLI round trips stay fast.
fs::path write_config(const fs::path& dir) {
  cli::PipelineConfig c;
  c.seed = 11;
  c.network = testing::slim_config();
  c.train.batch_size = 8;
  c.train.batches_per_epoch = 2;
  c.train.max_epochs = 1;
  c.procedural_size = 160;
  c.patches_per_image = 12;
  c.sampling.max_count = 20;
  c.n_cases = 3;
  c.min_nodes = 3;
  c.max_nodes = 4;
  c.journal_side = 160;
  std::ofstream(dir / "config.json") << cli::to_json(c).dump(2);
  return dir / "config.json";
}

std::string base(const fs::path& dir) {
  return "--config " + (dir / "config.json").string() + " --workdir " + dir.string();
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch_dir("cli_exit");
  write_config(dir);
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("bogus"), 1);
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(base(dir) + " synth --difficulty impossible"), 1);
  EXPECT_EQ(run(base(dir) + " train --data " + (dir / "nothing").string()), 2);
  EXPECT_EQ(run(base(dir) + " graph " + (dir / "config.json").string()), 1);
  EXPECT_EQ(run(base(dir) + " synth --procedural 1"), 1);
  EXPECT_EQ(run(base(dir) + " describe " + (dir / "missing.png").string() + " --descriptor raw"), 2);
  EXPECT_EQ(run(base(dir) + " train --batch-size 1"), 1);
}

TEST(Cli, SynthHardOnlyDeterministicAndRecounted) {
  const auto dir = scratch_dir("cli_synth");
  write_config(dir);
  ASSERT_EQ(run(base(dir) + " synth --procedural 4 --difficulty hard --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run(base(dir) + " synth --procedural 4 --difficulty hard --out " + (dir / "b").string()), 0);
  for (const char* f : {"manifest.jsonl", "patches.bin", "patches.idx.jsonl", "chains.jsonl", "synth_report.json"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
  const auto records = read_manifest(dir / "a" / "manifest.jsonl");
  ASSERT_FALSE(records.empty());
  for (const auto& r : records) EXPECT_EQ(r.difficulty, Difficulty::hard);
  const auto report = nlohmann::json::parse(slurp(dir / "a" / "synth_report.json"));
  std::size_t sum = 0;
  std::map<std::string, std::size_t> per_anchor;
  for (const auto& r : records) ++per_anchor[r.anchor.image_id];
  for (const auto& p : report.at("per_image")) {
    sum += p.at("records").get<std::size_t>();
    EXPECT_EQ(per_anchor[p.at("image").get<std::string>()], p.at("records").get<std::size_t>());
  }
  EXPECT_EQ(sum, records.size());
}

TEST(Cli, SynthNamesFailingImage) {
  const auto dir = scratch_dir("cli_synth_fail");
  write_config(dir);
  fs::create_directories(dir / "corpus");
  write_image(testing::textured(1, 160, 160), dir / "corpus" / "good.png");
  write_image(Image(40, 40, 3, 9), dir / "corpus" / "tiny.png");
  const std::string cmd = std::string(TAE_CLI_PATH) + " " + base(dir) + " synth --images " +
                          (dir / "corpus").string() + " 2>" + (dir / "err.txt").string() + " >/dev/null";
  const int status = std::system(cmd.c_str());
  EXPECT_NE(WEXITSTATUS(status), 0);
  EXPECT_NE(slurp(dir / "err.txt").find("tiny"), std::string::npos);
}

TEST(Cli, TrainOneEpochThenResume) {
  const auto dir = scratch_dir("cli_train");
  write_config(dir);
  ASSERT_EQ(run(base(dir) + " synth --procedural 6"), 0);
  ASSERT_EQ(run(base(dir) + " train --epochs 1"), 0);
  auto lines = [&] {
    std::vector<std::string> out;
    std::istringstream in(slurp(dir / "model" / "history.csv"));
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
  };
  ASSERT_EQ(lines().size(), 2u);
  EXPECT_EQ(lines()[1].substr(0, 2), "1,");
  const std::string first_run = slurp(dir / "model" / "history.csv");

  ASSERT_EQ(run(base(dir) + " train --epochs 3 --resume"), 0);
  const auto l = lines();
  ASSERT_EQ(l.size(), 4u);
  EXPECT_EQ(l[1] + "\n", first_run.substr(first_run.find('\n') + 1));
  EXPECT_EQ(l[2].substr(0, 2), "2,");
  EXPECT_EQ(l[3].substr(0, 2), "3,");

  // Best checkpoint carries the epoch of the highest precision row.
  int best_epoch = 0;
  double best = -1;
  for (std::size_t i = 1; i < l.size(); ++i) {
    std::istringstream row(l[i]);
    std::string epoch, tl, vl, prec;
    std::getline(row, epoch, ',');
    std::getline(row, tl, ',');
    std::getline(row, vl, ',');
    std::getline(row, prec, ',');
    if (std::stod(prec) > best) {
      best = std::stod(prec);
      best_epoch = std::stoi(epoch);
    }
  }
  EXPECT_EQ(load_checkpoint(dir / "model" / "best.ckpt").metadata.at("epoch").get<int>(), best_epoch);
}

class CliGraphTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(scratch_dir("cli_graph"));
    write_config(*dir_);
    ASSERT_EQ(run(base(*dir_) + " synth --procedural 4"), 0);
    ASSERT_EQ(run(base(*dir_) + " train --epochs 1"), 0);
    ASSERT_EQ(run(base(*dir_) + " synth-journal"), 0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path* dir_;
};
fs::path* CliGraphTest::dir_ = nullptr;

TEST_F(CliGraphTest, TwoImagesGiveOneEdgeAndRerunIsIdentical) {
  const auto& dir = *dir_;
  const auto c = dir / "journals" / "case000";
  const auto j = read_journal(c / "journal.json");
  const std::string inputs = (c / (j.nodes[0] + ".png")).string() + " " + (c / (j.nodes[1] + ".png")).string();
  ASSERT_EQ(run(base(dir) + " graph " + inputs + " --out " + (dir / "g1").string()), 0);
  ASSERT_EQ(run(base(dir) + " graph " + inputs + " --out " + (dir / "g2").string()), 0);
  const auto g = import_graph(dir / "g1" / "graph.json");
  EXPECT_EQ(g.nodes.size(), 2u);
  EXPECT_EQ(g.edges.size(), 1u);
  for (const char* f : {"matrix.json", "graph.json", "graph.dot"}) EXPECT_EQ(slurp(dir / "g1" / f), slurp(dir / "g2" / f));
}

TEST_F(CliGraphTest, MatchesLibraryComposition) {
  const auto& dir = *dir_;
  const auto c = dir / "journals" / "case001";
  const auto j = read_journal(c / "journal.json");
  ASSERT_EQ(run(base(dir) + " describe " + c.string() + " --out " + (dir / "feat").string()), 0);
  ASSERT_EQ(run(base(dir) + " graph " + (dir / "feat").string() + " --out " + (dir / "gf").string()), 0);

  const auto cfg = cli::pipeline_config_from_json(nlohmann::json::parse(slurp(dir / "config.json")));
  EmbeddingNetwork net = network_from_checkpoint(load_checkpoint(dir / "model" / "best.ckpt"));
  std::vector<std::string> names(j.nodes.begin(), j.nodes.end());
  std::sort(names.begin(), names.end());
  std::vector<FeatureSet> sets;
  for (const auto& n : names) {
    sets.push_back(describe_image(net, read_image(c / (n + ".png")), n, cfg.sampling));
    EXPECT_EQ(load_features(dir / "feat" / (n + ".feat")), sets.back());
  }
  const auto d = build_matrix(sets);
  EXPECT_EQ(dissimilarity_from_json(nlohmann::json::parse(slurp(dir / "gf" / "matrix.json"))), d);
  EXPECT_EQ(import_graph(dir / "gf" / "graph.json"), kruskal_spanning_tree(d));

  // Images straight into graph give the same result as feature files.
  ASSERT_EQ(run(base(dir) + " graph " + c.string() + " --out " + (dir / "gi").string()), 0);
  EXPECT_EQ(slurp(dir / "gi" / "graph.json"), slurp(dir / "gf" / "graph.json"));
}

TEST_F(CliGraphTest, ScorePerfectAndMissing) {
  const auto& dir = *dir_;
  // Ground truth as candidate.
  for (const auto& id : {"case000", "case001", "case002"}) {
    const auto j = read_journal(dir / "journals" / id / "journal.json");
    ProvenanceGraph g;
    g.nodes = j.nodes;
    for (const auto& [a, b] : j.edges) g.edges.push_back({a, b, std::nullopt});
    fs::create_directories(dir / "perfect" / id);
    export_graph(g, GraphFormat::json, dir / "perfect" / id / "graph.json");
  }
  ASSERT_EQ(run(base(dir) + " score --journals " + (dir / "journals").string() + " --candidates " +
                (dir / "perfect").string() + " --out " + (dir / "s1").string()),
            0);
  const auto summary = nlohmann::json::parse(slurp(dir / "s1" / "summary.json"));
  for (const char* m : {"vo", "eo", "veo"}) EXPECT_EQ(summary.at("means").at(m).get<double>(), 1.0);

  fs::remove_all(dir / "perfect" / "case001");
  EXPECT_EQ(run(base(dir) + " score --journals " + (dir / "journals").string() + " --candidates " +
                (dir / "perfect").string() + " --out " + (dir / "s2").string()),
            2);
  const auto s2 = nlohmann::json::parse(slurp(dir / "s2" / "summary.json"));
  EXPECT_EQ(s2.at("missing"), nlohmann::json::array({"case001"}));
  EXPECT_EQ(s2.at("n_cases").get<int>(), 2);
}

TEST_F(CliGraphTest, PipelineEqualsManualCommandsAndCsvMeans) {
  const auto& dir = *dir_;
  ASSERT_EQ(run(base(dir) + " pipeline --out " + (dir / "pipe").string()), 0);

  // The same four steps by hand.
  ASSERT_EQ(run(base(dir) + " synth-journal --out " + (dir / "man" / "journals").string()), 0);
  for (const auto& id : {"case000", "case001", "case002"}) {
    const auto jdir = dir / "man" / "journals" / id;
    ASSERT_EQ(run(base(dir) + " describe " + jdir.string() + " --out " + (dir / "man" / "features" / id).string()), 0);
    ASSERT_EQ(run(base(dir) + " graph " + (dir / "man" / "features" / id).string() + " --out " +
                  (dir / "man" / "graphs" / id).string()),
              0);
  }
  ASSERT_EQ(run(base(dir) + " score --journals " + (dir / "man" / "journals").string() + " --candidates " +
                (dir / "man" / "graphs").string() + " --out " + (dir / "man" / "score").string()),
            0);
  EXPECT_EQ(slurp(dir / "pipe" / "score" / "summary.json"), slurp(dir / "man" / "score" / "summary.json"));
  EXPECT_EQ(slurp(dir / "pipe" / "score" / "report.csv"), slurp(dir / "man" / "score" / "report.csv"));

  // Summary means against the CSV columns.
  std::istringstream csv(slurp(dir / "pipe" / "score" / "report.csv"));
  std::string line;
  std::getline(csv, line);
  double sums[3] = {0, 0, 0};
  int rows = 0;
  while (std::getline(csv, line)) {
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    for (double& s : sums) {
      std::getline(row, cell, ',');
      s += std::stod(cell);
    }
    ++rows;
  }
  const auto summary = nlohmann::json::parse(slurp(dir / "pipe" / "score" / "summary.json"));
  EXPECT_EQ(rows, 3);
  EXPECT_NEAR(summary.at("means").at("vo").get<double>(), sums[0] / rows, 1e-6);
  EXPECT_NEAR(summary.at("means").at("eo").get<double>(), sums[1] / rows, 1e-6);
  EXPECT_NEAR(summary.at("means").at("veo").get<double>(), sums[2] / rows, 1e-6);
  EXPECT_EQ(summary.at("means").at("vo").get<double>(), 1.0);
}

TEST(CliConfig, JsonRoundTrip) {
  cli::PipelineConfig c;
  c.seed = 99;
  c.branching = {0.25, 0.5};
  c.sampling.max_count = 7;
  c.network = testing::slim_config();
  const auto d = cli::pipeline_config_from_json(cli::to_json(c));
  EXPECT_EQ(cli::to_json(d), cli::to_json(c));
  EXPECT_EQ(d.network, c.network);
}

TEST(CliConfig, FlagsOverrideConfig) {
  const auto dir = scratch_dir("cli_override");
  write_config(dir);
  ASSERT_EQ(run(base(dir) + " synth-journal --cases 2 --min-nodes 2 --max-nodes 2"), 0);
  EXPECT_TRUE(fs::exists(dir / "journals" / "case001"));
  EXPECT_FALSE(fs::exists(dir / "journals" / "case002"));
  EXPECT_EQ(read_journal(dir / "journals" / "case000" / "journal.json").nodes.size(), 2u);
}

}  // namespace
}  // namespace tae
