#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>

#include "selftrain/selftrain.hpp"

namespace st = selftrain;
namespace fs = std::filesystem;

namespace {

const std::string kData = SELFTRAIN_TEST_DATA;

struct Outcome {
  int code;
  std::string output;  // stdout and stderr interleaved
};

Outcome run(const std::string& args) {
  const std::string cmd = std::string(SELFTRAIN_CLI) + " -q " + args + " 2>&1";
  Outcome o{-1, {}};
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  std::array<char, 4096> buf{};
  while (auto n = std::fread(buf.data(), 1, buf.size(), pipe)) o.output.append(buf.data(), n);
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("selftrain_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto g = st::WeightedGrammar::load(kData + "/source.grammar");
    st::SeededRng rng(3);
    st::Treebank tb;
    for (int i = 0; i < 40; ++i) tb.add(g.sample_tree(rng));
    st::save_treebank(p("source.mrg"), tb);
    st::write_text_file(p("samples.txt"), "i own a stock .\nyou say it rose .\n");
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string p(const std::string& f) const { return (dir / f).string(); }

  std::string config(const std::string& out) const {
    return "--source_treebank " + p("source.mrg") + " --target_samples " + p("samples.txt") +
           " --mock_grammar " + kData + "/source.grammar --corpus_size 15 --top_k 3 --iterations 2 --seed 5" +
           " --retry_base_delay_ms 0 --rare_threshold 4 --output_dir " + p(out);
  }
};

}  // namespace

TEST_F(Cli, MissingRequiredKeyIsUsageError) {
  const auto o = run("self-train --iterations 1");
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.output.find("source_treebank"), std::string::npos) << o.output;
}

TEST_F(Cli, ZeroIterationsIsUsageError) {
  const auto o = run("self-train " + config("out") + " --iterations 0");
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.output.find("iterations"), std::string::npos) << o.output;
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("train --out x.json").code, 2);
}

TEST_F(Cli, ConfigFileAndFlagPrecedence) {
  st::write_text_file(p("run.cfg"), "iterations = 0\nseed = 5\n");
  EXPECT_EQ(run("self-train --config " + p("run.cfg") + " " + config("a") + " --iterations 0").code, 2);
  // flag overrides the file
  st::write_text_file(p("run.cfg"), "iterations = 0\n");
  EXPECT_EQ(run("self-train --config " + p("run.cfg") + " " + config("a")).code, 0);
  st::write_text_file(p("bad.cfg"), "[run]\niterations = 1\n");
  EXPECT_EQ(run("self-train --config " + p("bad.cfg") + " " + config("a")).code, 2);
}

TEST_F(Cli, SelfTrainIsReproducibleAndReportIsIdempotent) {
  const auto a = run("self-train " + config("a"));
  ASSERT_EQ(a.code, 0) << a.output;
  const auto b = run("self-train " + config("b"));
  ASSERT_EQ(b.code, 0) << b.output;
  for (const char* f : {"treebank.mrg", "pseudo_treebank.mrg", "metrics.jsonl", "model.json"})
    EXPECT_EQ(st::read_text_file(p("a/") + f), st::read_text_file(p("b/") + f)) << f;
  EXPECT_EQ(st::load_treebank(p("a/pseudo_treebank.mrg")).size(), 6u);

  const auto r1 = run("report " + p("a"));
  ASSERT_EQ(r1.code, 0) << r1.output;
  const auto csv = st::read_text_file(p("a/report.csv"));
  const auto r2 = run("report " + p("a"));
  EXPECT_EQ(r1.output, r2.output);
  EXPECT_EQ(csv, st::read_text_file(p("a/report.csv")));

  fs::create_directories(dir / "empty");
  EXPECT_NE(run("report " + p("empty")).code, 0);
}

TEST_F(Cli, TrainParseScoreValidate) {
  ASSERT_EQ(run("train --treebank " + p("source.mrg") + " --out " + p("m.json")).code, 0);
  const auto tb = st::load_treebank(p("source.mrg"));
  std::string raw;
  for (const auto& t : tb.trees) raw += st::sentence_text(t.tokens()) + "\n";
  st::write_text_file(p("raw.txt"), raw);
  const auto parsed = run("parse --model " + p("m.json") + " --input " + p("raw.txt") + " --out " + p("pred.mrg"));
  ASSERT_EQ(parsed.code, 0) << parsed.output;
  EXPECT_TRUE(fs::exists(p("pred.mrg.scores.jsonl")));

  const auto scored = run("score --gold " + p("source.mrg") + " --pred " + p("pred.mrg") + " --json " + p("s.json"));
  ASSERT_EQ(scored.code, 0) << scored.output;
  const auto j = nlohmann::json::parse(st::read_text_file(p("s.json")));
  EXPECT_GT(j.at("F1").get<double>(), 50.0);

  const auto ok = run("validate " + p("source.mrg"));
  EXPECT_EQ(ok.code, 0) << ok.output;
  EXPECT_NE(ok.output.find("ok trees=40"), std::string::npos);
  st::write_text_file(p("broken.mrg"), "(S (NN a)\n");
  const auto bad = run("validate " + p("broken.mrg"));
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.output.find("INVALID"), std::string::npos);
  EXPECT_EQ(run("train --treebank " + p("missing.mrg") + " --out " + p("m2.json")).code, 1);
}
