#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace unir;

namespace {

struct RunResult {
  int code = -1;
  std::string output;  // stdout and stderr
};

RunResult run(const std::string& args, const fs::path& scratch) {
  const fs::path log = scratch / "cli.log";
  const std::string cmd = std::string(UNIR_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::ostringstream os;
  os << in.rdbuf();
  r.output = os.str();
  return r;
}

std::string fixture(const std::string& set, const std::string& file) {
  return (fs::path(UNIR_TEST_DATA) / set / file).string();
}

}  // namespace

TEST(Cli, ValidateGoodFixture) {
  test::TempDir dir("cli-validate");
  const auto r = run("validate --queries " + fixture("good", "queries.jsonl") + " --candidates " +
                         fixture("good", "candidates.jsonl"),
                     dir.path());
  EXPECT_EQ(r.code, 0) << r.output;
}

TEST(Cli, DanglingReferenceIsDataError) {
  test::TempDir dir("cli-dangling");
  const auto r = run("validate --queries " + fixture("dangling", "queries.jsonl") + " --candidates " +
                         fixture("dangling", "candidates.jsonl"),
                     dir.path());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("error[DANGLING_REF]"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("c9"), std::string::npos);
}

TEST(Cli, UsageErrors) {
  test::TempDir dir("cli-usage");
  EXPECT_EQ(run("", dir.path()).code, 1);
  EXPECT_EQ(run("frobnicate", dir.path()).code, 1);
  EXPECT_EQ(run("validate", dir.path()).code, 1);
  EXPECT_EQ(run("search --k notanumber", dir.path()).code, 1);
  const auto r = run("eval --queries /no/such/file", dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("error[USAGE]"), std::string::npos) << r.output;
  EXPECT_EQ(run("--help", dir.path()).code, 0);
}

TEST(Cli, SynthTrainEmbedIndexSearch) {
  test::TempDir dir("cli-pipeline");
  const auto d = dir.path();
  const std::string corpus = " --queries " + (d / "synth/queries.jsonl").string() + " --candidates " +
                             (d / "synth/candidates.jsonl").string() + " --features " +
                             (d / "synth/features.unir").string();
  auto r = run("--seed 5 synth --out " + (d / "synth").string() +
                   " --queries-per-task 40 --pool-per-task 40 --topics 8 --dim 32",
               d);
  ASSERT_EQ(r.code, 0) << r.output;
  r = run("validate" + corpus, d);
  ASSERT_EQ(r.code, 0) << r.output;
  r = run("train" + corpus + " --epochs 2 --out " + (d / "model.ckpt").string(), d);
  ASSERT_EQ(r.code, 0) << r.output;
  r = run("embed --candidates " + (d / "synth/candidates.jsonl").string() + " --features " +
              (d / "synth/features.unir").string() + " --checkpoint " + (d / "model.ckpt").string() + " --out " +
              (d / "pool.unir").string(),
          d);
  ASSERT_EQ(r.code, 0) << r.output;
  r = run("index-build --embeddings " + (d / "pool.unir").string() + " --out " + (d / "index.json").string() +
              " --kind clustered --lists 8 --n-probe 8 --checkpoint " + (d / "model.ckpt").string(),
          d);
  ASSERT_EQ(r.code, 0) << r.output;

  const std::string search = "search --index " + (d / "index.json").string() + " --checkpoint " +
                             (d / "model.ckpt").string() + " --features " + (d / "synth/features.unir").string();
  r = run(search + " --txt 'some words' --instruction 'find a news image' --k 3", d);
  ASSERT_EQ(r.code, 0) << r.output;
  // one "rank<TAB>did<TAB>score" line per hit
  std::istringstream lines(r.output);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    EXPECT_TRUE(line.starts_with(std::to_string(++n) + "\t")) << line;
    EXPECT_NE(line.find("synth-"), std::string::npos) << line;
  }
  EXPECT_EQ(n, 3);

  r = run(search + " --img-id no-such-image --k 3", d);
  EXPECT_EQ(r.code, 2) << r.output;

  r = run("eval" + corpus + " --checkpoint " + (d / "model.ckpt").string() + " --format csv --out " +
              (d / "eval.csv").string(),
          d);
  ASSERT_EQ(r.code, 0) << r.output;
  r = run("report --input " + (d / "eval.csv").string() + " --baseline " + (d / "eval.csv").string() +
              " --format csv",
          d);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find(",delta"), std::string::npos);

  // corrupt the embedding file the index points at
  {
    std::fstream f(d / "pool.unir", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x7f');
  }
  r = run(search + " --txt x --k 3", d);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("error[CHECKSUM_MISMATCH]"), std::string::npos) << r.output;
}

TEST(Cli, ExperimentRunWritesDelta) {
  test::TempDir dir("cli-exp");
  const auto plan = dir.path() / "plan.cfg";
  std::ofstream(plan) << "[plan]\nseed = 1\ndelta_treatment = b\ndelta_baseline = a\n"
                         "[synth]\nqueries_per_task = 30\npool_per_task = 30\ntopics_per_domain = 6\n"
                         "[train]\nepochs = 1\n[condition.a]\ninstructions = false\n[condition.b]\n";
  const auto r = run("experiment run --plan " + plan.string() + " --out " + (dir.path() / "run").string(), dir.path());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir.path() / "run" / "delta.csv"));
  EXPECT_TRUE(fs::exists(dir.path() / "run" / "manifest.json"));

  std::ofstream(plan, std::ios::app) << "surprise = 1\n";
  const auto bad = run("experiment run --plan " + plan.string() + " --out " + (dir.path() / "run2").string(),
                       dir.path());
  EXPECT_EQ(bad.code, 2) << bad.output;
  EXPECT_NE(bad.output.find("error[CONFIG_INVALID]"), std::string::npos) << bad.output;
}
