#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>

#include "prm/io/dataset.hpp"
#include "prm/io/proposals.hpp"
#include "prm/io/files.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / ("prm_cli_test_" + std::to_string(::getpid()));

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " \"" PRM_CLI_PATH "\" " + args + " >\"" + (kRoot / "last.log").string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string last_log() { return prm::io::read_file(kRoot / "last.log"); }

std::string p(const std::string& rel) { return "\"" + (kRoot / rel).string() + "\""; }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    ASSERT_EQ(run("gen-data --out " + p("data") + " --count 12 --train-count 8 --distractors 5"), 0) << last_log();
    ASSERT_EQ(run("train-toy --data " + p("data") + " --out " + p("w.bin") + " --steps 4 --batch 2"), 0) << last_log();
  }
};

}  // namespace

TEST_F(Cli, GradcheckPasses) { EXPECT_EQ(run("gradcheck --seed 1"), 0) << last_log(); }

TEST_F(Cli, UnknownFlagIsUsageError) {
  EXPECT_EQ(run("gradcheck --bogus"), 2);
  EXPECT_EQ(run("no-such-command"), 2);
  EXPECT_EQ(run("train-toy --data " + p("missing") + " --out " + p("x.bin")), 2);
}

TEST_F(Cli, EmptyProposalFileIsUsageError) {
  prm::io::atomic_write(kRoot / "empty.jsonl", "");
  EXPECT_EQ(run("segment --data " + p("data") + " --weights " + p("w.bin") + " --proposals " + p("empty.jsonl") +
                " --out " + p("pred.jsonl")),
            2);
  EXPECT_FALSE(last_log().empty());
}

TEST_F(Cli, EvalOfGroundTruthIsPerfect) {
  const auto ds = prm::io::load_dataset(kRoot / "data");
  prm::io::PredictionMap preds;
  for (std::size_t id = ds.train_count; id < ds.samples.size(); ++id)
    for (const auto& g : ds.samples[id].truth.instances) {
      prm::InstancePrediction ip;
      ip.class_id = g.class_id;
      ip.confidence = 1.0;
      ip.mask = g.mask;
      preds[id].push_back(ip);
    }
  prm::io::save_predictions(kRoot / "gt.jsonl", preds);
  ASSERT_EQ(run("eval --data " + p("data") + " --predictions " + p("gt.jsonl") + " --out " + p("report")), 0)
      << last_log();
  const auto report = nlohmann::json::parse(prm::io::read_file(kRoot / "report" / "report.json"));
  ASSERT_EQ(report.at("metrics").size(), 5u);
  for (const auto& m : report.at("metrics")) EXPECT_EQ(m.at("aggregate").get<double>(), 1.0) << m.dump();
  EXPECT_NE(prm::io::read_file(kRoot / "report" / "report.txt").find("100.00%"), std::string::npos);
}

TEST_F(Cli, FullPipelineIsByteReproducible) {
  const std::string seg = "segment --data " + p("data") + " --weights " + p("w.bin") + " --proposals " +
                          p("data/proposals.jsonl") + " --cutoff -1000 --out ";
  ASSERT_EQ(run(seg + p("s1.jsonl")), 0) << last_log();
  ASSERT_EQ(run(seg + p("s2.jsonl")), 0) << last_log();
  EXPECT_EQ(prm::io::read_file(kRoot / "s1.jsonl"), prm::io::read_file(kRoot / "s2.jsonl"));
  EXPECT_FALSE(prm::io::read_file(kRoot / "s1.jsonl").empty());

  ASSERT_EQ(run("gen-data --out " + p("data2") + " --count 12 --train-count 8 --distractors 5"), 0);
  for (const char* f : {"manifest.json", "proposals.jsonl", "images/000003.pgm", "masks/000003_0.pgm"})
    EXPECT_EQ(prm::io::read_file(kRoot / "data" / f), prm::io::read_file(kRoot / "data2" / f)) << f;
  ASSERT_EQ(run("train-toy --data " + p("data2") + " --out " + p("w2.bin") + " --steps 4 --batch 2"), 0);
  EXPECT_EQ(prm::io::read_file(kRoot / "w.bin"), prm::io::read_file(kRoot / "w2.bin"));

  ASSERT_EQ(run("infer --data " + p("data") + " --weights " + p("w.bin") + " --limit 1 --out " + p("inf")), 0)
      << last_log();
  EXPECT_FALSE(fs::is_empty(kRoot / "inf"));
}

TEST_F(Cli, ConfigFileBelowFlags) {
  prm::io::atomic_write(kRoot / "strict.cfg", "# impossible tolerance\ngradcheck.tolerance = 0\n");
  const std::string env = "PRM_CONFIG=" + p("strict.cfg");
  EXPECT_EQ(run("gradcheck", env), 1);
  EXPECT_EQ(run("gradcheck --tolerance 1e-6", env), 0) << last_log();
  EXPECT_EQ(run("--config " + p("strict.cfg") + " gradcheck"), 1);
  prm::io::atomic_write(kRoot / "bad.cfg", "no_such_key = 3\n");
  EXPECT_EQ(run("--config " + p("bad.cfg") + " gradcheck"), 2);
}
