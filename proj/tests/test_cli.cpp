#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace qocdao;
using namespace qocdao::testing;
namespace fs = std::filesystem;

namespace {

const std::string kCli = QOCDAO_CLI;
const std::string kSamples = QOCDAO_SAMPLES_DIR;

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr
};

Run run(const std::string& args) {
  Run r;
  const std::string cmd = "'" + kCli + "' " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (auto n = std::fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("qocdao-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HumanOnlyVoteWritesReportAndValidLedger) {
  const auto r = run("run-vote --config " + kSamples + "/config_human.json --proposal " + kSamples +
                     "/proposal.json --ballots " + kSamples + "/ballots --out " + path("report.json") + " --markdown " +
                     path("report.md") + " --ledger " + path("ledger.ndjson"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(path("report.json")));
  EXPECT_TRUE(fs::exists(path("report.md")));
  const auto report = read_json_file(path("report.json"));
  EXPECT_FALSE(report.at("outliers").empty());

  const auto v = run("verify-ledger --ledger " + path("ledger.ndjson"));
  EXPECT_EQ(v.code, 0) << v.output;
  EXPECT_NE(v.output.find("ledger valid"), std::string::npos);

  // Tampering with a payload breaks verification with exit code 1.
  std::ifstream in(path("ledger.ndjson"));
  std::string all((std::istreambuf_iterator<char>(in)), {});
  const auto pos = all.find("\"voter\":\"bob\"");
  ASSERT_NE(pos, std::string::npos);
  all.replace(pos, 13, "\"voter\":\"eve\"");
  std::ofstream(path("tampered.ndjson")) << all;
  const auto t = run("verify-ledger --ledger " + path("tampered.ndjson"));
  EXPECT_EQ(t.code, 1);
  EXPECT_NE(t.output.find("broken at record"), std::string::npos);

  const auto m = run("render --report " + path("report.json"));
  EXPECT_EQ(m.code, 0);
  EXPECT_NE(m.output.find("Strengths"), std::string::npos);
}

TEST_F(CliTest, MalformedBallotNamesFileAndLine) {
  fs::create_directories(path("ballots"));
  fs::copy_file(kSamples + "/ballots/alice.json", path("ballots/alice.json"));
  std::ofstream(path("ballots/broken.json")) << "{\n  \"voter\": \"x\",\n  \"evaluations\": {\n    \"yes\": {,\n";
  const auto r = run("run-vote --config " + kSamples + "/config_human.json --proposal " + kSamples +
                     "/proposal.json --ballots " + path("ballots"));
  EXPECT_EQ(r.code, 1) << r.output;
  EXPECT_NE(r.output.find("broken.json:4"), std::string::npos) << r.output;
}

TEST_F(CliTest, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("run-vote --proposal x").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(CliTest, HumanInTheLoopSplitsIntoRecommendationAndDecision) {
  const auto first = run("run-vote --config " + kSamples + "/config_hitl.json --proposal " + kSamples +
                         "/proposal.json --session " + path("session.json"));
  ASSERT_EQ(first.code, 0) << first.output;
  EXPECT_NE(first.output.find("decide --session"), std::string::npos);
  ASSERT_TRUE(fs::exists(path("session.json")));

  const auto second = run("decide --session " + path("session.json") + " --decision no --actor carol --out " +
                          path("report.json") + " --ledger " + path("ledger.ndjson"));
  ASSERT_EQ(second.code, 0) << second.output;
  const auto report = read_json_file(path("report.json"));
  EXPECT_EQ(report.at("decided_by"), "human");
  EXPECT_EQ(report.at("actor"), "carol");
  EXPECT_EQ(run("verify-ledger --ledger " + path("ledger.ndjson")).code, 0);

  EXPECT_EQ(run("decide --session " + path("session.json") + " --decision maybe").code, 1);
}

TEST_F(CliTest, StatsReproducesPublishedTables) {
  const std::string f = QOCDAO_FIXTURE_DIR;
  const auto r = run("stats --pairs " + f + "/pairs/gpt-4-mini.ndjson --name 'GPT-4 mini' --pairs " + f +
                     "/pairs/gpt-5-mini.ndjson --name 'GPT-5 mini' --pairs " + f + "/pairs/gpt-5.ndjson --name GPT-5" +
                     " --out " + path("stats.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char* needle : {"66.7", "54.9", "52.0", "1.06", "19.57", "37.73", "3.03e-01", "9.72e-06", "8.11e-10"})
    EXPECT_NE(r.output.find(needle), std::string::npos) << needle;
  const auto stats = read_json_file(path("stats.json"));
  EXPECT_EQ(stats["models"][2]["cost"]["total"], 76.0);
}

TEST_F(CliTest, ReplayIsByteIdenticalAcrossRuns) {
  const std::string corpus = std::string(QOCDAO_FIXTURE_DIR) + "/corpus5.ndjson";
  auto once = [&](const std::string& tag) {
    const auto r = run("replay --corpus " + corpus + " --config " + kSamples + "/config_autonomous.json --pairs-out " +
                       path(tag + ".ndjson") + " --out " + path(tag + ".json"));
    EXPECT_EQ(r.code, 0) << r.output;
    std::ifstream in(path(tag + ".json"));
    return std::string((std::istreambuf_iterator<char>(in)), {});
  };
  EXPECT_EQ(once("a"), once("b"));
  EXPECT_EQ(run("replay --corpus " + path("missing.ndjson") + " --config " + kSamples + "/config_autonomous.json").code,
            1);
}
