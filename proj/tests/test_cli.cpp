// Copyright 2026 The L2T Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string output;
};

fs::path scratch() {
  static const fs::path p = [] {
    fs::path d = fs::temp_directory_path() / ("l2t_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

Result run(const std::string& args, const std::string& env = "") {
  const fs::path log = scratch() / "out.log";
  const std::string cmd = env + " " + L2T_CLI_PATH + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(log);
  std::ostringstream os;
  os << is.rdbuf();
  r.output = os.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

const std::string kSmoke = std::string("--config ") + L2T_SAMPLES_DIR + "/smoke.cfg";

TEST(Cli, UnknownSubcommandPrintsUsage) {
  const auto r = run("frobnicate");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("unknown subcommand 'frobnicate'"), std::string::npos);
  EXPECT_NE(r.output.find("gen-tasks"), std::string::npos);
  EXPECT_EQ(run("").code, 1);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run("--help").code, 0); }

TEST(Cli, MissingConfigNamesPath) {
  const auto r = run("train --config /no/such/file.cfg --out " + (scratch() / "x").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("/no/such/file.cfg"), std::string::npos);
}

TEST(Cli, BadConfigValueIsConfigError) {
  const fs::path cfg = scratch() / "bad.cfg";
  std::ofstream(cfg) << "[reward]\nalpha = -1\n";
  const auto r = run("train --config " + cfg.string() + " --out " + (scratch() / "bad").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("alpha must be > 0"), std::string::npos);
}

TEST(Cli, GenTasks) {
  const fs::path out = scratch() / "tasks";
  const auto r = run("gen-tasks --count 5 --seed 2 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  std::ifstream is(out / "tasks.txt");
  int lines = 0;
  for (std::string line; std::getline(is, line);) lines += !line.empty();
  EXPECT_EQ(lines, 5);
}

TEST(Cli, TrainIsBitReproducible) {
  const fs::path a = scratch() / "train_a", b = scratch() / "train_b";
  ASSERT_EQ(run("train " + kSmoke + " --out " + a.string()).code, 0);
  ASSERT_EQ(run("train " + kSmoke + " --out " + b.string()).code, 0);
  for (const char* f : {"metrics.jsonl", "checkpoint.bin", "reward_traces.jsonl", "trajectories.jsonl"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  std::ifstream is(a / "metrics.jsonl");
  int lines = 0;
  for (std::string line; std::getline(is, line);) {
    const auto j = nlohmann::json::parse(line);
    for (const char* k : {"step", "mean_r_out", "mean_tokens", "mean_dI", "mean_C", "clip_frac", "kl", "wall_ms"})
      EXPECT_TRUE(j.contains(k)) << k;
    ++lines;
  }
  EXPECT_EQ(lines, 4);
  const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  EXPECT_EQ(manifest["subcommand"], "train");
  EXPECT_EQ(manifest["seed"], 3);
  EXPECT_TRUE(fs::exists(a / "config.resolved"));
}

TEST(Cli, OutputRootFromEnvironment) {
  const fs::path root = scratch() / "root";
  const auto r = run("gen-tasks --count 2", "L2T_OUTPUT_ROOT=" + root.string());
  ASSERT_EQ(r.code, 0) << r.output;
  ASSERT_TRUE(fs::exists(root));
  int dirs = 0;
  for (const auto& e : fs::directory_iterator(root)) {
    EXPECT_TRUE(fs::exists(e.path() / "tasks.txt"));
    EXPECT_TRUE(fs::exists(e.path() / "manifest.json"));
    ++dirs;
  }
  EXPECT_EQ(dirs, 1);
}

TEST(Cli, EvalWritesDepthCsv) {
  const fs::path train = scratch() / "train_a";
  if (!fs::exists(train / "checkpoint.bin")) {
    ASSERT_EQ(run("train " + kSmoke + " --out " + train.string()).code, 0);
  }
  const fs::path out = scratch() / "eval";
  const auto r = run("eval " + kSmoke + " --checkpoint " + (train / "checkpoint.bin").string() + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string csv = slurp(out / "depth.csv");
  EXPECT_EQ(csv.rfind("k,acc,mean_tokens,maj_acc\n", 0), 0u);
  EXPECT_TRUE(fs::exists(out / "budget.csv"));
  EXPECT_TRUE(fs::exists(out / "eval.json"));
}

TEST(Cli, EvalRejectsCorruptCheckpoint) {
  const fs::path bad = scratch() / "corrupt.bin";
  std::ofstream(bad) << "not a checkpoint";
  EXPECT_EQ(run("eval " + kSmoke + " --checkpoint " + bad.string() + " --out " + (scratch() / "ev2").string()).code, 2);
}

TEST(Cli, OracleVerifySingleSuite) {
  const auto r = run("oracle-verify --suite gaussian --out " + (scratch() / "ov").string());
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("\"pass\":true"), std::string::npos);
  EXPECT_EQ(r.output.find("\"pass\":false"), std::string::npos);
  EXPECT_EQ(run("oracle-verify --suite nope --out " + (scratch() / "ov2").string()).code, 1);
}

TEST(Cli, BenchCsv) {
  const fs::path out = scratch() / "bench";
  ASSERT_EQ(run("bench --d 64 --r 8 --reps 3 --out " + out.string()).code, 0);
  const std::string csv = slurp(out / "bench.csv");
  EXPECT_EQ(csv.rfind("d,r,full_ns,proxy_ns,ratio\n", 0), 0u);
}

TEST(Cli, AblateWritesSummary) {
  const fs::path out = scratch() / "ablate";
  const auto r = run("ablate " + kSmoke + " --variant OUTCOME_ONLY NO_COMPRESSION --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(out / "metrics_OUTCOME_ONLY.jsonl"));
  EXPECT_TRUE(fs::exists(out / "metrics_NO_COMPRESSION.jsonl"));
  std::ifstream is(out / "ablation.jsonl");
  int lines = 0;
  for (std::string line; std::getline(is, line);) ++lines;
  EXPECT_EQ(lines, 2);
  EXPECT_EQ(run("ablate " + kSmoke + " --variant BOGUS --out " + (scratch() / "ab2").string()).code, 1);
}

}  // namespace
