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

#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "l2t/config.hpp"

namespace l2t {
namespace {

RunConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, EmptyGivesDefaults) {
  const RunConfig c = parse("");
  EXPECT_EQ(c.train.reward.alpha, 0.8);
  EXPECT_EQ(c.train.reward.beta, 0.6);
  EXPECT_EQ(c.train.reward.damping, 1e-5);
  EXPECT_EQ(c.train.learning_rate, 1e-6);
  EXPECT_EQ(c.train.group_size, 8);
  EXPECT_EQ(c.steps, 2000);
}

TEST(Config, ParsesSections) {
  const RunConfig c = parse(
      "[reward]\nalpha = 0.5\nmode = outcome_only\n"
      "[train]\nlearning_rate = 0.05\nseed = 9\n"
      "[proxy]\nmode = random\n"
      "[policy]\narch = small_attention\nfeatures = ngram\ninit = random\n"
      "[eval]\nbudgets = 8, 16\n");
  EXPECT_EQ(c.train.reward.alpha, 0.5);
  EXPECT_EQ(c.train.reward_mode, RewardMode::kOutcomeOnly);
  EXPECT_EQ(c.train.learning_rate, 0.05);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.train.proxy_mode, ProxyMode::kRandomCoordinates);
  EXPECT_EQ(c.policy.arch, Arch::kSmallAttention);
  EXPECT_EQ(c.eval.budgets, (std::vector<int>{8, 16}));
}

TEST(Config, Errors) {
  EXPECT_NE(error_of("[reward]\nalpha = -1\n").find("alpha must be > 0"), std::string::npos);
  EXPECT_NE(error_of("[reward]\ngamma = 1\n").find("reward.gamma"), std::string::npos);
  EXPECT_NE(error_of("alpha = 1\n").find("[section]"), std::string::npos);
  EXPECT_NE(error_of("[reward]\nalpha = abc\n").find("alpha"), std::string::npos);
  EXPECT_NE(error_of("[reward]\nmode = bogus\n").find("bogus"), std::string::npos);
  EXPECT_NE(error_of("[train]\ntrunc_fraction = 0.7\n"), "");
}

TEST(Config, MissingFileNamesPath) {
  try {
    load_config("/nonexistent/dir/run.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/run.cfg"), std::string::npos);
  }
}

TEST(Config, SerializeRoundTripPreservesHash) {
  RunConfig c = parse("[reward]\nalpha = 0.123456789012345\n[train]\nseed = 42\n");
  c.train.reward.beta = 1.0 / 3.0;
  const auto path = std::filesystem::temp_directory_path() / "l2t_config_roundtrip.cfg";
  {
    std::ofstream os(path);
    os << serialize_config(c);
  }
  const RunConfig back = load_config(path.string());
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(back.train.reward.beta, c.train.reward.beta);
  std::filesystem::remove(path);
}

TEST(Config, HashIgnoresKeyOrderAndTracksValues) {
  const auto a = parse("[reward]\nalpha = 0.5\nbeta = 0.2\n[train]\nseed = 3\n");
  const auto b = parse("[train]\nseed = 3\n[reward]\nbeta = 0.2\nalpha = 0.5\n");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(parse("[reward]\nalpha = 0.5\n")));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Manifest, Fields) {
  RunConfig c;
  c.train.seed = 7;
  const auto m = make_manifest("train", c, {"metrics.jsonl"});
  EXPECT_EQ(m.run_id, "train-" + config_hash(c).substr(0, 8) + "-s7");
  EXPECT_EQ(m.artifact_version, kArtifactVersion);
  const auto j = manifest_record(m);
  for (const char* k : {"run_id", "config_hash", "artifact_version", "start_time", "seed", "subcommand", "output_paths"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["start_time"].get<std::string>().size(), 20u);
}

TEST(Policy, InitialParamsFromSpec) {
  PolicySpec s;
  s.context_window = 64;
  EXPECT_EQ(initial_params(s, 1), reasoner_params({}, 64));
  s.init = PolicyInit::kZero;
  s.features = FeatureSet::kNGram;
  EXPECT_EQ(initial_params(s, 1).values.cwiseAbs().maxCoeff(), 0.0);
  s.init = PolicyInit::kRandom;
  EXPECT_EQ(initial_params(s, 1), initial_params(s, 1));
  EXPECT_NE(initial_params(s, 1), initial_params(s, 2));
}

}  // namespace
}  // namespace l2t
