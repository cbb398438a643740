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

// l2t command-line driver.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 runtime abort
// (including a failed verification suite).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "l2t/checkpoint.hpp"
#include "l2t/checks.hpp"
#include "l2t/config.hpp"
#include "l2t/eval.hpp"
#include "l2t/grpo.hpp"
#include "l2t/oracle.hpp"

namespace fs = std::filesystem;
using namespace l2t;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_config = true) {
  if (with_config) cmd->add_option("--config", o.config_path, "run configuration file");
  cmd->add_option("--seed", o.seed, "overrides [train] seed");
  cmd->add_option("--threads", o.threads, "worker threads (1 is bitwise reproducible)");
  cmd->add_option("--out", o.out, "run directory (default: $" + std::string(kOutputRootEnv) + "/<run_id>)");
}

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  if (o.seed) c.train.seed = *o.seed;
  if (o.threads) c.train.threads = *o.threads;
  validate(c);
  return c;
}

// A run directory with its manifest written before anything else.
class RunDir {
 public:
  RunDir(const std::string& subcommand, const RunConfig& cfg, const CommonOptions& o,
         const std::vector<std::string>& outputs) {
    manifest_ = make_manifest(subcommand, cfg, outputs);
    if (!o.out.empty()) {
      dir_ = o.out;
    } else {
      const char* root = std::getenv(kOutputRootEnv);
      dir_ = fs::path(root && *root ? root : "runs") / manifest_.run_id;
    }
    fs::create_directories(dir_);
    std::ofstream m(dir_ / "manifest.json");
    if (!m) throw Error("cannot write " + (dir_ / "manifest.json").string());
    m << manifest_record(manifest_).dump(2) << '\n';
    std::ofstream c(dir_ / "config.resolved");
    c << serialize_config(cfg);
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  std::ofstream open(const std::string& name) const {
    std::ofstream os(path(name), std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + path(name).string());
    return os;
  }

  const fs::path& dir() const { return dir_; }

 private:
  RunManifest manifest_;
  fs::path dir_;
};

PolicyParams starting_params(const RunConfig& cfg, const std::string& checkpoint) {
  if (!checkpoint.empty()) return load_checkpoint(checkpoint).params;
  return initial_params(cfg.policy, cfg.train.seed);
}

// ---------------------------------------------------------------------------

int cmd_train(const CommonOptions& o, int trace_every) {
  const RunConfig cfg = resolve_config(o);
  const RunDir run("train", cfg, o,
                   {"metrics.jsonl", "reward_traces.jsonl", "trajectories.jsonl", "checkpoint.bin"});
  auto metrics = run.open("metrics.jsonl");
  auto traces = run.open("reward_traces.jsonl");
  auto trajs = run.open("trajectories.jsonl");

  Trainer tr(cfg.train, initial_params(cfg.policy, cfg.train.seed),
             mixed_tier_sampler(cfg.train.seed, cfg.train.min_tier, cfg.train.max_tier));
  for (int s = 0; s < cfg.steps; ++s) {
    const StepMetrics m = tr.step();
    metrics << metrics_record(m).dump() << '\n' << std::flush;
    const bool last = s + 1 == cfg.steps;
    if (last || (trace_every > 0 && (s + 1) % trace_every == 0)) {
      for (const auto& g : tr.last_groups())
        for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
          nlohmann::json tj = trajectory_to_json(g.rollouts[i]);
          tj["step"] = m.step;
          trajs << tj.dump() << '\n';
          for (const auto& e : g.scores[i].episodes) {
            nlohmann::json rj = reward_trace_record(g.task.id, static_cast<int>(i), e);
            rj["step"] = m.step;
            traces << rj.dump() << '\n';
          }
        }
    }
  }
  save_checkpoint(run.path("checkpoint.bin").string(), {tr.params(), tr.basis(), tr.steps_done()});
  std::cout << run.dir().string() << '\n';
  return kExitOk;
}

int cmd_eval(const CommonOptions& o, const std::string& checkpoint) {
  const RunConfig cfg = resolve_config(o);
  const RunDir run("eval", cfg, o, {"depth.csv", "budget.csv", "eval.json"});
  const PolicyParams params = starting_params(cfg, checkpoint);
  const auto tasks = make_task_set(cfg.eval.task_seed, cfg.eval.tasks, cfg.train.min_tier, cfg.train.max_tier);

  DepthEvalOptions d;
  d.k_max = cfg.eval.k_max;
  d.m_votes = cfg.eval.m_votes;
  d.budget = cfg.train.token_budget;
  d.seed = cfg.train.seed;
  d.threads = cfg.train.threads;
  const DepthCurve curve = depth_truncation_eval(params, tasks, d);
  auto depth = run.open("depth.csv");
  write_depth_csv(depth, curve);
  write_depth_csv(std::cout, curve);

  auto budget = run.open("budget.csv");
  write_budget_csv(budget, budget_sweep(params, tasks, cfg.eval.budgets, cfg.train.threads));

  PassOptions p;
  p.budget = cfg.train.token_budget;
  p.threads = cfg.train.threads;
  const PolicyEval e = evaluate_policy(params, tasks, p);
  auto out = run.open("eval.json");
  out << nlohmann::json{{"accuracy", e.accuracy},
                        {"mean_tokens", e.mean_tokens},
                        {"tokens_per_correct", std::isfinite(e.tokens_per_correct)
                                                   ? nlohmann::json(e.tokens_per_correct)
                                                   : nlohmann::json(nullptr)},
                        {"n_tasks", e.n_tasks}}
             .dump()
      << '\n';
  return kExitOk;
}

int cmd_ablate(const CommonOptions& o, const std::vector<std::string>& variant_names, double fraction) {
  const RunConfig cfg = resolve_config(o);
  std::vector<AblationVariant> variants;
  try {
    for (const auto& n : variant_names) variants.push_back(parse_variant(n));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (variants.empty())
    variants = {AblationVariant::kFullL2T, AblationVariant::kOutcomeOnly, AblationVariant::kExternalRewardStub,
                AblationVariant::kNoCompression, AblationVariant::kRandomLayerSampling};
  std::vector<std::string> outputs = {"ablation.jsonl"};
  for (auto v : variants) outputs.push_back(std::string("metrics_") + variant_name(v) + ".jsonl");
  const RunDir run("ablate", cfg, o, outputs);
  auto summary = run.open("ablation.jsonl");

  const auto tasks = make_task_set(cfg.eval.task_seed, cfg.eval.tasks, cfg.train.min_tier, cfg.train.max_tier);
  PassOptions p;
  p.budget = cfg.train.token_budget;
  p.threads = cfg.train.threads;
  const PolicyParams init = initial_params(cfg.policy, cfg.train.seed);
  for (auto v : variants) {
    auto metrics = run.open(std::string("metrics_") + variant_name(v) + ".jsonl");
    const AblationResult r = run_ablation({v, fraction}, cfg.train, init, cfg.steps, tasks, p,
                                          [&](const StepMetrics& m) { metrics << metrics_record(m).dump() << '\n'; });
    const auto rec = ablation_record(r);
    summary << rec.dump() << '\n' << std::flush;
    std::cout << rec.dump() << '\n';
  }
  return kExitOk;
}

int cmd_oracle_verify(const CommonOptions& o, const std::string& suite) {
  const RunConfig cfg = resolve_config(o);
  std::vector<std::string> suites;
  if (suite == "all") {
    suites = checks::suite_names();
  } else {
    const auto names = checks::suite_names();
    if (std::find(names.begin(), names.end(), suite) == names.end())
      throw ConfigError("unknown suite '" + suite + "'");
    suites = {suite};
  }
  const RunDir run("oracle-verify", cfg, o, {"verdicts.jsonl"});
  auto out = run.open("verdicts.jsonl");
  bool all = true;
  for (const auto& s : suites)
    for (const auto& r : checks::run_suite(s, cfg.train.seed)) {
      const std::string line = checks::check_record(r).dump();
      std::cout << line << '\n';
      out << line << '\n';
      all = all && r.passed;
    }
  return all ? kExitOk : kExitRuntime;
}

int cmd_bench(const CommonOptions& o, const std::vector<int>& d_values, const std::vector<int>& r_values,
              int reps) {
  const RunConfig cfg = resolve_config(o);
  const RunDir run("bench", cfg, o, {"bench.csv"});
  const auto rows = oracle::bench_complexity(d_values, r_values, reps, cfg.train.seed);
  auto out = run.open("bench.csv");
  for (std::ostream* os : {static_cast<std::ostream*>(&out), &std::cout}) {
    *os << "d,r,full_ns,proxy_ns,ratio\n";
    for (const auto& r : rows) *os << r.d << ',' << r.r << ',' << r.full_ns << ',' << r.proxy_ns << ',' << r.ratio << '\n';
  }
  return kExitOk;
}

int cmd_gen_tasks(const CommonOptions& o, int count) {
  const RunConfig cfg = resolve_config(o);
  if (count < 1) throw ConfigError("count must be >= 1");
  const RunDir run("gen-tasks", cfg, o, {"tasks.txt"});
  auto out = run.open("tasks.txt");
  const Vocabulary v = arithmetic_vocabulary();
  for (const auto& t : make_task_set(cfg.train.seed, count, cfg.train.min_tier, cfg.train.max_tier)) {
    write_task_line(out, t, v);
    write_task_line(std::cout, t, v);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning to think: information-gain rewards for episodic reasoning"};
  app.require_subcommand(1);

  CommonOptions train_o, eval_o, ablate_o, verify_o, bench_o, gen_o;
  int trace_every = 0;
  std::string checkpoint;
  std::vector<std::string> variants;
  double fraction = 0.3;
  std::string suite = "all";
  std::vector<int> d_values = {1024, 4096}, r_values = {2048, 410, 82};
  int reps = 30;
  int count = 100;

  auto* train = app.add_subcommand("train", "run GRPO training and write metrics and a checkpoint");
  add_common(train, train_o);
  train->add_option("--trace-every", trace_every, "also dump traces every N steps (the last step always is)");

  auto* eval = app.add_subcommand("eval", "depth-truncation curve, budget sweep and pass@1");
  add_common(eval, eval_o);
  eval->add_option("--checkpoint", checkpoint, "policy to evaluate (default: the configured initial policy)");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate reward variants");
  add_common(ablate, ablate_o);
  ablate->add_option("--variant", variants,
                     "FULL_L2T, OUTCOME_ONLY, EXTERNAL_REWARD_STUB, NO_COMPRESSION, RANDOM_LAYER_SAMPLING");
  ablate->add_option("--fraction", fraction, "coordinate fraction for RANDOM_LAYER_SAMPLING");

  auto* verify = app.add_subcommand("oracle-verify", "check approximations against exact references");
  add_common(verify, verify_o);
  verify->add_option("--suite", suite, "all or one suite name");

  auto* bench = app.add_subcommand("bench", "time full versus proxy quadratic forms");
  add_common(bench, bench_o);
  bench->add_option("--d", d_values, "parameter dimensions");
  bench->add_option("--r", r_values, "proxy ranks");
  bench->add_option("--reps", reps, "timed repetitions per cell");

  auto* gen = app.add_subcommand("gen-tasks", "write task lines");
  add_common(gen, gen_o);
  gen->add_option("--count", count, "number of tasks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (argc > 1 && argv[1][0] != '-' && app.get_subcommands().empty())
      std::cerr << "error: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
    else
      std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_o, trace_every);
    if (*eval) return cmd_eval(eval_o, checkpoint);
    if (*ablate) return cmd_ablate(ablate_o, variants, fraction);
    if (*verify) return cmd_oracle_verify(verify_o, suite);
    if (*bench) return cmd_bench(bench_o, d_values, r_values, reps);
    if (*gen) return cmd_gen_tasks(gen_o, count);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  std::cerr << app.help();
  return kExitConfig;
}
