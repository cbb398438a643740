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

// Evaluation: accuracy and token cost versus episode depth, majority voting,
// budget sweeps and reward ablations.

#ifndef L2T_EVAL_HPP_
#define L2T_EVAL_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "l2t/common.hpp"
#include "l2t/grpo.hpp"
#include "l2t/lowrank.hpp"
#include "l2t/policy.hpp"
#include "l2t/reward.hpp"
#include "l2t/rng.hpp"
#include "l2t/task_env.hpp"

namespace l2t {

inline std::vector<Task> make_task_set(std::uint64_t seed, int count, int min_tier = 1, int max_tier = 4) {
  require(count >= 1, "task count must be >= 1");
  std::vector<Task> tasks;
  Rng rng(derive_seed(seed, {0xe7a1ULL}));
  for (int i = 0; i < count; ++i) {
    const int tier = min_tier + i % (max_tier - min_tier + 1);
    tasks.push_back(generate_task(rng.next_u64(), tier));
  }
  return tasks;
}

// ---------------------------------------------------------------------------
// Depth truncation.

struct DepthCurve {
  std::vector<int> k;
  std::vector<double> acc;
  std::vector<double> mean_tokens;
  std::vector<double> maj_acc;
  int n_tasks = 0;
};

struct DepthEvalOptions {
  int k_max = kDefaultMaxEpisodes;
  int m_votes = 4;
  int budget = 512;
  int answer_budget = 16;
  std::uint64_t seed = 0;
  int threads = 1;
};

namespace detail {

// Tokens after the answer marker up to <eos>; nullopt when <eos> never came.
inline std::optional<TokenSeq> answer_tail(const Decoded& d, const Vocabulary& v) {
  const auto it = std::find(d.tokens.begin(), d.tokens.end(), v.eos);
  if (it == d.tokens.end()) return std::nullopt;
  return TokenSeq(d.tokens.begin(), it);
}

struct TaskDepthResult {
  std::vector<int> correct;
  std::vector<int> maj_correct;
  std::vector<double> tokens;
};

inline TaskDepthResult depth_for_task(const PolicyParams& p, const Task& task, const DepthEvalOptions& o,
                                      std::uint64_t task_index) {
  const Vocabulary& v = p.meta.vocab;
  Rng unused(0);
  DecodeOptions greedy;
  greedy.temperature = 0.0;
  const Decoded chain = decode(p, task.question_tokens, o.budget, unused, greedy);

  Trajectory full;
  full.tokens = chain.tokens;
  full.truncated = chain.truncated;
  full.token_count = static_cast<int>(chain.tokens.size());
  const int full_correct = outcome_reward(full, task, v);

  // Closing delimiters inside the reasoning region.
  std::vector<std::size_t> closes;
  const std::size_t rend = reasoning_end(chain.tokens, v);
  for (std::size_t i = 0; i < rend; ++i)
    if (v.is_close(chain.tokens[i])) closes.push_back(i + 1);

  TaskDepthResult r;
  for (int k = 1; k <= o.k_max; ++k) {
    if (static_cast<std::size_t>(k) > closes.size()) {
      r.correct.push_back(full_correct);
      r.maj_correct.push_back(full_correct);
      r.tokens.push_back(static_cast<double>(full.token_count));
      continue;
    }
    const std::size_t cut = closes[static_cast<std::size_t>(k - 1)];
    TokenSeq ctx = task.question_tokens;
    ctx.insert(ctx.end(), chain.tokens.begin(), chain.tokens.begin() + static_cast<std::ptrdiff_t>(cut));
    const TokenSeq forced = force_answer(ctx, v);
    const Decoded ans = decode(p, forced, o.answer_budget, unused, greedy);
    const auto tail = answer_tail(ans, v);
    r.correct.push_back(tail && *tail == task.oracle_answer_tokens ? 1 : 0);
    r.tokens.push_back(static_cast<double>(cut));

    std::map<TokenSeq, int> votes;
    std::vector<TokenSeq> order;
    for (int m = 0; m < o.m_votes; ++m) {
      Rng rng(derive_seed(o.seed, {0x3a7eULL, task_index, static_cast<std::uint64_t>(k),
                                   static_cast<std::uint64_t>(m)}));
      const auto s = answer_tail(decode(p, forced, o.answer_budget, rng), v);
      if (!s) continue;
      if (votes[*s]++ == 0) order.push_back(*s);
    }
    int best = 0;
    const TokenSeq* winner = nullptr;
    for (const auto& a : order)
      if (votes[a] > best) {
        best = votes[a];
        winner = &a;
      }
    r.maj_correct.push_back(winner && *winner == task.oracle_answer_tokens ? 1 : 0);
  }
  return r;
}

}  // namespace detail

inline DepthCurve depth_truncation_eval(const PolicyParams& params, const std::vector<Task>& tasks,
                                        const DepthEvalOptions& o) {
  require(!tasks.empty(), "no tasks to evaluate");
  require(o.m_votes >= 1, "m_votes must be >= 1");
  require(o.k_max >= 1, "k_max must be >= 1");
  std::vector<detail::TaskDepthResult> per(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), o.threads, [&](int i) {
    per[static_cast<std::size_t>(i)] =
        detail::depth_for_task(params, tasks[static_cast<std::size_t>(i)], o, static_cast<std::uint64_t>(i));
  });
  DepthCurve c;
  c.n_tasks = static_cast<int>(tasks.size());
  const double n = static_cast<double>(tasks.size());
  for (int k = 1; k <= o.k_max; ++k) {
    double a = 0.0, m = 0.0, t = 0.0;
    for (const auto& r : per) {
      a += r.correct[static_cast<std::size_t>(k - 1)];
      m += r.maj_correct[static_cast<std::size_t>(k - 1)];
      t += r.tokens[static_cast<std::size_t>(k - 1)];
    }
    c.k.push_back(k);
    c.acc.push_back(a / n);
    c.maj_acc.push_back(m / n);
    c.mean_tokens.push_back(t / n);
  }
  return c;
}

inline void write_depth_csv(std::ostream& os, const DepthCurve& c) {
  os << "k,acc,mean_tokens,maj_acc\n";
  for (std::size_t i = 0; i < c.k.size(); ++i)
    os << c.k[i] << ',' << c.acc[i] << ',' << c.mean_tokens[i] << ',' << c.maj_acc[i] << '\n';
}

// True when `v` rises (non-strictly) to a peak and then falls, allowing
// violations up to `tol` in either phase.
inline bool unimodal_within(const std::vector<double>& v, double tol) {
  if (v.empty()) return true;
  const auto peak = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  double run_max = v.front();
  for (std::size_t i = 1; i <= peak; ++i) {
    if (v[i] < run_max - tol) return false;
    run_max = std::max(run_max, v[i]);
  }
  double run_min = v[peak];
  for (std::size_t i = peak + 1; i < v.size(); ++i) {
    if (v[i] > run_min + tol) return false;
    run_min = std::min(run_min, v[i]);
  }
  return true;
}

// ---------------------------------------------------------------------------
// Pass@1 and token cost.

struct PolicyEval {
  double accuracy = 0.0;
  double mean_tokens = 0.0;
  double tokens_per_correct = 0.0;  // total tokens / correct answers; inf when none
  int n_tasks = 0;
};

struct PassOptions {
  int budget = 512;
  double temperature = 0.0;
  int samples = 1;
  std::uint64_t seed = 0;
  int threads = 1;
};

inline PolicyEval evaluate_policy(const PolicyParams& params, const std::vector<Task>& tasks,
                                  const PassOptions& o) {
  require(!tasks.empty(), "no tasks to evaluate");
  require(o.samples >= 1, "samples must be >= 1");
  const int n = static_cast<int>(tasks.size()) * o.samples;
  std::vector<int> correct(static_cast<std::size_t>(n), 0);
  std::vector<int> tokens(static_cast<std::size_t>(n), 0);
  parallel_for(n, o.threads, [&](int idx) {
    const Task& t = tasks[static_cast<std::size_t>(idx / o.samples)];
    Rng rng(derive_seed(o.seed, {0x9a55ULL, static_cast<std::uint64_t>(idx)}));
    const Trajectory traj = sample_trajectory(params, t, o.budget, rng, kDefaultMaxEpisodes, o.temperature);
    correct[static_cast<std::size_t>(idx)] = outcome_reward(traj, t, params.meta.vocab);
    tokens[static_cast<std::size_t>(idx)] = traj.token_count;
  });
  PolicyEval e;
  e.n_tasks = static_cast<int>(tasks.size());
  double c = 0.0, tok = 0.0;
  for (int i = 0; i < n; ++i) {
    c += correct[static_cast<std::size_t>(i)];
    tok += tokens[static_cast<std::size_t>(i)];
  }
  e.accuracy = c / n;
  e.mean_tokens = tok / n;
  e.tokens_per_correct = c > 0 ? tok / c : std::numeric_limits<double>::infinity();
  return e;
}

struct BudgetPoint {
  int budget = 0;
  double accuracy = 0.0;
};

inline std::vector<BudgetPoint> budget_sweep(const PolicyParams& params, const std::vector<Task>& tasks,
                                             const std::vector<int>& budgets, int threads = 1) {
  require(!budgets.empty(), "no budgets");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    require(budgets[i] >= 1, "budgets must be positive");
    if (i > 0) require(budgets[i] > budgets[i - 1], "budgets must be ascending");
  }
  std::vector<BudgetPoint> out;
  for (int b : budgets) {
    PassOptions o;
    o.budget = b;
    o.threads = threads;
    out.push_back({b, evaluate_policy(params, tasks, o).accuracy});
  }
  return out;
}

inline void write_budget_csv(std::ostream& os, const std::vector<BudgetPoint>& pts) {
  os << "budget,acc\n";
  for (const auto& p : pts) os << p.budget << ',' << p.accuracy << '\n';
}

// ---------------------------------------------------------------------------
// Ablations.

enum class AblationVariant { kFullL2T, kOutcomeOnly, kExternalRewardStub, kNoCompression, kRandomLayerSampling };

inline const char* variant_name(AblationVariant v) {
  switch (v) {
    case AblationVariant::kFullL2T: return "FULL_L2T";
    case AblationVariant::kOutcomeOnly: return "OUTCOME_ONLY";
    case AblationVariant::kExternalRewardStub: return "EXTERNAL_REWARD_STUB";
    case AblationVariant::kNoCompression: return "NO_COMPRESSION";
    case AblationVariant::kRandomLayerSampling: return "RANDOM_LAYER_SAMPLING";
  }
  return "?";
}

inline AblationVariant parse_variant(const std::string& s) {
  for (auto v : {AblationVariant::kFullL2T, AblationVariant::kOutcomeOnly, AblationVariant::kExternalRewardStub,
                 AblationVariant::kNoCompression, AblationVariant::kRandomLayerSampling})
    if (s == variant_name(v)) return v;
  throw Error("unknown ablation variant '" + s + "'");
}

struct AblationConfig {
  AblationVariant variant = AblationVariant::kFullL2T;
  double fraction = 0.3;
};

inline TrainConfig apply_ablation(TrainConfig c, const AblationConfig& a) {
  require(a.fraction > 0.0 && a.fraction <= 1.0, "fraction must be in (0, 1]");
  switch (a.variant) {
    case AblationVariant::kFullL2T: c.reward_mode = RewardMode::kFull; break;
    case AblationVariant::kOutcomeOnly: c.reward_mode = RewardMode::kOutcomeOnly; break;
    case AblationVariant::kExternalRewardStub: c.reward_mode = RewardMode::kOverlapStub; break;
    case AblationVariant::kNoCompression: c.reward_mode = RewardMode::kNoCompression; break;
    case AblationVariant::kRandomLayerSampling:
      c.reward_mode = RewardMode::kFull;
      c.proxy_mode = ProxyMode::kRandomCoordinates;
      c.random_fraction = a.fraction;
      break;
  }
  return c;
}

struct AblationResult {
  AblationVariant variant = AblationVariant::kFullL2T;
  std::vector<StepMetrics> metrics;
  PolicyEval eval;
  double mean_C = 0.0;  // over the last tenth of training
  PolicyParams final_params;
};

using StepCallback = std::function<void(const StepMetrics&)>;

inline AblationResult run_ablation(const AblationConfig& a, const TrainConfig& base, const PolicyParams& init,
                                   int train_steps, const std::vector<Task>& eval_tasks,
                                   const PassOptions& eval_opt, const StepCallback& on_step = {}) {
  const TrainConfig cfg = apply_ablation(base, a);
  Trainer tr(cfg, init, mixed_tier_sampler(cfg.seed, cfg.min_tier, cfg.max_tier));
  AblationResult r;
  r.variant = a.variant;
  for (int s = 0; s < train_steps; ++s) {
    r.metrics.push_back(tr.step());
    if (on_step) on_step(r.metrics.back());
  }
  const int tail = std::max(1, train_steps / 10);
  for (int s = train_steps - tail; s < train_steps; ++s) r.mean_C += r.metrics[static_cast<std::size_t>(s)].mean_C;
  r.mean_C /= tail;
  r.final_params = tr.params();
  r.eval = evaluate_policy(r.final_params, eval_tasks, eval_opt);
  return r;
}

inline nlohmann::json ablation_record(const AblationResult& r) {
  auto finite_or_null = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  return {{"variant", variant_name(r.variant)},
          {"steps", r.metrics.size()},
          {"accuracy", r.eval.accuracy},
          {"mean_tokens", r.eval.mean_tokens},
          {"tokens_per_correct", finite_or_null(r.eval.tokens_per_correct)},
          {"mean_C", r.mean_C}};
}

// ---------------------------------------------------------------------------
// Penalty-estimate variance: SVD proxy versus random coordinates.
//
// For each seed a short training run supplies an update history; the SVD
// basis fitted on it and a random coordinate subset of the same dimension are
// both used to score one fixed probe batch under the same parameters. The
// spread of the mean penalty across seeds measures each proxy's run-to-run
// variance.

struct PenaltyVarianceReport {
  std::vector<double> svd_penalty;
  std::vector<double> random_penalty;
  double svd_variance = 0.0;
  double random_variance = 0.0;
  double ratio = 0.0;
  int dimension = 0;
};

inline double mean_probe_penalty(const PolicyParams& params, const ProxyBasis& basis,
                                 const std::vector<Task>& tasks, const std::vector<Trajectory>& rollouts,
                                 const RewardConfig& reward) {
  ScoringOptions opt;
  opt.reward = reward;
  double s = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    const RolloutScore sc = score_rollout(params, basis, tasks[i], rollouts[i], opt);
    for (const auto& e : sc.episodes) {
      s += e.compression_penalty;
      ++n;
    }
  }
  return n > 0 ? s / n : 0.0;
}

inline double sample_variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline PenaltyVarianceReport penalty_variance_study(const TrainConfig& base, const PolicyParams& params,
                                                    int seeds, int history_steps, int probe_tasks) {
  require(seeds >= 2, "need at least two seeds");
  PenaltyVarianceReport rep;
  const auto tasks = make_task_set(derive_seed(base.seed, {0x9b0eULL}), probe_tasks, base.min_tier, base.max_tier);
  std::vector<Trajectory> probe;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    Rng rng(derive_seed(base.seed, {0x9b0fULL, i}));
    probe.push_back(sample_trajectory(params, tasks[i], base.token_budget, rng, base.max_episodes));
  }
  for (int s = 0; s < seeds; ++s) {
    TrainConfig c = base;
    c.seed = derive_seed(base.seed, {0x5eedULL, static_cast<std::uint64_t>(s)});
    c.reward_mode = RewardMode::kFull;
    c.proxy_mode = ProxyMode::kSvd;
    c.refresh_every = std::max(1, history_steps);
    Trainer tr(c, params, mixed_tier_sampler(c.seed, c.min_tier, c.max_tier));
    for (int k = 0; k < history_steps; ++k) tr.step();
    const ProxyBasis svd = tr.basis();
    Rng rng(derive_seed(c.seed, {0x7a4dULL}));
    const ProxyBasis rnd = random_coordinate_basis(params.dim(), svd.rank, rng);
    rep.dimension = svd.rank;
    rep.svd_penalty.push_back(mean_probe_penalty(params, svd, tasks, probe, base.reward));
    rep.random_penalty.push_back(mean_probe_penalty(params, rnd, tasks, probe, base.reward));
  }
  rep.svd_variance = sample_variance(rep.svd_penalty);
  rep.random_variance = sample_variance(rep.random_penalty);
  rep.ratio = rep.svd_variance > 0.0 ? rep.random_variance / rep.svd_variance
                                     : std::numeric_limits<double>::infinity();
  return rep;
}

}  // namespace l2t

#endif  // L2T_EVAL_HPP_
