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

// Group-relative policy optimisation with episode-level rewards.
//
// Per step: snapshot the old policy, sample N rollouts per task, score every
// episode, spread each episode reward over its tokens by surprise weight,
// reduce each rollout to a truncated mean, normalise within the group,
// rescale back to tokens and take one clipped policy-gradient step with a
// KL penalty towards the old policy.

#ifndef L2T_GRPO_HPP_
#define L2T_GRPO_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "l2t/common.hpp"
#include "l2t/lowrank.hpp"
#include "l2t/policy.hpp"
#include "l2t/reward.hpp"
#include "l2t/rng.hpp"
#include "l2t/task_env.hpp"

namespace l2t {

enum class ProxyMode { kSvd, kRandomCoordinates };
enum class RewardMode { kFull, kOutcomeOnly, kOverlapStub, kNoCompression };

struct TrainConfig {
  RewardConfig reward;
  double learning_rate = 1e-6;
  double weight_decay = 0.01;
  int batch_size = 32;
  double clip_epsilon = 0.2;
  double kl_coeff = 0.01;
  double trunc_fraction = 0.05;
  int group_size = 8;
  int token_budget = 512;
  int max_episodes = kDefaultMaxEpisodes;
  double adv_epsilon = 1e-8;
  double token_adv_clip = 0.0;  // |A_t| cap, 0 disables
  std::uint64_t seed = 0;
  int update_epochs = 1;

  // Low-rank proxy.
  double proxy_rank_fraction = 0.05;
  int history_window = 32;
  int refresh_every = 10;
  ProxyMode proxy_mode = ProxyMode::kSvd;
  double random_fraction = 0.3;

  RewardMode reward_mode = RewardMode::kFull;
  int min_tier = 1;
  int max_tier = 4;
  int threads = 1;
  bool wall_clock = false;

  void validate() const {
    reward.validate();
    require(trunc_fraction > 0.0 && trunc_fraction < 0.5, "trunc_fraction must be in (0, 0.5)");
    require(clip_epsilon > 0.0, "clip_epsilon must be > 0");
    require(learning_rate > 0.0, "learning_rate must be > 0");
    require(weight_decay >= 0.0, "weight_decay must be >= 0");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(group_size >= 2, "group_size must be >= 2");
    require(token_budget >= 1, "token_budget must be >= 1");
    require(max_episodes >= 1, "max_episodes must be >= 1");
    require(adv_epsilon >= 0.0, "adv_epsilon must be >= 0");
    require(token_adv_clip >= 0.0, "token_adv_clip must be >= 0");
    require(kl_coeff >= 0.0, "kl_coeff must be >= 0");
    require(update_epochs >= 1, "update_epochs must be >= 1");
    require(proxy_rank_fraction >= 0.001 && proxy_rank_fraction <= 1.0,
            "proxy_rank_fraction must be in [0.001, 1]");
    require(history_window >= 1, "history_window must be >= 1");
    require(refresh_every >= 1, "refresh_every must be >= 1");
    require(random_fraction > 0.0 && random_fraction <= 1.0, "random_fraction must be in (0, 1]");
    require(min_tier >= 1 && max_tier <= 4 && min_tier <= max_tier, "tiers must satisfy 1 <= min_tier <= max_tier <= 4");
    require(threads >= 1, "threads must be >= 1");
  }
};

inline ScoringOptions scoring_options(const TrainConfig& c) {
  ScoringOptions o;
  o.reward = c.reward;
  o.use_process_reward = c.reward_mode != RewardMode::kOutcomeOnly;
  o.fitting = c.reward_mode == RewardMode::kOverlapStub ? FittingSource::kOverlapStub
                                                        : FittingSource::kCorrectness;
  if (c.reward_mode == RewardMode::kNoCompression) o.reward.beta = 0.0;
  return o;
}

struct RolloutGroup {
  Task task;
  std::vector<Trajectory> rollouts;
  std::vector<RolloutScore> scores;
};

// ---------------------------------------------------------------------------
// Advantage machinery.

inline constexpr double kMinSurpriseWeight = 1e-8;

// Per-token rewards of one rollout: within each credit range the episode
// reward is split proportionally to -log p_old, clamped below.
inline std::vector<double> assign_token_rewards(const Trajectory& traj, const RolloutScore& score) {
  std::vector<double> r(traj.tokens.size(), 0.0);
  require(score.credit.size() == score.episodes.size(), "credit ranges and rewards disagree");
  for (std::size_t k = 0; k < score.credit.size(); ++k) {
    const Span s = score.credit[k];
    if (s.size() == 0) continue;
    double total = 0.0;
    for (std::size_t t = s.start; t < s.end; ++t)
      total += std::max(-traj.per_token_logprob[t], kMinSurpriseWeight);
    const double R = score.episodes[k].combined;
    for (std::size_t t = s.start; t < s.end; ++t)
      r[t] = std::max(-traj.per_token_logprob[t], kMinSurpriseWeight) / total * R;
  }
  return r;
}

// Mean after dropping the top ceil(fraction * n) values; the plain mean when
// that would drop everything.
inline double truncated_mean(std::vector<double> values, double fraction) {
  require(!values.empty(), "truncated mean of an empty sequence");
  const std::size_t n = values.size();
  const auto drop = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-12));
  if (drop >= n) return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  std::sort(values.begin(), values.end());
  const std::size_t keep = n - drop;
  double s = 0.0;
  for (std::size_t i = 0; i < keep; ++i) s += values[i];
  return s / static_cast<double>(keep);
}

inline std::vector<double> group_advantages(const std::vector<double>& r, double adv_epsilon) {
  require(r.size() >= 2, "group needs at least two rollouts");
  const double n = static_cast<double>(r.size());
  const double mean = std::accumulate(r.begin(), r.end(), 0.0) / n;
  double var = 0.0;
  for (double x : r) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> a(r.size(), 0.0);
  if (sd == 0.0) return a;
  for (std::size_t i = 0; i < r.size(); ++i) a[i] = (r[i] - mean) / (sd + adv_epsilon);
  return a;
}

inline constexpr double kTinyTruncatedMean = 1e-8;

inline std::vector<double> token_advantages(double group_adv, const std::vector<double>& token_rewards,
                                            double trunc_mean) {
  std::vector<double> a(token_rewards.size(), group_adv);
  if (std::abs(trunc_mean) < kTinyTruncatedMean) return a;
  for (std::size_t t = 0; t < token_rewards.size(); ++t)
    a[t] = group_adv * token_rewards[t] / trunc_mean;
  return a;
}

// ---------------------------------------------------------------------------
// Clipped surrogate.

struct TokenSample {
  TokenSeq context;  // question plus generated prefix
  TokenId token = 0;
  double old_logprob = 0.0;
  double advantage = 0.0;
};

struct SurrogateResult {
  double objective = 0.0;
  Vector gradient;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double kl = 0.0;
  double policy_term = 0.0;
};

// L = mean_t min(rho A, clip(rho) A) - kl_coeff * mean_t (rho - log rho - 1).
inline SurrogateResult surrogate(const PolicyParams& params, const std::vector<TokenSample>& batch,
                                 double clip_epsilon, double kl_coeff) {
  SurrogateResult out;
  out.gradient = Vector::Zero(params.values.size());
  if (batch.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  std::size_t clipped = 0;
  for (const auto& s : batch) {
    const auto ev = detail::evaluate_unchecked(params, make_state(s.context, params.meta), s.token);
    const double log_ratio = ev.logprobs[s.token] - s.old_logprob;
    const double rho = std::exp(log_ratio);
    const double clipped_rho = std::clamp(rho, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    const double unclipped_term = rho * s.advantage;
    const double clipped_term = clipped_rho * s.advantage;
    const double term = std::min(unclipped_term, clipped_term);
    const double kl = rho - log_ratio - 1.0;
    out.policy_term += term * inv_n;
    out.kl += kl * inv_n;
    out.mean_ratio += rho * inv_n;
    if (clipped_rho != rho) ++clipped;
    double coeff = -kl_coeff * (rho - 1.0);
    if (unclipped_term <= clipped_term) coeff += s.advantage * rho;
    if (coeff != 0.0) ev.score.add_to(out.gradient, coeff * inv_n);
  }
  out.objective = out.policy_term - kl_coeff * out.kl;
  out.clip_fraction = static_cast<double>(clipped) * inv_n;
  return out;
}

struct UpdateStats {
  double mean_ratio = 1.0;
  double clip_fraction = 0.0;
  double kl = 0.0;
};

inline std::vector<TokenSample> token_batch(const std::vector<RolloutGroup>& groups,
                                            const std::vector<std::vector<std::vector<double>>>& adv) {
  std::vector<TokenSample> batch;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& grp = groups[g];
    for (std::size_t i = 0; i < grp.rollouts.size(); ++i) {
      const auto& traj = grp.rollouts[i];
      TokenSeq ctx = grp.task.question_tokens;
      for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
        batch.push_back({ctx, traj.tokens[t], traj.per_token_logprob[t], adv[g][i][t]});
        ctx.push_back(traj.tokens[t]);
      }
    }
  }
  return batch;
}

// Gradient ascent on the surrogate, `epochs` times over the same batch. The
// reported ratio, clip fraction and KL are those seen by the last pass.
inline UpdateStats policy_update(PolicyParams& params, const std::vector<TokenSample>& batch,
                                 const TrainConfig& cfg) {
  UpdateStats st;
  for (int e = 0; e < cfg.update_epochs; ++e) {
    const SurrogateResult r = surrogate(params, batch, cfg.clip_epsilon, cfg.kl_coeff);
    if (!std::isfinite(r.policy_term)) throw Error("policy term diverged");
    if (!std::isfinite(r.kl)) throw Error("KL term diverged");
    if (!r.gradient.allFinite()) throw Error("surrogate gradient diverged");
    st = {r.mean_ratio, r.clip_fraction, r.kl};
    if (cfg.weight_decay > 0.0) params.values *= (1.0 - cfg.learning_rate * cfg.weight_decay);
    params.values.noalias() += cfg.learning_rate * r.gradient;
  }
  return st;
}

// ---------------------------------------------------------------------------
// Training loop.

struct StepMetrics {
  int step = 0;
  double mean_r_out = 0.0;
  double mean_tokens = 0.0;
  double mean_dI = 0.0;
  double mean_C = 0.0;
  double clip_frac = 0.0;
  double kl = 0.0;
  double wall_ms = 0.0;
  double mean_episodes = 0.0;
};

inline nlohmann::json metrics_record(const StepMetrics& m) {
  return {{"step", m.step},           {"mean_r_out", m.mean_r_out}, {"mean_tokens", m.mean_tokens},
          {"mean_dI", m.mean_dI},     {"mean_C", m.mean_C},         {"clip_frac", m.clip_frac},
          {"kl", m.kl},               {"wall_ms", m.wall_ms}};
}

using TaskSampler = std::function<Task(std::uint64_t step, int index)>;

inline TaskSampler mixed_tier_sampler(std::uint64_t seed, int min_tier = 1, int max_tier = 4) {
  return [=](std::uint64_t step, int index) {
    Rng rng(derive_seed(seed, {0x7a51ULL, step, static_cast<std::uint64_t>(index)}));
    const int tier = static_cast<int>(rng.uniform_int(min_tier, max_tier));
    return generate_task(rng.next_u64(), tier);
  };
}

inline int proxy_rank(const TrainConfig& cfg, std::size_t d) {
  const int r = static_cast<int>(std::lround(cfg.proxy_rank_fraction * static_cast<double>(d)));
  return std::clamp(r, 1, static_cast<int>(d));
}

// Runs `fn(i)` for i in [0, n) on up to `threads` workers. Each index writes
// only its own slot, so results do not depend on scheduling.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const int workers = std::min(threads, n);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

class Trainer {
 public:
  Trainer(TrainConfig cfg, PolicyParams init, TaskSampler sampler)
      : cfg_(std::move(cfg)),
        params_(std::move(init)),
        sampler_(std::move(sampler)),
        history_(static_cast<std::size_t>(cfg_.history_window)) {
    cfg_.validate();
    validate(params_);
    rank_ = proxy_rank(cfg_, params_.dim());
    if (cfg_.proxy_mode == ProxyMode::kRandomCoordinates) {
      Rng rng(derive_seed(cfg_.seed, {0x5a3bULL, 0}));
      basis_ = random_coordinate_basis(params_.dim(), random_size(), rng, 0);
    } else {
      basis_ = identity_basis(params_.dim(), rank_);
    }
  }

  const PolicyParams& params() const { return params_; }
  const ProxyBasis& basis() const { return basis_; }
  const TrainConfig& config() const { return cfg_; }
  int steps_done() const { return step_; }
  // Groups sampled by the most recent step().
  const std::vector<RolloutGroup>& last_groups() const { return last_groups_; }

  // Samples and scores the groups of one step under the current policy.
  std::vector<RolloutGroup> collect(std::uint64_t step) const {
    std::vector<RolloutGroup> groups(static_cast<std::size_t>(cfg_.batch_size));
    for (int b = 0; b < cfg_.batch_size; ++b) {
      groups[static_cast<std::size_t>(b)].task = sampler_(step, b);
      groups[static_cast<std::size_t>(b)].rollouts.resize(static_cast<std::size_t>(cfg_.group_size));
      groups[static_cast<std::size_t>(b)].scores.resize(static_cast<std::size_t>(cfg_.group_size));
    }
    const ScoringOptions opt = scoring_options(cfg_);
    const int total = cfg_.batch_size * cfg_.group_size;
    parallel_for(total, cfg_.threads, [&](int idx) {
      const int b = idx / cfg_.group_size;
      const int i = idx % cfg_.group_size;
      auto& grp = groups[static_cast<std::size_t>(b)];
      Rng rng(derive_seed(cfg_.seed, {step, static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(i)}));
      grp.rollouts[static_cast<std::size_t>(i)] =
          sample_trajectory(params_, grp.task, cfg_.token_budget, rng, cfg_.max_episodes);
      grp.scores[static_cast<std::size_t>(i)] =
          score_rollout(params_, basis_, grp.task, grp.rollouts[static_cast<std::size_t>(i)], opt);
    });
    return groups;
  }

  // Token-level advantages for every rollout of every group.
  std::vector<std::vector<std::vector<double>>> advantages(const std::vector<RolloutGroup>& groups) const {
    std::vector<std::vector<std::vector<double>>> adv(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto& grp = groups[g];
      const std::size_t n = grp.rollouts.size();
      std::vector<std::vector<double>> rewards(n);
      std::vector<double> tm(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        rewards[i] = assign_token_rewards(grp.rollouts[i], grp.scores[i]);
        tm[i] = rewards[i].empty() ? 0.0 : truncated_mean(rewards[i], cfg_.trunc_fraction);
      }
      const auto ga = group_advantages(tm, cfg_.adv_epsilon);
      adv[g].resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        adv[g][i] = token_advantages(ga[i], rewards[i], tm[i]);
        if (cfg_.token_adv_clip > 0.0)
          for (double& a : adv[g][i]) a = std::clamp(a, -cfg_.token_adv_clip, cfg_.token_adv_clip);
      }
    }
    return adv;
  }

  StepMetrics step() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto s = static_cast<std::uint64_t>(step_);
    last_groups_ = collect(s);
    const auto& groups = last_groups_;
    const auto adv = advantages(groups);
    const auto batch = token_batch(groups, adv);

    const Vector before = params_.values;
    const UpdateStats st = policy_update(params_, batch, cfg_);
    history_.push(params_.values - before);
    ++step_;
    if (step_ % cfg_.refresh_every == 0) refresh_basis();

    StepMetrics m;
    m.step = step_;
    double n_roll = 0.0, n_ep = 0.0;
    for (const auto& grp : groups)
      for (std::size_t i = 0; i < grp.rollouts.size(); ++i) {
        n_roll += 1.0;
        m.mean_r_out += grp.scores[i].outcome;
        m.mean_tokens += static_cast<double>(grp.rollouts[i].token_count);
        m.mean_episodes += static_cast<double>(grp.scores[i].episodes.size());
        for (const auto& e : grp.scores[i].episodes) {
          m.mean_dI += e.fitting_gain;
          m.mean_C += e.compression_penalty;
          n_ep += 1.0;
        }
      }
    m.mean_r_out /= n_roll;
    m.mean_tokens /= n_roll;
    m.mean_episodes /= n_roll;
    if (n_ep > 0) {
      m.mean_dI /= n_ep;
      m.mean_C /= n_ep;
    }
    m.clip_frac = st.clip_fraction;
    m.kl = st.kl;
    if (cfg_.wall_clock)
      m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return m;
  }

 private:
  int random_size() const {
    const int m = static_cast<int>(std::lround(cfg_.random_fraction * static_cast<double>(params_.dim())));
    return std::clamp(m, 1, static_cast<int>(params_.dim()));
  }

  void refresh_basis() {
    if (cfg_.proxy_mode == ProxyMode::kRandomCoordinates) {
      Rng rng(derive_seed(cfg_.seed, {0x5a3bULL, static_cast<std::uint64_t>(step_)}));
      basis_ = random_coordinate_basis(params_.dim(), random_size(), rng, step_);
      return;
    }
    const auto hist = history_.snapshot();
    const int r = std::min<int>(rank_, static_cast<int>(hist.size()));
    try {
      basis_ = fit_basis(hist, r, step_);
    } catch (const Error&) {
      // Degenerate history: keep the previous basis.
    }
  }

  TrainConfig cfg_;
  PolicyParams params_;
  TaskSampler sampler_;
  UpdateHistory history_;
  ProxyBasis basis_;
  std::vector<RolloutGroup> last_groups_;
  int rank_ = 1;
  int step_ = 0;
};

}  // namespace l2t

#endif  // L2T_GRPO_HPP_
