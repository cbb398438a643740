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

// Dense per-episode process reward.
//
//   r_prg(k) = dI(k) - beta * C(k)
//   dI(k)    = J(s_k + z_k) - J(s_k)                       two forward passes
//   C(k)     = mean_j (g~_j . dtheta~)^2 + lambda |dtheta~|^2
//   R(k)     = r_out / K + alpha * r_prg(k)
//
// where J is correctness_prob, g~_j are the episode's token scores projected
// onto the low-rank proxy and dtheta~ is the projected virtual update
// eta_v * mean_j g_j. The Fisher outer product is never materialised.

#ifndef L2T_REWARD_HPP_
#define L2T_REWARD_HPP_

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "l2t/common.hpp"
#include "l2t/lowrank.hpp"
#include "l2t/policy.hpp"
#include "l2t/task_env.hpp"

namespace l2t {

struct RewardConfig {
  double alpha = 0.8;
  double beta = 0.6;
  double damping = 1e-5;
  double virtual_step = 1e-6;

  void validate() const {
    require(alpha > 0.0, "alpha must be > 0");
    require(beta > 0.0, "beta must be > 0");
    require(damping > 0.0, "damping must be > 0");
    require(virtual_step >= 0.0, "virtual_step must be >= 0");
  }
};

struct EpisodeReward {
  int episode_index = 0;  // 1-based
  double fitting_gain = 0.0;
  double compression_penalty = 0.0;
  double process_reward = 0.0;
  double combined = 0.0;
};

inline double fitting_gain(const PolicyParams& params, const TokenSeq& context_before,
                           const TokenSeq& episode_tokens, const Task& task) {
  if (episode_tokens.empty()) return 0.0;
  TokenSeq after = context_before;
  after.insert(after.end(), episode_tokens.begin(), episode_tokens.end());
  return correctness_prob(params, after, task) - correctness_prob(params, context_before, task);
}

// Penalty from already-projected quantities. `weights`, when given, replace
// the uniform average over scores (they must sum to 1).
inline double compression_penalty_projected(const Vector& delta_proxy,
                                            const std::vector<Vector>& proxy_scores,
                                            double damping,
                                            const std::vector<double>* weights = nullptr) {
  require(!proxy_scores.empty(), "episode has no token scores");
  double quad = 0.0;
  for (std::size_t j = 0; j < proxy_scores.size(); ++j) {
    require(proxy_scores[j].size() == delta_proxy.size(), "dimension mismatch in penalty");
    const double s = proxy_scores[j].dot(delta_proxy);
    quad += (weights ? (*weights)[j] : 1.0) * s * s;
  }
  if (!weights) quad /= static_cast<double>(proxy_scores.size());
  return quad + damping * delta_proxy.squaredNorm();
}

inline double compression_penalty(const ProxyBasis& basis, const Vector& delta_theta,
                                  const std::vector<Vector>& episode_grads, double damping,
                                  const std::vector<double>* weights = nullptr) {
  require(!episode_grads.empty(), "episode has no token scores");
  if (weights) require(weights->size() == episode_grads.size(), "weight count mismatch");
  const double root_scale = std::sqrt(basis.coordinate_scale);
  const Vector dt = root_scale * project(basis, delta_theta);
  std::vector<Vector> g;
  g.reserve(episode_grads.size());
  for (const auto& x : episode_grads) g.push_back(root_scale * project(basis, x));
  return compression_penalty_projected(dt, g, damping, weights);
}

// eta_v times the mean token score: the one-step adaptation attributed to an
// episode when no optimizer step separates consecutive episodes.
inline Vector virtual_update(const PolicyParams& params, const ProxyBasis& basis,
                             const std::vector<Vector>& episode_grads, double virtual_step) {
  require(!episode_grads.empty(), "episode has no token scores");
  require(basis.dim() == params.dim(), "basis does not match parameter dimension");
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(params.dim()));
  for (const auto& g : episode_grads) {
    require(g.size() == mean.size(), "gradient dimension mismatch");
    mean += g;
  }
  return (virtual_step / static_cast<double>(episode_grads.size())) * mean;
}

inline double process_reward(double fitting, double penalty, double beta) {
  return fitting - beta * penalty;
}

inline double episode_reward(int r_out, int num_episodes, double alpha, double r_prg) {
  require(num_episodes >= 1, "episode count must be at least 1");
  return static_cast<double>(r_out) / num_episodes + alpha * r_prg;
}

// How the fitting term of the process reward is produced.
enum class FittingSource {
  kCorrectness,   // J(s_k + z_k) - J(s_k)
  kOverlapStub,   // oracle-trace token overlap, no dependence on the policy
};

// Oracle-overlap heuristic: fraction of episode k's content shared (as a
// multiset) with the oracle's k-th step, divided by the number of oracle
// steps so that a faithful trace sums to about 1.
inline double overlap_score(const TokenSeq& content, const Task& task, int k,
                            const Vocabulary& vocab) {
  const auto oracle_spans = segment_episodes(task.oracle_trace_tokens, vocab);
  if (k < 1 || static_cast<std::size_t>(k) > oracle_spans.size()) return 0.0;
  const Span s = oracle_spans[static_cast<std::size_t>(k - 1)];
  std::vector<int> counts(static_cast<std::size_t>(vocab.size), 0);
  for (std::size_t i = s.start; i < s.end; ++i) ++counts[static_cast<std::size_t>(task.oracle_trace_tokens[i])];
  std::size_t shared = 0;
  for (TokenId t : content)
    if (t >= 0 && t < vocab.size && counts[static_cast<std::size_t>(t)] > 0) {
      --counts[static_cast<std::size_t>(t)];
      ++shared;
    }
  const double denom = static_cast<double>(std::max(content.size(), s.size()));
  if (denom == 0.0) return 0.0;
  return static_cast<double>(shared) / denom / static_cast<double>(oracle_spans.size());
}

struct RolloutScore {
  int outcome = 0;
  std::vector<Span> credit;  // token range receiving each episode's reward
  std::vector<EpisodeReward> episodes;
};

struct ScoringOptions {
  RewardConfig reward;
  bool use_process_reward = true;  // false: R = r_out / K
  FittingSource fitting = FittingSource::kCorrectness;
  bool compute_terms_when_unused = true;
};

// Context (question plus generated prefix) that ends right after episode k's
// closing delimiter; an episode left open gets a synthetic close.
inline TokenSeq boundary_context(const Task& task, const Trajectory& traj, const Span& span,
                                 const Vocabulary& vocab) {
  TokenSeq ctx = task.question_tokens;
  std::size_t end = span.end;
  if (end < traj.tokens.size() && vocab.is_close(traj.tokens[end])) ++end;
  ctx.insert(ctx.end(), traj.tokens.begin(), traj.tokens.begin() + static_cast<std::ptrdiff_t>(end));
  if (!at_episode_boundary(ctx, vocab)) ctx.push_back(*vocab.episode_close);
  return ctx;
}

// Episode rewards of one rollout under the (old) policy `params`.
inline RolloutScore score_rollout(const PolicyParams& params, const ProxyBasis& basis,
                                  const Task& task, const Trajectory& traj,
                                  const ScoringOptions& opt) {
  const Vocabulary& vocab = params.meta.vocab;
  RolloutScore out;
  out.outcome = outcome_reward(traj, task, vocab);
  out.credit = episode_credit_ranges(traj.tokens, traj.episode_spans, vocab);
  const int K = static_cast<int>(out.credit.size());
  if (K == 0) return out;

  const bool need_terms = opt.use_process_reward || opt.compute_terms_when_unused;
  std::vector<double> j_after;
  if (need_terms && opt.fitting == FittingSource::kCorrectness) {
    // J at s_1 and after every episode; consecutive episodes share contexts.
    const double j0 = correctness_prob(params, task.question_tokens, task);
    j_after.push_back(j0);
    for (int k = 0; k < K; ++k) {
      if (traj.episode_spans.empty()) {
        // No episode structure: the single pseudo-episode spans the whole
        // trajectory and ends wherever the reasoning region ends.
        TokenSeq ctx = task.question_tokens;
        const std::size_t end = reasoning_end(traj.tokens, vocab);
        ctx.insert(ctx.end(), traj.tokens.begin(), traj.tokens.begin() + static_cast<std::ptrdiff_t>(end));
        if (!at_episode_boundary(ctx, vocab)) ctx.push_back(*vocab.episode_close);
        j_after.push_back(end == 0 ? j0 : correctness_prob(params, ctx, task));
      } else {
        j_after.push_back(correctness_prob(
            params, boundary_context(task, traj, traj.episode_spans[static_cast<std::size_t>(k)], vocab),
            task));
      }
    }
  }

  TokenSeq ctx = task.question_tokens;
  ctx.insert(ctx.end(), traj.tokens.begin(), traj.tokens.end());
  const std::size_t q = task.question_tokens.size();
  for (int k = 0; k < K; ++k) {
    const Span range = out.credit[static_cast<std::size_t>(k)];
    EpisodeReward er;
    er.episode_index = k + 1;
    if (need_terms) {
      if (opt.fitting == FittingSource::kCorrectness) {
        er.fitting_gain = j_after[static_cast<std::size_t>(k + 1)] - j_after[static_cast<std::size_t>(k)];
      } else {
        TokenSeq content;
        if (!traj.episode_spans.empty()) {
          const Span s = traj.episode_spans[static_cast<std::size_t>(k)];
          content.assign(traj.tokens.begin() + static_cast<std::ptrdiff_t>(s.start),
                         traj.tokens.begin() + static_cast<std::ptrdiff_t>(s.end));
        }
        er.fitting_gain = overlap_score(content, task, k + 1, vocab);
      }
      if (range.size() > 0) {
        std::vector<Vector> proj;
        proj.reserve(range.size());
        Vector mean = Vector::Zero(basis.basis.cols());
        const double root_scale = std::sqrt(basis.coordinate_scale);
        for (std::size_t t = range.start; t < range.end; ++t) {
          const TokenSeq prefix(ctx.begin(), ctx.begin() + static_cast<std::ptrdiff_t>(q + t));
          const Score sc = detail::evaluate_unchecked(params, make_state(prefix, params.meta),
                                                      traj.tokens[t]).score;
          proj.push_back(root_scale * sc.project(basis.basis));
          mean += proj.back();
        }
        const Vector delta = (opt.reward.virtual_step / static_cast<double>(proj.size())) * mean;
        er.compression_penalty = compression_penalty_projected(delta, proj, opt.reward.damping);
      }
      er.process_reward = process_reward(er.fitting_gain, er.compression_penalty, opt.reward.beta);
    }
    er.combined = opt.use_process_reward
                      ? episode_reward(out.outcome, K, opt.reward.alpha, er.process_reward)
                      : episode_reward(out.outcome, K, opt.reward.alpha, 0.0);
    out.episodes.push_back(er);
  }
  return out;
}

inline nlohmann::json reward_trace_record(const std::string& task_id, int rollout,
                                          const EpisodeReward& e) {
  return {{"task_id", task_id},       {"rollout", rollout},
          {"k", e.episode_index},     {"dI", e.fitting_gain},
          {"C", e.compression_penalty}, {"r_prg", e.process_reward},
          {"R", e.combined}};
}

}  // namespace l2t

#endif  // L2T_REWARD_HPP_
