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

#include <algorithm>
#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "l2t/checks.hpp"
#include "l2t/oracle.hpp"
#include "l2t/policy.hpp"

namespace l2t {
namespace {

ArchMeta ngram_meta(const Vocabulary& v, int order = 1, int window = 8) {
  ArchMeta m;
  m.vocab = v;
  m.features = FeatureSet::kNGram;
  m.ngram_order = order;
  m.context_window = window;
  return m;
}

Vocabulary binary_vocabulary() {
  Vocabulary v;
  v.size = 2;
  v.answer = 0;
  v.eos = 1;
  v.symbols = {"a", "<eos>"};
  return v;
}

TEST(NextTokenLogprobs, ZeroParamsUniform) {
  const PolicyParams p = zero_params(ngram_meta(toy_vocabulary(3, true)));
  const Vector lp = next_token_logprobs(p, make_state({0, 1, 2}, p.meta));
  for (Eigen::Index i = 0; i < lp.size(); ++i) EXPECT_NEAR(lp[i], -std::log(7.0), 1e-15);
}

TEST(NextTokenLogprobs, NormalizedForRandomParams) {
  Rng rng(1);
  for (Arch a : {Arch::kLinearSoftmax, Arch::kSmallAttention}) {
    ArchMeta m = ngram_meta(toy_vocabulary(4, true), 2);
    m.arch = a;
    m.hidden = 8;
    for (int n = 0; n < 50; ++n) {
      const PolicyParams p = random_params(m, rng, 1.0);
      const Vector lp = next_token_logprobs(p, make_state(checks::detail::random_context(rng, 8, 12), m));
      EXPECT_NEAR(lp.array().exp().sum(), 1.0, 1e-9);
    }
  }
}

TEST(NextTokenLogprobs, RaisingLogitRaisesProbability) {
  Rng rng(2);
  PolicyParams p = random_params(ngram_meta(toy_vocabulary(2, false)), rng, 1.0);
  const PolicyState s = make_state({0}, p.meta);
  double prev = next_token_logprobs(p, s)[1];
  const int F = feature_count(p.meta);
  for (int c = 0; c < 5; ++c) {
    p.values[1 * F + 0] += 0.5;  // bias feature of token 1
    const double now = next_token_logprobs(p, s)[1];
    EXPECT_GT(now, prev);
    prev = now;
  }
}

TEST(NextTokenLogprobs, NonFiniteRejected) {
  PolicyParams p = zero_params(ngram_meta(toy_vocabulary(2, false)));
  p.values[0] = std::nan("");
  try {
    next_token_logprobs(p, make_state({}, p.meta));
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "non-finite parameters");
  }
}

TEST(SampleTrajectory, BudgetOne) {
  const PolicyParams p = zero_params(ngram_meta(toy_vocabulary(2, true)));
  Task t;
  for (std::uint64_t s = 0; s < 30; ++s) {
    Rng rng(s);
    const Trajectory tr = sample_trajectory(p, t, 1, rng);
    ASSERT_EQ(tr.token_count, 1u);
    EXPECT_EQ(tr.truncated, tr.tokens[0] != p.meta.vocab.eos);
  }
}

TEST(SampleTrajectory, SameSeedSameTrajectory) {
  const PolicyParams p = reasoner_params();
  const Task t = generate_task(5, 3);
  Rng a(11), b(11);
  EXPECT_EQ(sample_trajectory(p, t, 128, a), sample_trajectory(p, t, 128, b));
}

// Every terminal sequence over {a, <eos>} with budget 3; probabilities sum
// to one and match the recorded per-token logprobs.
TEST(SampleTrajectory, EnumerationOverBinaryVocabulary) {
  Rng rng(3);
  const PolicyParams p = random_params(ngram_meta(binary_vocabulary(), 2), rng, 1.0);
  double total = 0.0;
  int leaves = 0;
  std::function<void(TokenSeq)> walk = [&](TokenSeq z) {
    if (!z.empty() && (z.back() == 1 || z.size() == 3)) {
      total += std::exp(sequence_logprob(p, {}, z));
      ++leaves;
      return;
    }
    for (TokenId t : {0, 1}) {
      TokenSeq next = z;
      next.push_back(t);
      walk(next);
    }
  };
  walk({});
  EXPECT_EQ(leaves, 4);  // <eos>, a<eos>, aa<eos>, aaa
  EXPECT_NEAR(total, 1.0, 1e-12);
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng r(s);
    const Trajectory tr = sample_trajectory(p, Task{}, 3, r);
    double sum = 0.0;
    for (double x : tr.per_token_logprob) sum += x;
    EXPECT_NEAR(sum, sequence_logprob(p, {}, tr.tokens), 1e-12);
  }
}

TEST(GradLogprob, UniformBinarySoftmax) {
  const PolicyParams p = zero_params(ngram_meta(binary_vocabulary(), 1));
  const Vector g = grad_logprob(p, make_state({}, p.meta), 0);
  EXPECT_DOUBLE_EQ(g[0], 0.5);  // token 0, bias feature
  EXPECT_DOUBLE_EQ(g[feature_count(p.meta)], -0.5);
}

TEST(GradLogprob, FiniteDifferencesBothArchitectures) {
  for (Arch a : {Arch::kLinearSoftmax, Arch::kSmallAttention}) {
    const auto r = checks::gradient_check(a, 100, 7);
    EXPECT_TRUE(r.passed) << r.name << " " << r.value;
  }
}

TEST(GradLogprob, ReasonerFeaturesFiniteDifferences) {
  Rng rng(4);
  PolicyParams p = reasoner_params({}, 64);
  p.values += rng.normal_vector(p.values.size(), 0.1);
  const Task t = generate_task(4, 2);
  TokenSeq ctx = t.question_tokens;
  ctx.insert(ctx.end(), t.oracle_trace_tokens.begin(), t.oracle_trace_tokens.begin() + 6);
  const PolicyState s = make_state(ctx, p.meta);
  const Vector g = grad_logprob(p, s, tok::kEquals);
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < g.size(); i += 7) {
    PolicyParams q = p;
    q.values[i] += h;
    const double up = next_token_logprobs(q, s)[tok::kEquals];
    q.values[i] -= 2 * h;
    const double down = next_token_logprobs(q, s)[tok::kEquals];
    EXPECT_NEAR(g[i], (up - down) / (2 * h), 1e-6);
  }
}

TEST(GradLogprob, ScoreIdentityByEnumeration) {
  Rng rng(5);
  for (int n = 0; n < 20; ++n) {
    const PolicyParams p = random_params(ngram_meta(toy_vocabulary(2, false), 2), rng, 1.0);
    const Vector s = oracle::expected_score(p, make_state(checks::detail::random_context(rng, 4, 5), p.meta));
    EXPECT_LE(s.cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(CorrectnessProb, UniformPolicy) {
  const PolicyParams p = zero_params(ngram_meta(toy_vocabulary(2, false)));
  Task t;
  t.oracle_answer_tokens = {0, 1};
  EXPECT_NEAR(correctness_prob(p, {}, t), 0.25, 1e-15);
}

TEST(CorrectnessProb, DeterministicPolicyGivesOne) {
  // Order-1 n-gram: after <ans> emit a, after a emit b, after b emit <eos>.
  const Vocabulary v = toy_vocabulary(2, false);
  PolicyParams p = zero_params(ngram_meta(v, 1));
  const int F = feature_count(p.meta);
  auto w = [&](TokenId out, TokenId prev) -> double& { return p.values[out * F + 1 + prev]; };
  w(0, v.answer) = 800;
  w(1, 0) = 800;
  w(v.eos, 1) = 800;
  Task t;
  t.oracle_answer_tokens = {0, 1};
  EXPECT_DOUBLE_EQ(correctness_prob(p, {}, t), 1.0);
}

TEST(CorrectnessProb, MatchesEnumeratedForcedPath) {
  Rng rng(6);
  const PolicyParams p = random_params(ngram_meta(binary_vocabulary(), 2), rng, 1.0);
  Task t;
  t.oracle_answer_tokens = {0, 1};
  // Forced context is [<ans>] = [0]; path 0, 1, <eos>=1.
  const TokenSeq ctx = {0};
  const double p1 = std::exp(next_token_logprobs(p, make_state(ctx, p.meta))[0]);
  const double p2 = std::exp(next_token_logprobs(p, make_state({0, 0}, p.meta))[1]);
  const double p3 = std::exp(next_token_logprobs(p, make_state({0, 0, 1}, p.meta))[1]);
  EXPECT_NEAR(correctness_prob(p, ctx, t), std::cbrt(p1 * p2 * p3), 1e-14);
}

TEST(CorrectnessProb, DegenerateTaskRejected) {
  const PolicyParams p = zero_params(ngram_meta(toy_vocabulary(2, false)));
  EXPECT_THROW(correctness_prob(p, {}, Task{}), Error);
}

TEST(CorrectnessProb, OnlyLastWindowMatters) {
  const PolicyParams p = reasoner_params({}, 16);
  const Task t = generate_task(8, 2);
  TokenSeq a = t.question_tokens, b = {1, 2, 3, 4, 5, 6, 7};
  const auto close = std::find(t.oracle_trace_tokens.begin(), t.oracle_trace_tokens.end(), tok::kClose);
  const TokenSeq tail(t.oracle_trace_tokens.begin(), close + 1);
  b.insert(b.end(), a.begin(), a.end());
  a.insert(a.end(), tail.begin(), tail.end());
  b.insert(b.end(), tail.begin(), tail.end());
  EXPECT_EQ(correctness_prob(p, a, t), correctness_prob(p, b, t));
}

int greedy_correct(const PolicyParams& p, int n, int* extra_episodes = nullptr) {
  int correct = 0;
  for (std::uint64_t s = 0; s < static_cast<std::uint64_t>(n); ++s) {
    const Task t = generate_task(s, 1 + static_cast<int>(s % 4));
    Rng rng(s);
    const Trajectory tr = sample_trajectory(p, t, 256, rng, 30, 0.0);
    correct += outcome_reward(tr, t, p.meta.vocab);
    if (extra_episodes)
      *extra_episodes += static_cast<int>(tr.episode_spans.size()) -
                         static_cast<int>(segment_episodes(t.oracle_trace_tokens, p.meta.vocab).size());
  }
  return correct;
}

TEST(Policy, DecisiveReasonerSolvesTasksGreedily) {
  ReasonerInit init;
  init.done_answer_logit = 3.0;
  EXPECT_GE(greedy_correct(reasoner_params(init, 64), 40), 36);
}

TEST(Policy, DefaultReasonerKeepsVerifying) {
  // Greedy decoding re-opens verification episodes instead of answering.
  int extra = 0;
  EXPECT_EQ(greedy_correct(reasoner_params({}, 64), 20, &extra), 0);
  EXPECT_GT(extra, 20);
}

}  // namespace
}  // namespace l2t
