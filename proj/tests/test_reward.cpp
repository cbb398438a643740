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

#include <gtest/gtest.h>

#include "l2t/checks.hpp"
#include "l2t/oracle.hpp"
#include "l2t/reward.hpp"

namespace l2t {
namespace {

TEST(FittingGain, EmptyEpisodeIsZero) {
  const PolicyParams p = reasoner_params();
  const Task t = generate_task(1, 2);
  EXPECT_EQ(fitting_gain(p, t.question_tokens, {}, t), 0.0);
}

TEST(FittingGain, EqualsEnumeratedDifference) {
  ArchMeta m;
  m.vocab = toy_vocabulary(2, true);  // V = 6
  m.features = FeatureSet::kNGram;
  m.ngram_order = 2;
  m.context_window = 8;
  Rng rng(1);
  const PolicyParams p = random_params(m, rng, 1.0);
  Task t;
  t.oracle_answer_tokens = {1};
  const TokenSeq before = {0};
  const TokenSeq episode = {*m.vocab.episode_open, 1, *m.vocab.episode_close};
  auto J = [&](TokenSeq ctx) {
    ctx.push_back(m.vocab.answer);
    const double a = std::exp(next_token_logprobs(p, make_state(ctx, m))[1]);
    ctx.push_back(1);
    const double b = std::exp(next_token_logprobs(p, make_state(ctx, m))[m.vocab.eos]);
    return std::sqrt(a * b);
  };
  TokenSeq after = before;
  after.insert(after.end(), episode.begin(), episode.end());
  EXPECT_NEAR(fitting_gain(p, before, episode, t), J(after) - J(before), 1e-14);
}

TEST(FittingGain, PivotalEpisodesCarryLargestGains) {
  // The desk policy gains most from steps that produce the answer.
  const PolicyParams p = reasoner_params({}, 64);
  const Task t = generate_task(21, 4);
  const Vocabulary& v = p.meta.vocab;
  const Trajectory tr = oracle_trajectory(t, v);
  TokenSeq ctx = t.question_tokens;
  std::vector<double> gains;
  for (const Span& s : tr.episode_spans) {
    TokenSeq ep(tr.tokens.begin() + static_cast<std::ptrdiff_t>(s.start) - 1,
                tr.tokens.begin() + static_cast<std::ptrdiff_t>(s.end) + 1);
    gains.push_back(fitting_gain(p, ctx, ep, t));
    ctx.insert(ctx.end(), ep.begin(), ep.end());
  }
  EXPECT_GT(*std::max_element(gains.begin(), gains.end()), 0.0);
}

TEST(CompressionPenalty, ZeroUpdateIsZero) {
  Rng rng(2);
  EXPECT_EQ(compression_penalty(identity_basis(5, 3), Vector::Zero(5), {rng.normal_vector(5)}, 1e-5), 0.0);
}

TEST(CompressionPenalty, Substitution) {
  Vector d(2), g(2);
  d << 0.1, -0.2;
  g << 1.0, 2.0;
  EXPECT_NEAR(compression_penalty(identity_basis(2, 2), d, {g}, 0.0), 0.09, 1e-15);
}

TEST(CompressionPenalty, FullRankMatchesOracle) {
  const auto r = checks::penalty_full_rank_check(50, 3);
  EXPECT_TRUE(r.passed) << r.value;
}

TEST(CompressionPenalty, MatchesExactFisherAtFullRank) {
  // V = 4, order-1 n-gram: d = 20.
  ArchMeta m;
  m.vocab = toy_vocabulary(2, false);
  m.features = FeatureSet::kNGram;
  m.ngram_order = 1;
  m.context_window = 4;
  Rng rng(4);
  const PolicyParams p = random_params(m, rng, 1.0);
  const PolicyState s = make_state({1}, m);
  const Matrix F = oracle::exact_fisher(p, s);
  const Vector delta = rng.normal_vector(static_cast<Eigen::Index>(p.dim()), 0.3);
  // The penalty with every outcome weighted by its probability is the exact
  // expectation.
  std::vector<Vector> grads;
  std::vector<double> w;
  for (TokenId z = 0; z < m.vocab.size; ++z) {
    grads.push_back(grad_logprob(p, s, z));
    w.push_back(std::exp(next_token_logprobs(p, s)[z]));
  }
  const double lambda = 1e-5;
  const double got = compression_penalty(identity_basis(p.dim(), static_cast<int>(p.dim())), delta, grads, lambda, &w);
  const double exact = delta.dot(F * delta) + lambda * delta.squaredNorm();
  EXPECT_NEAR(got / exact, 1.0, 1e-10);
}

TEST(CompressionPenalty, NonNegative) {
  Rng rng(5);
  for (int n = 0; n < 200; ++n) {
    std::vector<Vector> g;
    for (int j = 0; j < 3; ++j) g.push_back(rng.normal_vector(8));
    EXPECT_GE(compression_penalty(identity_basis(8, 1 + n % 8), rng.normal_vector(8), g, 1e-5), 0.0);
  }
}

TEST(CompressionPenalty, DimensionMismatch) {
  EXPECT_THROW(compression_penalty(identity_basis(4, 2), Vector::Zero(3), {Vector::Zero(4)}, 1e-5), Error);
}

TEST(VirtualUpdate, ZeroStepGivesZeroPenalty) {
  Rng rng(6);
  const PolicyParams p = zero_params(reasoner_meta());
  const ProxyBasis b = identity_basis(p.dim(), 4);
  const std::vector<Vector> g = {rng.normal_vector(static_cast<Eigen::Index>(p.dim()))};
  const Vector d = virtual_update(p, b, g, 0.0);
  EXPECT_EQ(d.squaredNorm(), 0.0);
  EXPECT_EQ(compression_penalty(b, d, g, 1e-5), 0.0);
}

TEST(VirtualUpdate, SingleGradientUnitStep) {
  Rng rng(7);
  const PolicyParams p = zero_params(reasoner_meta());
  const Vector g = rng.normal_vector(static_cast<Eigen::Index>(p.dim()));
  EXPECT_EQ(virtual_update(p, identity_basis(p.dim(), 3), {g}, 1.0), g);
}

TEST(VirtualUpdate, PenaltyScalesQuadratically) {
  Rng rng(8);
  const PolicyParams p = zero_params(reasoner_meta());
  const ProxyBasis b = identity_basis(p.dim(), 50);
  std::vector<Vector> g;
  for (int j = 0; j < 4; ++j) g.push_back(rng.normal_vector(static_cast<Eigen::Index>(p.dim())));
  const double c1 = compression_penalty(b, virtual_update(p, b, g, 1e-3), g, 1e-5);
  const double c2 = compression_penalty(b, virtual_update(p, b, g, 2e-3), g, 1e-5);
  EXPECT_NEAR(c2 / c1, 4.0, 1e-6);
}

TEST(ProcessReward, Substitutions) {
  EXPECT_NEAR(process_reward(0.23, 0.05, 0.6), 0.20, 1e-15);
  EXPECT_EQ(process_reward(0.0, 0.0, 0.6), 0.0);
  EXPECT_NEAR(process_reward(0.1, 0.5, 0.6), -0.20, 1e-15);
}

TEST(ProcessReward, Affine) {
  EXPECT_NEAR(process_reward(0.3, 0.2, 0.6) - process_reward(0.3, 0.4, 0.6), 0.6 * 0.2, 1e-15);
}

TEST(EpisodeReward, Substitutions) {
  EXPECT_NEAR(episode_reward(1, 4, 0.8, 0.2), 0.41, 1e-15);
  EXPECT_EQ(episode_reward(0, 3, 0.8, 0.0), 0.0);
  EXPECT_NEAR(episode_reward(1, 1, 0.8, -0.1), 0.92, 1e-15);
  EXPECT_THROW(episode_reward(1, 0, 0.8, 0.0), Error);
}

TEST(RewardConfig, Validation) {
  RewardConfig c;
  c.alpha = -1;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "alpha must be > 0");
  }
}

TEST(ScoreRollout, InvariantsOnSampledRollouts) {
  const PolicyParams p = reasoner_params({}, 64);
  const ProxyBasis b = identity_basis(p.dim(), 56);
  ScoringOptions opt;
  opt.reward.virtual_step = 3.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Task t = generate_task(s, 1 + static_cast<int>(s % 4));
    Rng rng(s);
    const Trajectory tr = sample_trajectory(p, t, 256, rng);
    const RolloutScore sc = score_rollout(p, b, t, tr, opt);
    ASSERT_EQ(sc.episodes.size(), sc.credit.size());
    const int K = static_cast<int>(sc.episodes.size());
    for (const auto& e : sc.episodes) {
      EXPECT_GE(e.compression_penalty, 0.0);
      EXPECT_EQ(e.process_reward, e.fitting_gain - opt.reward.beta * e.compression_penalty);
      EXPECT_EQ(e.combined, static_cast<double>(sc.outcome) / K + opt.reward.alpha * e.process_reward);
      EXPECT_GE(e.fitting_gain, -1.0);
      EXPECT_LE(e.fitting_gain, 1.0);
    }
  }
}

TEST(ScoreRollout, OracleTraceFittingGainsTelescope) {
  const PolicyParams p = reasoner_params({}, 64);
  const Task t = generate_task(3, 3);
  const Trajectory tr = oracle_trajectory(t, p.meta.vocab);
  const RolloutScore sc = score_rollout(p, identity_basis(p.dim(), 10), t, tr, {});
  double sum = 0.0;
  for (const auto& e : sc.episodes) sum += e.fitting_gain;
  TokenSeq end = t.question_tokens;
  end.insert(end.end(), tr.tokens.begin(), tr.tokens.begin() + static_cast<std::ptrdiff_t>(tr.episode_spans.back().end + 1));
  EXPECT_NEAR(sum, correctness_prob(p, end, t) - correctness_prob(p, t.question_tokens, t), 1e-12);
  EXPECT_EQ(sc.outcome, 1);
}

TEST(RewardTrace, RecordFields) {
  EpisodeReward e{2, 0.1, 0.05, 0.07, 0.3};
  const auto j = reward_trace_record("s1t1", 3, e);
  for (const char* k : {"task_id", "rollout", "k", "dI", "C", "r_prg", "R"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["k"], 2);
}

}  // namespace
}  // namespace l2t
