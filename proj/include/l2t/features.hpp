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

// Context feature maps for the linear-softmax policy.
//
// kNGram is vocabulary-agnostic: a bias plus one-hot codes of the last n
// tokens. kReasoner reads the arithmetic task structure out of the context
// (which sub-step the current episode is working on, how many steps remain,
// what the last written result is) and exposes it as sparse indicators; the
// linear layer decides how much to trust each one.

#ifndef L2T_FEATURES_HPP_
#define L2T_FEATURES_HPP_

#include <algorithm>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "l2t/common.hpp"
#include "l2t/task_env.hpp"

namespace l2t {

enum class FeatureSet : std::uint32_t { kNGram = 0, kReasoner = 1 };

struct Feature {
  int index = 0;
  double value = 1.0;
};
using SparseFeatures = std::vector<Feature>;

inline int ngram_feature_count(int vocab, int order) { return 1 + order * vocab; }

inline SparseFeatures ngram_features(const TokenSeq& context, int vocab, int order) {
  SparseFeatures f;
  f.push_back({0, 1.0});
  for (int j = 1; j <= order; ++j) {
    if (static_cast<std::size_t>(j) > context.size()) break;
    const TokenId t = context[context.size() - static_cast<std::size_t>(j)];
    f.push_back({1 + (j - 1) * vocab + t, 1.0});
  }
  return f;
}

// ---------------------------------------------------------------------------
// Reasoner features.

namespace reasoner {

inline constexpr int kV = tok::kArithmeticSize;
inline constexpr int kCountCap = 5;

// Block layout.
inline constexpr int kEpisodeBias = 0;
inline constexpr int kEpisodeSuggest = 1;                    // + token
inline constexpr int kBoundaryBias = kEpisodeSuggest + kV;   // 21
inline constexpr int kRemaining = kBoundaryBias + 1;         // + min(remaining, 5)
inline constexpr int kExtra = kRemaining + kCountCap + 1;    // + min(extra, 5)
inline constexpr int kAnswerBias = kExtra + kCountCap + 1;   // 34
inline constexpr int kAnswerSuggest = kAnswerBias + 1;       // + token
inline constexpr int kOtherBias = kAnswerSuggest + kV;       // 55
inline constexpr int kFeatureCount = kOtherBias + 1;         // 56

enum class Phase { kEpisode, kBoundary, kAnswer, kOther };

struct View {
  Phase phase = Phase::kOther;
  std::optional<TokenId> suggestion;
  int remaining = 0;
  int extra = 0;
};

struct Step {
  std::int64_t lhs = 0;
  TokenId op = tok::kPlus;
  std::int64_t rhs = 0;
};

inline std::optional<Step> parse_lhs(const TokenSeq& z, std::size_t begin, std::size_t end) {
  // A op B, where A may carry a sign.
  for (std::size_t i = begin + 1; i < end; ++i) {
    if (tok::is_op(z[i])) {
      auto a = parse_integer(z, begin, i);
      auto b = parse_integer(z, i + 1, end);
      if (a && b) return Step{*a, z[i], *b};
      return std::nullopt;
    }
  }
  return std::nullopt;
}

inline TokenSeq step_template(const Step& s) {
  TokenSeq t = integer_tokens(s.lhs);
  t.push_back(s.op);
  for (TokenId x : integer_tokens(s.rhs)) t.push_back(x);
  t.push_back(tok::kEquals);
  for (TokenId x : integer_tokens(apply_op(s.lhs, s.op, s.rhs))) t.push_back(x);
  return t;
}

inline View read(const TokenSeq& ctx) {
  View v;
  std::size_t q = 0;
  while (q < ctx.size() && ctx[q] != tok::kQuery) ++q;
  if (q == ctx.size() || q == 0 || !tok::is_digit(ctx[0])) return v;

  std::vector<std::int64_t> operands{ctx[0]};
  std::vector<TokenId> ops;
  for (std::size_t i = 1; i < q; i += 2) {
    if (i + 1 >= q || !tok::is_op(ctx[i]) || !tok::is_digit(ctx[i + 1])) return v;
    ops.push_back(ctx[i]);
    operands.push_back(ctx[i + 1]);
  }
  const int n = static_cast<int>(ops.size());
  if (n == 0) return v;
  std::vector<std::int64_t> chain{operands[0]};
  for (int k = 0; k < n; ++k) chain.push_back(apply_op(chain.back(), ops[k], operands[k + 1]));

  int completed = 0;
  std::optional<std::int64_t> last_result;
  std::optional<Step> last_step;
  bool in_episode = false, answering = false, stray = false;
  std::size_t ep_start = 0, ans_start = 0;
  for (std::size_t i = q + 1; i < ctx.size(); ++i) {
    const TokenId t = ctx[i];
    if (answering) {
      if (t == tok::kEos) return v;  // finished; anything after is kOther
      continue;
    }
    if (t == tok::kOpen) {
      in_episode = true;
      stray = false;
      ep_start = i + 1;
    } else if (t == tok::kClose) {
      if (!in_episode) {
        stray = true;
        continue;
      }
      in_episode = false;
      ++completed;
      std::size_t eq = ep_start;
      while (eq < i && ctx[eq] != tok::kEquals) ++eq;
      if (eq < i) {
        if (auto s = parse_lhs(ctx, ep_start, eq)) last_step = s;
        if (auto r = parse_integer(ctx, eq + 1, i)) last_result = r;
      }
    } else if (t == tok::kAnswer) {
      answering = true;
      in_episode = false;
      ans_start = i + 1;
    } else if (t == tok::kEos) {
      return v;
    } else if (!in_episode) {
      stray = true;
    }
  }
  if (stray) return v;

  if (answering) {
    v.phase = Phase::kAnswer;
    if (last_result) {
      const TokenSeq digits = integer_tokens(*last_result);
      const std::size_t p = ctx.size() - ans_start;
      v.suggestion = p < digits.size() ? digits[p] : tok::kEos;
    }
    return v;
  }
  if (in_episode) {
    const int k = completed + 1;
    Step s;
    if (k <= n) {
      s.lhs = (k == 1) ? operands[0] : last_result.value_or(chain[static_cast<std::size_t>(k - 1)]);
      s.op = ops[static_cast<std::size_t>(k - 1)];
      s.rhs = operands[static_cast<std::size_t>(k)];
    } else {
      // Past the last required step: re-verify the previous computation.
      s = last_step.value_or(Step{chain[static_cast<std::size_t>(n - 1)],
                                  ops[static_cast<std::size_t>(n - 1)],
                                  operands[static_cast<std::size_t>(n)]});
    }
    const TokenSeq tmpl = step_template(s);
    const std::size_t p = ctx.size() - ep_start;
    v.phase = Phase::kEpisode;
    v.suggestion = p < tmpl.size() ? tmpl[p] : tok::kClose;
    return v;
  }
  v.phase = Phase::kBoundary;
  v.remaining = std::clamp(n - completed, 0, kCountCap);
  v.extra = std::clamp(completed - n, 0, kCountCap);
  return v;
}

inline SparseFeatures features(const TokenSeq& ctx) {
  const View v = read(ctx);
  SparseFeatures f;
  switch (v.phase) {
    case Phase::kEpisode:
      f.push_back({kEpisodeBias, 1.0});
      if (v.suggestion) f.push_back({kEpisodeSuggest + *v.suggestion, 1.0});
      break;
    case Phase::kBoundary:
      f.push_back({kBoundaryBias, 1.0});
      f.push_back({kRemaining + v.remaining, 1.0});
      f.push_back({kExtra + v.extra, 1.0});
      break;
    case Phase::kAnswer:
      f.push_back({kAnswerBias, 1.0});
      if (v.suggestion) f.push_back({kAnswerSuggest + *v.suggestion, 1.0});
      break;
    case Phase::kOther:
      f.push_back({kOtherBias, 1.0});
      break;
  }
  return f;
}

}  // namespace reasoner

// Starting point for fine-tuning: a reasoner that follows its suggestions
// faithfully but keeps re-verifying after the last required step.
struct ReasonerInit {
  double copy_logit = 8.0;         // suggested token inside episodes / answers
  double open_logit = 6.0;         // open a new episode while steps remain
  double premature_answer_logit = 1.0;
  double verify_open_logit = 1.4;  // open a redundant episode once done
  double done_answer_logit = 0.0;
  double stray_logit = -4.0;       // any other token at a boundary
  double other_eos_logit = 5.0;
};

}  // namespace l2t

#endif  // L2T_FEATURES_HPP_
