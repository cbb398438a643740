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

// Autoregressive categorical policies over a token vocabulary.
//
// Two architectures share one flat parameter vector:
//   kLinearSoftmax   logits = W phi(context), phi a sparse feature map.
//                    Score vectors are phi (x) (onehot - softmax).
//   kSmallAttention  see attention.hpp; scores come from its reverse pass.

#ifndef L2T_POLICY_HPP_
#define L2T_POLICY_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "l2t/attention.hpp"
#include "l2t/common.hpp"
#include "l2t/features.hpp"
#include "l2t/rng.hpp"
#include "l2t/task_env.hpp"

namespace l2t {

enum class Arch : std::uint32_t { kLinearSoftmax = 0, kSmallAttention = 1 };

struct ArchMeta {
  Arch arch = Arch::kLinearSoftmax;
  Vocabulary vocab;
  int context_window = 256;
  int hidden = 16;  // attention only
  int layers = 1;   // attention only
  FeatureSet features = FeatureSet::kNGram;
  int ngram_order = 2;

  bool operator==(const ArchMeta&) const = default;

  attention::Shape attention_shape() const {
    return {vocab.size, context_window, hidden, layers};
  }
};

inline int feature_count(const ArchMeta& m) {
  return m.features == FeatureSet::kReasoner ? reasoner::kFeatureCount
                                             : ngram_feature_count(m.vocab.size, m.ngram_order);
}

inline std::size_t parameter_count(const ArchMeta& m) {
  if (m.arch == Arch::kSmallAttention) return m.attention_shape().size();
  return static_cast<std::size_t>(m.vocab.size) * static_cast<std::size_t>(feature_count(m));
}

struct PolicyParams {
  Vector values;
  ArchMeta meta;

  std::size_t dim() const { return static_cast<std::size_t>(values.size()); }
  bool operator==(const PolicyParams& o) const {
    return meta == o.meta && values.size() == o.values.size() && values == o.values;
  }
};

inline void validate(const PolicyParams& p) {
  require(p.meta.vocab.size >= 2, "vocabulary needs at least two tokens");
  require(p.meta.context_window >= 1, "context window must be positive");
  if (p.meta.features == FeatureSet::kReasoner)
    require(p.meta.vocab.size == tok::kArithmeticSize,
            "reasoner features need the arithmetic vocabulary");
  require(p.dim() == parameter_count(p.meta), "parameter count does not match architecture");
  require(p.values.allFinite(), "non-finite parameters");
}

inline PolicyParams zero_params(const ArchMeta& meta) {
  PolicyParams p{Vector::Zero(static_cast<Eigen::Index>(parameter_count(meta))), meta};
  return p;
}

inline PolicyParams random_params(const ArchMeta& meta, Rng& rng, double scale) {
  PolicyParams p = zero_params(meta);
  p.values = rng.normal_vector(p.values.size(), scale);
  return p;
}

inline ArchMeta reasoner_meta(int context_window = 256) {
  ArchMeta m;
  m.arch = Arch::kLinearSoftmax;
  m.vocab = arithmetic_vocabulary();
  m.context_window = context_window;
  m.features = FeatureSet::kReasoner;
  return m;
}

inline PolicyParams reasoner_params(const ReasonerInit& init = {}, int context_window = 256) {
  using namespace reasoner;
  PolicyParams p = zero_params(reasoner_meta(context_window));
  const int F = kFeatureCount;
  auto w = [&](TokenId v, int f) -> double& { return p.values[v * F + f]; };
  for (TokenId v = 0; v < kV; ++v) {
    w(v, kEpisodeSuggest + v) = init.copy_logit;
    w(v, kAnswerSuggest + v) = init.copy_logit;
    if (v != tok::kOpen && v != tok::kAnswer) w(v, kBoundaryBias) = init.stray_logit;
  }
  for (int r = 1; r <= kCountCap; ++r) {
    w(tok::kOpen, kRemaining + r) = init.open_logit;
    w(tok::kAnswer, kRemaining + r) = init.premature_answer_logit;
  }
  w(tok::kOpen, kRemaining) = init.verify_open_logit;
  w(tok::kAnswer, kRemaining) = init.done_answer_logit;
  w(tok::kEos, kOtherBias) = init.other_eos_logit;
  return p;
}

struct PolicyState {
  TokenSeq context_tokens;
};

// The last `context_window` tokens of `context`.
inline PolicyState make_state(const TokenSeq& context, const ArchMeta& meta) {
  const auto w = static_cast<std::size_t>(meta.context_window);
  if (context.size() <= w) return {context};
  return {TokenSeq(context.end() - static_cast<std::ptrdiff_t>(w), context.end())};
}

inline void log_softmax_inplace(Vector& v) {
  const double mx = v.maxCoeff();
  const double lse = mx + std::log((v.array() - mx).exp().sum());
  v.array() -= lse;
}

// Gradient of log pi(token | state) with respect to the flat parameters,
// kept in factored form when the architecture allows it.
class Score {
 public:
  struct Factored {
    SparseFeatures features;
    Vector coeff;  // onehot(token) - softmax, length V
    int feature_count = 0;
  };

  Score() = default;
  explicit Score(Factored f) : rep_(std::move(f)) {}
  explicit Score(Vector dense) : rep_(std::move(dense)) {}

  double dot(const Vector& x) const {
    if (const auto* d = std::get_if<Vector>(&rep_)) return d->dot(x);
    const auto& f = std::get<Factored>(rep_);
    double s = 0.0;
    for (const auto& ft : f.features) {
      double inner = 0.0;
      for (Eigen::Index v = 0; v < f.coeff.size(); ++v)
        inner += f.coeff[v] * x[v * f.feature_count + ft.index];
      s += ft.value * inner;
    }
    return s;
  }

  void add_to(Vector& x, double scale) const {
    if (const auto* d = std::get_if<Vector>(&rep_)) {
      x.noalias() += scale * *d;
      return;
    }
    const auto& f = std::get<Factored>(rep_);
    for (const auto& ft : f.features)
      for (Eigen::Index v = 0; v < f.coeff.size(); ++v)
        x[v * f.feature_count + ft.index] += scale * ft.value * f.coeff[v];
  }

  // basis^T g for a d x r basis.
  Vector project(const Matrix& basis) const {
    if (const auto* d = std::get_if<Vector>(&rep_)) return basis.transpose() * *d;
    const auto& f = std::get<Factored>(rep_);
    Vector out = Vector::Zero(basis.cols());
    for (const auto& ft : f.features)
      for (Eigen::Index v = 0; v < f.coeff.size(); ++v) {
        const double c = ft.value * f.coeff[v];
        if (c != 0.0) out.noalias() += c * basis.row(v * f.feature_count + ft.index).transpose();
      }
    return out;
  }

  Vector dense(std::size_t d) const {
    Vector g = Vector::Zero(static_cast<Eigen::Index>(d));
    add_to(g, 1.0);
    return g;
  }

 private:
  std::variant<Vector, Factored> rep_;
};

namespace detail {

inline SparseFeatures linear_features(const ArchMeta& m, const TokenSeq& ctx) {
  if (m.features == FeatureSet::kReasoner) return reasoner::features(ctx);
  return ngram_features(ctx, m.vocab.size, m.ngram_order);
}

inline Vector linear_logits(const PolicyParams& p, const SparseFeatures& phi) {
  const int V = p.meta.vocab.size;
  const int F = feature_count(p.meta);
  Vector logits = Vector::Zero(V);
  for (int v = 0; v < V; ++v) {
    double s = 0.0;
    for (const auto& f : phi) s += f.value * p.values[v * F + f.index];
    logits[v] = s;
  }
  return logits;
}

// No parameter validation; callers check once per batch of evaluations.
inline Vector logprobs_unchecked(const PolicyParams& p, const PolicyState& s) {
  Vector lp;
  if (p.meta.arch == Arch::kLinearSoftmax) {
    lp = linear_logits(p, linear_features(p.meta, s.context_tokens));
  } else {
    lp = attention::forward(p.meta.attention_shape(), p.values, s.context_tokens).logits;
  }
  log_softmax_inplace(lp);
  return lp;
}

struct Evaluated {
  Vector logprobs;
  Score score;
};

inline Evaluated evaluate_unchecked(const PolicyParams& p, const PolicyState& s, TokenId token) {
  require(token >= 0 && token < p.meta.vocab.size, "token id out of range");
  Evaluated out;
  if (p.meta.arch == Arch::kLinearSoftmax) {
    SparseFeatures phi = linear_features(p.meta, s.context_tokens);
    out.logprobs = linear_logits(p, phi);
    log_softmax_inplace(out.logprobs);
    Vector coeff = -out.logprobs.array().exp().matrix();
    coeff[token] += 1.0;
    out.score = Score(Score::Factored{std::move(phi), std::move(coeff), feature_count(p.meta)});
  } else {
    const auto shape = p.meta.attention_shape();
    const auto fwd = attention::forward(shape, p.values, s.context_tokens);
    out.logprobs = fwd.logits;
    log_softmax_inplace(out.logprobs);
    Vector dlogits = -out.logprobs.array().exp().matrix();
    dlogits[token] += 1.0;
    Vector g = Vector::Zero(p.values.size());
    attention::backward(shape, p.values, s.context_tokens, fwd, dlogits, g);
    require(g.allFinite(), "non-finite gradient");
    out.score = Score(std::move(g));
  }
  return out;
}

}  // namespace detail

inline Vector next_token_logprobs(const PolicyParams& params, const PolicyState& state) {
  validate(params);
  return detail::logprobs_unchecked(params, state);
}

inline Score score(const PolicyParams& params, const PolicyState& state, TokenId token) {
  return detail::evaluate_unchecked(params, state, token).score;
}

// d/dtheta log pi(token | state).
inline Vector grad_logprob(const PolicyParams& params, const PolicyState& state, TokenId token) {
  validate(params);
  return score(params, state, token).dense(params.dim());
}

// Sum of log pi(continuation_j | prompt, continuation_<j), teacher forced.
inline double sequence_logprob(const PolicyParams& p, const TokenSeq& prompt,
                               const TokenSeq& continuation) {
  TokenSeq ctx = prompt;
  double total = 0.0;
  for (TokenId t : continuation) {
    const Vector lp = detail::logprobs_unchecked(p, make_state(ctx, p.meta));
    total += lp[t];
    ctx.push_back(t);
  }
  return total;
}

struct DecodeOptions {
  double temperature = 1.0;   // 0 selects greedy decoding
  int stop_after_closes = 0;  // stop right after this many episode closes
};

struct Decoded {
  TokenSeq tokens;
  std::vector<double> logprobs;
  bool truncated = false;  // budget exhausted before <eos>
  bool stopped = false;    // stop_after_closes reached
};

inline Decoded decode(const PolicyParams& p, const TokenSeq& prompt, int budget, Rng& rng,
                      const DecodeOptions& opt = {}) {
  require(budget >= 1, "budget must be at least 1");
  validate(p);
  const Vocabulary& vocab = p.meta.vocab;
  Decoded out;
  TokenSeq ctx = prompt;
  int closes = 0;
  while (static_cast<int>(out.tokens.size()) < budget) {
    const Vector lp = detail::logprobs_unchecked(p, make_state(ctx, p.meta));
    TokenId next = 0;
    if (opt.temperature <= 0.0) {
      Eigen::Index arg = 0;
      lp.maxCoeff(&arg);
      next = static_cast<TokenId>(arg);
    } else if (opt.temperature == 1.0) {
      next = rng.categorical_from_logprobs(lp);
    } else {
      Vector tempered = lp / opt.temperature;
      log_softmax_inplace(tempered);
      next = rng.categorical_from_logprobs(tempered);
    }
    out.tokens.push_back(next);
    out.logprobs.push_back(lp[next]);
    ctx.push_back(next);
    if (next == vocab.eos) return out;
    if (vocab.is_close(next) && opt.stop_after_closes > 0 && ++closes >= opt.stop_after_closes) {
      out.stopped = true;
      return out;
    }
  }
  out.truncated = true;
  return out;
}

inline Trajectory sample_trajectory(const PolicyParams& params, const Task& task, int budget,
                                    Rng& rng, int max_episodes = kDefaultMaxEpisodes,
                                    double temperature = 1.0) {
  Decoded d = decode(params, task.question_tokens, budget, rng, {temperature, 0});
  Trajectory t;
  t.task_id = task.id;
  t.tokens = std::move(d.tokens);
  t.per_token_logprob = std::move(d.logprobs);
  t.truncated = d.truncated;
  t.token_count = t.tokens.size();
  t.episode_spans = cap_episodes(segment_episodes(t.tokens, params.meta.vocab), max_episodes);
  return t;
}

// Length-normalised teacher-forced probability of the oracle answer and <eos>
// after forcing an answer from `context` (question plus generated prefix).
inline double correctness_prob(const PolicyParams& params, const TokenSeq& context,
                               const Task& task) {
  require(!task.oracle_answer_tokens.empty(), "degenerate task");
  validate(params);
  const Vocabulary& vocab = params.meta.vocab;
  const TokenSeq forced = (!context.empty() && context.back() == vocab.answer)
                              ? context
                              : force_answer(context, vocab);
  TokenSeq target = task.oracle_answer_tokens;
  target.push_back(vocab.eos);
  const double lp = sequence_logprob(params, forced, target);
  return std::exp(lp / static_cast<double>(target.size()));
}

}  // namespace l2t

#endif  // L2T_POLICY_HPP_
