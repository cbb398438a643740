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

// Synthetic chained-arithmetic reasoning tasks and the episodic view of a
// generated token stream.
//
// A task of tier t asks for the left-to-right value of an expression with
// t+1 binary operations. Its oracle trace performs one operation per episode:
//
//   question:  3+4*2?
//   trace:     <e>3+4=7</e><e>7*2=14</e><ans>14
//
// A sampled trajectory holds only generated tokens (the question is the
// prompt) and is terminated by <eos> or by the token budget.

#ifndef L2T_TASK_ENV_HPP_
#define L2T_TASK_ENV_HPP_

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "l2t/common.hpp"
#include "l2t/rng.hpp"

namespace l2t {

struct Vocabulary {
  int size = 0;
  std::optional<TokenId> episode_open;
  std::optional<TokenId> episode_close;
  TokenId answer = 0;
  TokenId eos = 0;
  std::vector<std::string> symbols;

  bool is_open(TokenId t) const { return episode_open && t == *episode_open; }
  bool is_close(TokenId t) const { return episode_close && t == *episode_close; }
  bool is_delimiter(TokenId t) const { return is_open(t) || is_close(t); }

  bool operator==(const Vocabulary&) const = default;

  std::string render(const TokenSeq& tokens) const {
    std::string out;
    for (TokenId t : tokens) {
      if (t >= 0 && t < static_cast<TokenId>(symbols.size())) {
        out += symbols[static_cast<std::size_t>(t)];
      } else {
        out += "<" + std::to_string(t) + ">";
      }
    }
    return out;
  }

  // Longest-match tokenization of rendered text.
  TokenSeq tokenize(std::string_view text) const {
    TokenSeq out;
    std::size_t i = 0;
    while (i < text.size()) {
      std::size_t best_len = 0;
      TokenId best = -1;
      for (std::size_t s = 0; s < symbols.size(); ++s) {
        const auto& sym = symbols[s];
        if (sym.size() > best_len && text.substr(i, sym.size()) == sym) {
          best_len = sym.size();
          best = static_cast<TokenId>(s);
        }
      }
      require(best >= 0, "cannot tokenize text at offset " + std::to_string(i));
      out.push_back(best);
      i += best_len;
    }
    return out;
  }
};

// Token ids of the arithmetic vocabulary.
namespace tok {
inline constexpr TokenId kPlus = 10;
inline constexpr TokenId kMinus = 11;
inline constexpr TokenId kTimes = 12;
inline constexpr TokenId kEquals = 13;
inline constexpr TokenId kQuery = 14;
inline constexpr TokenId kSep = 15;
inline constexpr TokenId kOpen = 16;
inline constexpr TokenId kClose = 17;
inline constexpr TokenId kAnswer = 18;
inline constexpr TokenId kEos = 19;
inline constexpr int kArithmeticSize = 20;

inline bool is_digit(TokenId t) { return t >= 0 && t <= 9; }
inline bool is_op(TokenId t) { return t == kPlus || t == kMinus || t == kTimes; }
}  // namespace tok

inline Vocabulary arithmetic_vocabulary() {
  Vocabulary v;
  v.size = tok::kArithmeticSize;
  v.episode_open = tok::kOpen;
  v.episode_close = tok::kClose;
  v.answer = tok::kAnswer;
  v.eos = tok::kEos;
  v.symbols = {"0", "1", "2", "3", "4", "5", "6",   "7",    "8",     "9",
               "+", "-", "*", "=", "?", ";", "<e>", "</e>", "<ans>", "<eos>"};
  return v;
}

// A small vocabulary for exact-enumeration tests: `content` plain symbols
// followed by the optional delimiters, then the answer marker and <eos>.
inline Vocabulary toy_vocabulary(int content, bool with_delimiters) {
  require(content >= 1, "toy vocabulary needs at least one content token");
  Vocabulary v;
  TokenId next = 0;
  for (int i = 0; i < content; ++i) v.symbols.push_back(std::string(1, static_cast<char>('a' + i)));
  next = static_cast<TokenId>(content);
  if (with_delimiters) {
    v.episode_open = next++;
    v.episode_close = next++;
    v.symbols.push_back("<e>");
    v.symbols.push_back("</e>");
  }
  v.answer = next++;
  v.eos = next++;
  v.symbols.push_back("<ans>");
  v.symbols.push_back("<eos>");
  v.size = next;
  return v;
}

struct Task {
  std::string id;
  TokenSeq question_tokens;
  TokenSeq oracle_trace_tokens;
  TokenSeq oracle_answer_tokens;
  int tier = 1;
  std::uint64_t seed = 0;

  bool operator==(const Task&) const = default;
};

struct Trajectory {
  std::string task_id;
  TokenSeq tokens;
  std::vector<Span> episode_spans;
  std::vector<double> per_token_logprob;
  bool truncated = false;
  std::size_t token_count = 0;

  bool operator==(const Trajectory&) const = default;
};

inline constexpr int kDefaultMaxEpisodes = 30;

// Decimal rendering of a signed integer as arithmetic tokens.
inline TokenSeq integer_tokens(std::int64_t value) {
  TokenSeq out;
  if (value < 0) out.push_back(tok::kMinus);
  const std::string digits = std::to_string(value < 0 ? -value : value);
  for (char c : digits) out.push_back(static_cast<TokenId>(c - '0'));
  return out;
}

// Parses an optionally signed decimal integer occupying all of `tokens`.
inline std::optional<std::int64_t> parse_integer(const TokenSeq& tokens, std::size_t begin,
                                                 std::size_t end) {
  if (begin >= end) return std::nullopt;
  bool negative = false;
  if (tokens[begin] == tok::kMinus) {
    negative = true;
    ++begin;
  }
  if (begin >= end || end - begin > 9) return std::nullopt;
  std::int64_t v = 0;
  for (std::size_t i = begin; i < end; ++i) {
    if (!tok::is_digit(tokens[i])) return std::nullopt;
    v = v * 10 + tokens[i];
  }
  return negative ? -v : v;
}

inline std::int64_t apply_op(std::int64_t a, TokenId op, std::int64_t b) {
  switch (op) {
    case tok::kPlus: return a + b;
    case tok::kMinus: return a - b;
    case tok::kTimes: return a * b;
    default: throw Error("not an operator token");
  }
}

// Deterministic in (seed, tier). Operands are single digits; a product that
// would leave [-999, 999] is replaced by an addition so every intermediate
// stays short.
inline Task generate_task(std::uint64_t seed, int tier) {
  require(tier >= 1 && tier <= 4, "tier must be in 1..4");
  Rng rng(derive_seed(seed, {0x7a5cULL, static_cast<std::uint64_t>(tier)}));
  const int n_ops = tier + 1;
  static constexpr TokenId kOps[] = {tok::kPlus, tok::kMinus, tok::kTimes};

  Task t;
  t.tier = tier;
  t.seed = seed;
  t.id = "s" + std::to_string(seed) + "t" + std::to_string(tier);

  std::int64_t acc = rng.uniform_int(1, 9);
  t.question_tokens.push_back(static_cast<TokenId>(acc));
  for (int k = 0; k < n_ops; ++k) {
    TokenId op = kOps[rng.uniform_int(0, 2)];
    const std::int64_t b = rng.uniform_int(1, 9);
    if (op == tok::kTimes && std::abs(acc * b) > 999) op = tok::kPlus;
    if (std::abs(apply_op(acc, op, b)) > 999) op = acc > 0 ? tok::kMinus : tok::kPlus;
    t.question_tokens.push_back(op);
    t.question_tokens.push_back(static_cast<TokenId>(b));

    const std::int64_t next = apply_op(acc, op, b);
    t.oracle_trace_tokens.push_back(tok::kOpen);
    for (TokenId x : integer_tokens(acc)) t.oracle_trace_tokens.push_back(x);
    t.oracle_trace_tokens.push_back(op);
    t.oracle_trace_tokens.push_back(static_cast<TokenId>(b));
    t.oracle_trace_tokens.push_back(tok::kEquals);
    for (TokenId x : integer_tokens(next)) t.oracle_trace_tokens.push_back(x);
    t.oracle_trace_tokens.push_back(tok::kClose);
    acc = next;
  }
  t.question_tokens.push_back(tok::kQuery);
  t.oracle_answer_tokens = integer_tokens(acc);
  t.oracle_trace_tokens.push_back(tok::kAnswer);
  for (TokenId x : t.oracle_answer_tokens) t.oracle_trace_tokens.push_back(x);
  return t;
}

// Index of the first answer marker or <eos>; episodes live strictly before it.
inline std::size_t reasoning_end(const TokenSeq& tokens, const Vocabulary& vocab) {
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] == vocab.answer || tokens[i] == vocab.eos) return i;
  return tokens.size();
}

// Content spans of the episodes in the reasoning region of `tokens`.
//
// Repair rules: an open delimiter inside an open episode closes it; an
// unmatched open is closed at the end of the region; text outside any pair
// joins the episode that follows it (so pre-text joins episode 1) and text
// after the last close forms a final episode. Without delimiters the whole
// region is one episode.
inline std::vector<Span> segment_episodes(const TokenSeq& tokens, const Vocabulary& vocab) {
  std::vector<Span> spans;
  const std::size_t end = reasoning_end(tokens, vocab);
  std::size_t start = 0;
  bool in_episode = false;
  for (std::size_t i = 0; i < end; ++i) {
    const TokenId t = tokens[i];
    if (vocab.is_open(t)) {
      if (in_episode) {
        spans.push_back({start, i});
        start = i + 1;
      } else if (i == start) {
        start = i + 1;
      }
      in_episode = true;
    } else if (vocab.is_close(t)) {
      if (in_episode || i > start) spans.push_back({start, i});
      start = i + 1;
      in_episode = false;
    }
  }
  if (in_episode || start < end) spans.push_back({start, end});
  return spans;
}

// Merges every span past the first `max_episodes` into the last kept one.
inline std::vector<Span> cap_episodes(std::vector<Span> spans, int max_episodes) {
  const auto cap = static_cast<std::size_t>(std::max(1, max_episodes));
  if (spans.size() > cap) {
    spans[cap - 1].end = spans.back().end;
    spans.resize(cap);
  }
  return spans;
}

// Token ranges that receive each episode's reward: an episode owns everything
// from the end of the previous range through its own closing delimiter, and
// the last episode also owns the answer tail. A trajectory with no episodes is
// treated as a single episode.
inline std::vector<Span> episode_credit_ranges(const TokenSeq& tokens,
                                               const std::vector<Span>& spans,
                                               const Vocabulary& vocab) {
  std::vector<Span> ranges;
  if (tokens.empty()) return ranges;
  if (spans.empty()) {
    ranges.push_back({0, tokens.size()});
    return ranges;
  }
  std::size_t from = 0;
  for (std::size_t k = 0; k < spans.size(); ++k) {
    std::size_t to = spans[k].end;
    if (to < tokens.size() && vocab.is_close(tokens[to])) ++to;
    if (k + 1 == spans.size()) to = tokens.size();
    to = std::max(to, from);
    ranges.push_back({from, to});
    from = to;
  }
  return ranges;
}

// True when `tokens` does not end inside an open episode.
inline bool at_episode_boundary(const TokenSeq& tokens, const Vocabulary& vocab) {
  for (std::size_t i = tokens.size(); i-- > 0;) {
    if (vocab.is_close(tokens[i])) return true;
    if (vocab.is_open(tokens[i])) return false;
  }
  return true;
}

inline TokenSeq force_answer(const TokenSeq& prefix, const Vocabulary& vocab) {
  require(at_episode_boundary(prefix, vocab), "not at episode boundary");
  TokenSeq out = prefix;
  out.push_back(vocab.answer);
  return out;
}

// 1 iff the tokens after the final answer marker (up to <eos>) equal the
// oracle answer. A budget-truncated answer without <eos> does not count.
inline int outcome_reward(const Trajectory& traj, const Task& task, const Vocabulary& vocab) {
  const auto& z = traj.tokens;
  std::optional<std::size_t> marker;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (z[i] == vocab.answer) marker = i;
  if (!marker) return 0;
  std::size_t end = *marker + 1;
  while (end < z.size() && z[end] != vocab.eos) ++end;
  if (end == z.size() && traj.truncated) return 0;
  const TokenSeq got(z.begin() + static_cast<std::ptrdiff_t>(*marker + 1),
                     z.begin() + static_cast<std::ptrdiff_t>(end));
  return got == task.oracle_answer_tokens ? 1 : 0;
}

// The oracle trace as a finished trajectory.
inline Trajectory oracle_trajectory(const Task& task, const Vocabulary& vocab) {
  Trajectory t;
  t.task_id = task.id;
  t.tokens = task.oracle_trace_tokens;
  t.tokens.push_back(vocab.eos);
  t.episode_spans = segment_episodes(t.tokens, vocab);
  t.per_token_logprob.assign(t.tokens.size(), 0.0);
  t.token_count = t.tokens.size();
  return t;
}

// ---------------------------------------------------------------------------
// Line formats.

// "seed tier question" per line.
inline void write_task_line(std::ostream& os, const Task& task, const Vocabulary& vocab) {
  os << task.seed << ' ' << task.tier << ' ' << vocab.render(task.question_tokens) << '\n';
}

inline std::vector<Task> read_task_lines(std::istream& is, const Vocabulary& vocab) {
  std::vector<Task> tasks;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::uint64_t seed = 0;
    int tier = 0;
    std::string question;
    if (!(ls >> seed >> tier >> question))
      throw Error("malformed task line " + std::to_string(lineno));
    Task t = generate_task(seed, tier);
    if (vocab.render(t.question_tokens) != question)
      throw Error("task line " + std::to_string(lineno) + " does not match its seed");
    tasks.push_back(std::move(t));
  }
  return tasks;
}

inline nlohmann::json trajectory_to_json(const Trajectory& t) {
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& s : t.episode_spans) spans.push_back({s.start, s.end});
  return {{"task_id", t.task_id},     {"tokens", t.tokens},
          {"episode_spans", spans},   {"per_token_logprob", t.per_token_logprob},
          {"truncated", t.truncated}, {"token_count", t.token_count}};
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory t;
  t.task_id = j.at("task_id").get<std::string>();
  t.tokens = j.at("tokens").get<TokenSeq>();
  for (const auto& s : j.at("episode_spans"))
    t.episode_spans.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
  t.per_token_logprob = j.at("per_token_logprob").get<std::vector<double>>();
  t.truncated = j.at("truncated").get<bool>();
  t.token_count = j.at("token_count").get<std::size_t>();
  return t;
}

}  // namespace l2t

#endif  // L2T_TASK_ENV_HPP_
