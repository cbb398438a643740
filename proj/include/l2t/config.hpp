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

// Run configuration: `key = value` lines grouped in [sections], resolved
// against defaults, validated, serialised canonically and hashed.

#ifndef L2T_CONFIG_HPP_
#define L2T_CONFIG_HPP_

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "l2t/common.hpp"
#include "l2t/grpo.hpp"
#include "l2t/policy.hpp"
#include "l2t/rng.hpp"

namespace l2t {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "L2T_OUTPUT_ROOT";

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class PolicyInit { kReasoner, kRandom, kZero };

struct PolicySpec {
  Arch arch = Arch::kLinearSoftmax;
  FeatureSet features = FeatureSet::kReasoner;
  int context_window = 256;
  int hidden = 16;
  int layers = 1;
  int ngram_order = 2;
  PolicyInit init = PolicyInit::kReasoner;
  double init_scale = 0.1;
};

struct EvalSpec {
  int tasks = 200;
  std::uint64_t task_seed = 12345;
  int k_max = kDefaultMaxEpisodes;
  int m_votes = 4;
  std::vector<int> budgets = {16, 32, 64, 128, 256, 512};
};

struct RunConfig {
  TrainConfig train;
  PolicySpec policy;
  EvalSpec eval;
  int steps = 2000;
};

inline ArchMeta policy_meta(const PolicySpec& s) {
  ArchMeta m;
  m.arch = s.arch;
  m.vocab = arithmetic_vocabulary();
  m.context_window = s.context_window;
  m.hidden = s.hidden;
  m.layers = s.layers;
  m.features = s.features;
  m.ngram_order = s.ngram_order;
  return m;
}

inline PolicyParams initial_params(const PolicySpec& s, std::uint64_t seed) {
  const ArchMeta m = policy_meta(s);
  switch (s.init) {
    case PolicyInit::kReasoner: {
      require(s.arch == Arch::kLinearSoftmax && s.features == FeatureSet::kReasoner,
              "reasoner init needs arch = linear_softmax and features = reasoner");
      return reasoner_params({}, s.context_window);
    }
    case PolicyInit::kRandom: {
      Rng rng(derive_seed(seed, {0x1a17ULL}));
      return random_params(m, rng, s.init_scale);
    }
    case PolicyInit::kZero: return zero_params(m);
  }
  return zero_params(m);
}

namespace detail {

template <typename E>
struct EnumTable {
  std::vector<std::pair<std::string, E>> entries;

  E parse(const std::string& key, const std::string& text) const {
    for (const auto& [name, v] : entries)
      if (name == text) return v;
    std::string allowed;
    for (const auto& [name, v] : entries) allowed += (allowed.empty() ? "" : ", ") + name;
    throw ConfigError(key + ": unknown value '" + text + "' (expected one of " + allowed + ")");
  }
  std::string name(E v) const {
    for (const auto& [n, e] : entries)
      if (e == v) return n;
    return "?";
  }
};

inline const EnumTable<RewardMode>& reward_modes() {
  static const EnumTable<RewardMode> t{{{"full", RewardMode::kFull},
                                         {"outcome_only", RewardMode::kOutcomeOnly},
                                         {"overlap_stub", RewardMode::kOverlapStub},
                                         {"no_compression", RewardMode::kNoCompression}}};
  return t;
}
inline const EnumTable<ProxyMode>& proxy_modes() {
  static const EnumTable<ProxyMode> t{{{"svd", ProxyMode::kSvd}, {"random", ProxyMode::kRandomCoordinates}}};
  return t;
}
inline const EnumTable<Arch>& archs() {
  static const EnumTable<Arch> t{{{"linear_softmax", Arch::kLinearSoftmax}, {"small_attention", Arch::kSmallAttention}}};
  return t;
}
inline const EnumTable<FeatureSet>& feature_sets() {
  static const EnumTable<FeatureSet> t{{{"reasoner", FeatureSet::kReasoner}, {"ngram", FeatureSet::kNGram}}};
  return t;
}
inline const EnumTable<PolicyInit>& inits() {
  static const EnumTable<PolicyInit> t{
      {{"reasoner", PolicyInit::kReasoner}, {"random", PolicyInit::kRandom}, {"zero", PolicyInit::kZero}}};
  return t;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T v{};
  is >> v;
  std::string rest;
  if (!is || (is >> rest)) throw ConfigError(key + ": cannot parse '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError(key + ": empty list item");
    out.push_back(parse_number<int>(key, item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

// One binding per config key: how to read it into a RunConfig and how to
// print it back.
struct Binding {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define L2T_NUM(sec, key, T, field)                                                          \
  Binding {                                                                                   \
    sec, key, [](RunConfig& c, const std::string& v) { c.field = parse_number<T>(std::string(sec) + "." + key, v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }                             \
  }
#define L2T_REAL(sec, key, field)                                                               \
  Binding {                                                                                      \
    sec, key, [](RunConfig& c, const std::string& v) { c.field = parse_number<double>(std::string(sec) + "." + key, v); }, \
        [](const RunConfig& c) { return format_double(c.field); }                                 \
  }
#define L2T_ENUM(sec, key, table, field)                                                          \
  Binding {                                                                                        \
    sec, key, [](RunConfig& c, const std::string& v) { c.field = table().parse(std::string(sec) + "." + key, v); }, \
        [](const RunConfig& c) { return table().name(c.field); }                                    \
  }

inline const std::vector<Binding>& bindings() {
  static const std::vector<Binding> b = {
      L2T_REAL("reward", "alpha", train.reward.alpha),
      L2T_REAL("reward", "beta", train.reward.beta),
      L2T_REAL("reward", "damping", train.reward.damping),
      L2T_REAL("reward", "virtual_step", train.reward.virtual_step),
      L2T_ENUM("reward", "mode", reward_modes, train.reward_mode),

      L2T_REAL("train", "learning_rate", train.learning_rate),
      L2T_REAL("train", "weight_decay", train.weight_decay),
      L2T_NUM("train", "batch_size", int, train.batch_size),
      L2T_REAL("train", "clip_epsilon", train.clip_epsilon),
      L2T_REAL("train", "kl_coeff", train.kl_coeff),
      L2T_REAL("train", "trunc_fraction", train.trunc_fraction),
      L2T_NUM("train", "group_size", int, train.group_size),
      L2T_NUM("train", "token_budget", int, train.token_budget),
      L2T_NUM("train", "max_episodes", int, train.max_episodes),
      L2T_REAL("train", "adv_epsilon", train.adv_epsilon),
      L2T_REAL("train", "token_adv_clip", train.token_adv_clip),
      L2T_NUM("train", "update_epochs", int, train.update_epochs),
      L2T_NUM("train", "seed", std::uint64_t, train.seed),
      L2T_NUM("train", "steps", int, steps),
      L2T_NUM("train", "min_tier", int, train.min_tier),
      L2T_NUM("train", "max_tier", int, train.max_tier),
      L2T_NUM("train", "threads", int, train.threads),
      Binding{"train", "wall_clock",
              [](RunConfig& c, const std::string& v) { c.train.wall_clock = parse_bool("train.wall_clock", v); },
              [](const RunConfig& c) { return std::string(c.train.wall_clock ? "true" : "false"); }},

      L2T_REAL("proxy", "rank_fraction", train.proxy_rank_fraction),
      L2T_NUM("proxy", "history_window", int, train.history_window),
      L2T_NUM("proxy", "refresh_every", int, train.refresh_every),
      L2T_ENUM("proxy", "mode", proxy_modes, train.proxy_mode),
      L2T_REAL("proxy", "random_fraction", train.random_fraction),

      L2T_ENUM("policy", "arch", archs, policy.arch),
      L2T_ENUM("policy", "features", feature_sets, policy.features),
      L2T_NUM("policy", "context_window", int, policy.context_window),
      L2T_NUM("policy", "hidden", int, policy.hidden),
      L2T_NUM("policy", "layers", int, policy.layers),
      L2T_NUM("policy", "ngram_order", int, policy.ngram_order),
      L2T_ENUM("policy", "init", inits, policy.init),
      L2T_REAL("policy", "init_scale", policy.init_scale),

      L2T_NUM("eval", "tasks", int, eval.tasks),
      L2T_NUM("eval", "task_seed", std::uint64_t, eval.task_seed),
      L2T_NUM("eval", "k_max", int, eval.k_max),
      L2T_NUM("eval", "m_votes", int, eval.m_votes),
      Binding{"eval", "budgets",
              [](RunConfig& c, const std::string& v) { c.eval.budgets = parse_int_list("eval.budgets", v); },
              [](const RunConfig& c) {
                std::string s;
                for (int b : c.eval.budgets) s += (s.empty() ? "" : ", ") + std::to_string(b);
                return s;
              }},
  };
  return b;
}

#undef L2T_NUM
#undef L2T_REAL
#undef L2T_ENUM

}  // namespace detail

inline void validate(const RunConfig& c) {
  try {
    c.train.validate();
    require(c.steps >= 0, "steps must be >= 0");
    require(c.policy.context_window >= 1, "context_window must be >= 1");
    require(c.policy.hidden >= 1 && c.policy.hidden <= 64, "hidden must be in [1, 64]");
    require(c.policy.layers >= 1 && c.policy.layers <= 2, "layers must be in [1, 2]");
    require(c.policy.ngram_order >= 1, "ngram_order must be >= 1");
    require(c.policy.init_scale >= 0.0, "init_scale must be >= 0");
    if (c.policy.init == PolicyInit::kReasoner)
      require(c.policy.arch == Arch::kLinearSoftmax && c.policy.features == FeatureSet::kReasoner,
              "init = reasoner needs arch = linear_softmax and features = reasoner");
    require(c.eval.tasks >= 1, "eval tasks must be >= 1");
    require(c.eval.k_max >= 1, "k_max must be >= 1");
    require(c.eval.m_votes >= 1, "m_votes must be >= 1");
    for (std::size_t i = 0; i < c.eval.budgets.size(); ++i) {
      require(c.eval.budgets[i] >= 1, "budgets must be positive");
      if (i > 0) require(c.eval.budgets[i] > c.eval.budgets[i - 1], "budgets must be ascending");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

inline RunConfig parse_config(std::istream& is) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  RunConfig c;
  const auto& b = detail::bindings();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError("key '" + section + "' must be inside a [section]");
    for (const auto& [key, value] : body) {
      const auto it = std::find_if(b.begin(), b.end(),
                                   [&](const detail::Binding& x) { return x.section == section && x.key == key; });
      if (it == b.end()) throw ConfigError("unknown config key '" + section + "." + key + "'");
      it->set(c, value.data());
    }
  }
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(is);
}

// Canonical text form: every key, fixed order, full precision.
inline std::string serialize_config(const RunConfig& c) {
  std::ostringstream os;
  std::string section;
  for (const auto& b : detail::bindings()) {
    if (b.section != section) {
      if (!section.empty()) os << '\n';
      section = b.section;
      os << '[' << section << "]\n";
    }
    os << b.key << " = " << b.get(c) << '\n';
  }
  return os.str();
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a64(serialize_config(c))); }

// ---------------------------------------------------------------------------
// Run manifest.

struct RunManifest {
  std::string run_id;
  std::string config_hash;
  std::string artifact_version = kArtifactVersion;
  std::string start_time;
  std::uint64_t seed = 0;
  std::string subcommand;
  std::vector<std::string> output_paths;
};

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline RunManifest make_manifest(const std::string& subcommand, const RunConfig& c,
                                 std::vector<std::string> outputs) {
  RunManifest m;
  m.config_hash = config_hash(c);
  m.seed = c.train.seed;
  m.subcommand = subcommand;
  m.run_id = subcommand + "-" + m.config_hash.substr(0, 8) + "-s" + std::to_string(c.train.seed);
  m.start_time = utc_timestamp();
  m.output_paths = std::move(outputs);
  return m;
}

inline nlohmann::json manifest_record(const RunManifest& m) {
  return {{"run_id", m.run_id},         {"config_hash", m.config_hash},
          {"artifact_version", m.artifact_version}, {"start_time", m.start_time},
          {"seed", m.seed},             {"subcommand", m.subcommand},
          {"output_paths", m.output_paths}};
}

}  // namespace l2t

#endif  // L2T_CONFIG_HPP_
