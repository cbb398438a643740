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

// Verification routines shared by `oracle-verify` and the acceptance binary.
// Each returns a named pass/fail result with the measured value and the bar
// it was held to.

#ifndef L2T_CHECKS_HPP_
#define L2T_CHECKS_HPP_

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "l2t/checkpoint.hpp"
#include "l2t/eval.hpp"
#include "l2t/grpo.hpp"
#include "l2t/oracle.hpp"
#include "l2t/reward.hpp"

namespace l2t::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

inline nlohmann::json check_record(const CheckResult& r) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  return {{"check", r.name}, {"pass", r.passed}, {"value", num(r.value)},
          {"threshold", num(r.threshold)}, {"detail", r.detail}};
}

inline CheckResult from_verdict(const oracle::OracleVerdict& v, double rel_tol) {
  CheckResult r;
  r.name = v.quantity_name;
  r.value = v.rel_error;
  r.threshold = rel_tol;
  r.passed = v.consistent() && v.bound_satisfied && v.rel_error <= rel_tol;
  std::ostringstream os;
  os << "exact=" << v.exact_value << " approx=" << v.approx_value;
  if (v.bound_value) os << " bound=" << *v.bound_value;
  r.detail = os.str();
  return r;
}

// Settings under which the desk-scale training runs are carried out.
inline TrainConfig desk_train_config(std::uint64_t seed = 1) {
  TrainConfig c;
  c.learning_rate = 0.05;
  c.weight_decay = 0.0;
  c.reward.virtual_step = 3.0;
  c.token_adv_clip = 3.0;
  c.batch_size = 4;
  c.group_size = 8;
  c.token_budget = 256;
  c.seed = seed;
  return c;
}

inline constexpr int kDeskContextWindow = 64;

inline PolicyParams desk_policy() { return reasoner_params({}, kDeskContextWindow); }

namespace detail {

inline TokenSeq random_context(Rng& rng, int vocab, int max_len) {
  const auto n = rng.uniform_int(0, max_len);
  TokenSeq ctx;
  for (std::int64_t i = 0; i < n; ++i) ctx.push_back(static_cast<TokenId>(rng.uniform_int(0, vocab - 1)));
  return ctx;
}

inline ArchMeta gradient_meta(Arch arch) {
  ArchMeta m;
  m.arch = arch;
  m.vocab = toy_vocabulary(4, true);
  m.context_window = 6;
  m.hidden = 4;
  m.layers = arch == Arch::kSmallAttention ? 2 : 1;
  m.features = FeatureSet::kNGram;
  m.ngram_order = 2;
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Analytic score against central differences of log pi.

inline CheckResult gradient_check(Arch arch, int instances = 100, std::uint64_t seed = 0, double tol = 1e-4) {
  const ArchMeta meta = detail::gradient_meta(arch);
  Rng rng(derive_seed(seed, {0x96adULL, static_cast<std::uint64_t>(arch)}));
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (int n = 0; n < instances; ++n) {
    PolicyParams p = random_params(meta, rng, 0.5);
    const PolicyState s = make_state(detail::random_context(rng, meta.vocab.size, 9), meta);
    const auto tok = static_cast<TokenId>(rng.uniform_int(0, meta.vocab.size - 1));
    const Vector g = grad_logprob(p, s, tok);
    Vector fd(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double x = p.values[i];
      p.values[i] = x + h;
      const double up = next_token_logprobs(p, s)[tok];
      p.values[i] = x - h;
      const double down = next_token_logprobs(p, s)[tok];
      p.values[i] = x;
      fd[i] = (up - down) / (2.0 * h);
    }
    const double scale = std::max({g.norm(), fd.norm(), 1e-12});
    worst = std::max(worst, (g - fd).norm() / scale);
  }
  CheckResult r;
  r.name = arch == Arch::kSmallAttention ? "gradient_small_attention" : "gradient_linear_softmax";
  r.value = worst;
  r.threshold = tol;
  r.passed = worst < tol;
  r.detail = std::to_string(instances) + " instances, d=" + std::to_string(parameter_count(meta));
  return r;
}

// ---------------------------------------------------------------------------
// Penalty with a full-rank proxy against the explicit damped Fisher form.

inline CheckResult penalty_full_rank_check(int instances = 50, std::uint64_t seed = 0, double tol = 1e-10) {
  ArchMeta meta;
  meta.vocab = toy_vocabulary(2, false);  // V = 4
  meta.features = FeatureSet::kNGram;
  meta.ngram_order = 1;  // d = 4 * (1 + 4) = 20
  meta.context_window = 8;
  const std::size_t d = parameter_count(meta);
  Rng rng(derive_seed(seed, {0x7e4aULL}));
  const ProxyBasis full = identity_basis(d, static_cast<int>(d));
  const double damping = 1e-5;
  double worst = 0.0;
  for (int n = 0; n < instances; ++n) {
    const PolicyParams p = random_params(meta, rng, 1.0);
    TokenSeq ctx = detail::random_context(rng, meta.vocab.size, 4);
    std::vector<Vector> grads;
    const auto len = rng.uniform_int(1, 6);
    for (std::int64_t t = 0; t < len; ++t) {
      const auto z = rng.categorical_from_logprobs(next_token_logprobs(p, make_state(ctx, meta)));
      grads.push_back(grad_logprob(p, make_state(ctx, meta), z));
      ctx.push_back(z);
    }
    const Vector delta = rng.normal_vector(static_cast<Eigen::Index>(d), 0.1);
    const double approx = compression_penalty(full, delta, grads, damping);
    const double exact = oracle::damped_quadratic_form(grads, delta, damping);
    worst = std::max(worst, std::abs(approx - exact) / std::abs(exact));
  }
  CheckResult r;
  r.name = "penalty_full_rank";
  r.value = worst;
  r.threshold = tol;
  r.passed = worst < tol;
  r.detail = std::to_string(instances) + " instances, V=4, d=" + std::to_string(d);
  return r;
}

// ---------------------------------------------------------------------------
// Oracle-backed statistical checks.

inline CheckResult error_bound_check(const oracle::ErrorBoundConfig& cfg = {}, double min_coverage = 0.95) {
  const auto rep = oracle::verify_error_bound(cfg);
  double max_err = 0.0, min_bound = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rep.trial_max_errors.size(); ++i) {
    max_err = std::max(max_err, rep.trial_max_errors[i]);
    min_bound = std::min(min_bound, rep.trial_bounds[i]);
  }
  CheckResult r;
  r.name = "error_bound_coverage";
  r.value = rep.coverage;
  r.threshold = min_coverage;
  r.passed = rep.coverage >= min_coverage && rep.verdict.consistent();
  std::ostringstream os;
  os << cfg.trials << " trials, largest error " << max_err << ", smallest bound " << min_bound;
  r.detail = os.str();
  return r;
}

inline CheckResult speedup_check(int d = 4096, int rank = 410, int reps = 30, std::uint64_t seed = 0,
                                 double floor = 10.0) {
  const auto row = oracle::bench_quadratic_form(d, rank, reps, seed);
  CheckResult r;
  r.name = "quadratic_form_speedup";
  r.value = row.ratio;
  r.threshold = floor;
  r.passed = row.ratio >= floor;
  std::ostringstream os;
  os << "d=" << d << " r=" << rank << " full_ns=" << row.full_ns << " proxy_ns=" << row.proxy_ns;
  r.detail = os.str();
  return r;
}

inline CheckResult direction_check(int trials = 1000, std::uint64_t seed = 0, double min_rate = 0.95) {
  Rng rng(derive_seed(seed, {0xd14eULL}));
  int agree = 0;
  for (int i = 0; i < trials; ++i) agree += oracle::direction_trial(rng).agree ? 1 : 0;
  CheckResult r;
  r.name = "fitting_gain_direction";
  r.value = static_cast<double>(agree) / trials;
  r.threshold = min_rate;
  r.passed = r.value >= min_rate;
  r.detail = std::to_string(agree) + "/" + std::to_string(trials) + " sign agreements";
  return r;
}

// ---------------------------------------------------------------------------
// Closed-form Gaussian and Fisher identities.

inline std::vector<CheckResult> gaussian_checks(std::uint64_t seed = 0) {
  std::vector<CheckResult> out;
  {
    oracle::GaussianModel p{Vector::Constant(1, 1.0), Matrix::Identity(1, 1)};
    oracle::GaussianModel q{Vector::Zero(1), Matrix::Identity(1, 1)};
    out.push_back(from_verdict(oracle::make_verdict("gaussian_kl_unit_shift", 0.5, oracle::gaussian_kl(p, q)), 1e-12));
  }
  {
    Vector a(2), b(2);
    a << 0.0, 0.0;
    b << 3.0, 4.0;
    oracle::GaussianModel prior{Vector::Zero(2), Matrix::Identity(2, 2)};
    out.push_back(from_verdict(oracle::make_verdict("mi_increment_substitution", 25.0,
                                                    oracle::exact_mi_increment(a, b, prior)), 1e-12));
  }
  {
    // Shared covariance: the increment is twice the KL between the shifted
    // Gaussians.
    Rng rng(derive_seed(seed, {0x6a55ULL}));
    const int m = 5;
    Matrix l(m, m);
    for (Eigen::Index i = 0; i < l.size(); ++i) l.data()[i] = rng.normal();
    Matrix cov = l * l.transpose() + Matrix::Identity(m, m);
    const Vector a = rng.normal_vector(m), b = rng.normal_vector(m);
    oracle::GaussianModel prior{Vector::Zero(m), cov};
    const double kl = oracle::gaussian_kl({a, cov}, {b, cov});
    out.push_back(from_verdict(oracle::make_verdict("mi_increment_vs_kl", 2.0 * kl,
                                                    oracle::exact_mi_increment(a, b, prior)), 1e-9));
  }
  return out;
}

inline std::vector<CheckResult> fisher_checks(std::uint64_t seed = 0) {
  std::vector<CheckResult> out;
  Rng rng(derive_seed(seed, {0xf15eULL}));
  ArchMeta meta;
  meta.vocab = toy_vocabulary(2, false);
  meta.features = FeatureSet::kNGram;
  meta.ngram_order = 1;
  meta.context_window = 8;

  double min_eig = 0.0, max_mean_score = 0.0;
  for (int n = 0; n < 100; ++n) {
    const PolicyParams p = random_params(meta, rng, 1.0);
    const PolicyState s = make_state(detail::random_context(rng, meta.vocab.size, 4), meta);
    const Matrix f = oracle::exact_fisher(p, s);
    Eigen::SelfAdjointEigenSolver<Matrix> es(f, Eigen::EigenvaluesOnly);
    min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
    max_mean_score = std::max(max_mean_score, oracle::expected_score(p, s).cwiseAbs().maxCoeff());
  }
  out.push_back({"fisher_psd", min_eig >= -1e-12, min_eig, -1e-12, "smallest eigenvalue over 100 instances"});
  out.push_back({"expected_score_zero", max_mean_score <= 1e-12, max_mean_score, 1e-12,
                 "largest |E[score]| entry over 100 instances"});

  // Laplace-regime posterior N(theta_hat, F^-1) in a 3-dimensional proxy.
  const PolicyParams p = random_params(meta, rng, 1.0);
  const PolicyState s = make_state({0, 1}, meta);
  Matrix q(static_cast<Eigen::Index>(p.dim()), 3);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(q);
  ProxyBasis basis;
  basis.basis = qr.householderQ() * Matrix::Identity(q.rows(), 3);
  basis.rank = 3;
  const Matrix f = oracle::exact_fisher(p, s, &basis);
  const Eigen::LLT<Matrix> llt(f);
  const Matrix inv_l = llt.matrixL().solve(Matrix::Identity(3, 3)).transpose();  // F^-1 = inv_l inv_l^T
  std::vector<Vector> samples;
  for (int i = 0; i < 100000; ++i) samples.push_back(inv_l * rng.normal_vector(3));
  const auto v = oracle::verify_fisher_covariance(samples, f);
  CheckResult r = from_verdict(v, 0.1);
  r.passed = v.bound_satisfied && v.consistent();
  out.push_back(r);
  return out;
}

inline std::vector<CheckResult> conditional_mi_checks(std::uint64_t seed = 0) {
  Rng rng(derive_seed(seed, {0xc0d1ULL}));
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    oracle::JointTable t(4, 4, 4);
    for (int x = 0; x < 4; ++x)
      for (int y = 0; y < 4; ++y)
        for (int th = 0; th < 4; ++th) t(x, y, th) = rng.uniform() + 1e-3;
    t.normalize();
    worst = std::max(worst, std::abs(oracle::exact_conditional_mi(t) - oracle::conditional_mi_from_entropies(t)));
  }
  return {{"conditional_mi_dual_path", worst <= 1e-12, worst, 1e-12, "100 random 4x4x4 tables"}};
}

// ---------------------------------------------------------------------------
// GRPO bookkeeping invariants on real rollouts of the desk policy.

inline std::vector<CheckResult> grpo_invariant_checks(std::uint64_t seed = 0) {
  TrainConfig cfg = desk_train_config(seed + 11);
  Trainer tr(cfg, desk_policy(), mixed_tier_sampler(cfg.seed));
  double conservation = 0.0, adv_mean = 0.0, adv_std = 0.0;
  int groups_with_spread = 0;
  std::vector<TokenSample> batch;
  for (int step = 0; step < 4; ++step) {
    const auto groups = tr.collect(static_cast<std::uint64_t>(step));
    for (const auto& g : groups) {
      std::vector<double> tm;
      for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
        const auto r = assign_token_rewards(g.rollouts[i], g.scores[i]);
        for (std::size_t k = 0; k < g.scores[i].credit.size(); ++k) {
          const Span sp = g.scores[i].credit[k];
          if (sp.size() == 0) continue;
          double s = 0.0;
          for (std::size_t t = sp.start; t < sp.end; ++t) s += r[t];
          const double R = g.scores[i].episodes[k].combined;
          conservation = std::max(conservation, std::abs(s - R) / std::max(1.0, std::abs(R)));
        }
        tm.push_back(r.empty() ? 0.0 : truncated_mean(r, cfg.trunc_fraction));
      }
      auto moments = [](const std::vector<double>& x) {
        double m = 0.0, v = 0.0;
        for (double e : x) m += e;
        m /= static_cast<double>(x.size());
        for (double e : x) v += (e - m) * (e - m);
        return std::pair{m, std::sqrt(v / static_cast<double>(x.size()))};
      };
      const auto [raw_mean, raw_sd] = moments(tm);
      if (raw_sd == 0.0) continue;
      const auto [m, sd] = moments(group_advantages(tm, cfg.adv_epsilon));
      ++groups_with_spread;
      adv_mean = std::max(adv_mean, std::abs(m));
      // Unit spread up to the epsilon guard: sd_raw / (sd_raw + eps).
      adv_std = std::max(adv_std, std::abs(sd - raw_sd / (raw_sd + cfg.adv_epsilon)));
    }
    const auto b = token_batch(groups, tr.advantages(groups));
    batch.insert(batch.end(), b.begin(), b.end());
  }
  std::vector<CheckResult> out;
  out.push_back({"token_reward_conservation", conservation <= 1e-12, conservation, 1e-12,
                 "largest relative gap between summed token rewards and the episode reward"});
  out.push_back({"group_advantage_zero_mean", groups_with_spread > 0 && adv_mean <= 1e-12, adv_mean, 1e-12,
                 std::to_string(groups_with_spread) + " groups with reward spread"});
  out.push_back({"group_advantage_unit_std", groups_with_spread > 0 && adv_std <= 1e-12, adv_std, 1e-12,
                 "largest |std - sd/(sd + eps)| over groups with reward spread"});

  const PolicyParams& p = tr.params();
  const SurrogateResult same = surrogate(p, batch, cfg.clip_epsilon, cfg.kl_coeff);
  out.push_back({"identity_clip_fraction_zero", same.clip_fraction == 0.0 && same.kl == 0.0, same.clip_fraction,
                 0.0, "pi_theta = pi_old over " + std::to_string(batch.size()) + " tokens"});

  Rng rng(derive_seed(seed, {0x1c1ULL}));
  double min_kl = std::numeric_limits<double>::infinity();
  for (int n = 0; n < 20; ++n) {
    PolicyParams q = p;
    q.values += rng.normal_vector(q.values.size(), 0.05 * (n + 1));
    min_kl = std::min(min_kl, surrogate(q, batch, cfg.clip_epsilon, cfg.kl_coeff).kl);
  }
  for (double rho = 1e-3; rho < 1e3; rho *= 1.37) min_kl = std::min(min_kl, rho - std::log(rho) - 1.0);
  out.push_back({"kl_estimate_nonnegative", min_kl >= 0.0, min_kl, 0.0, "perturbed policies and a ratio sweep"});
  return out;
}

// The fast suite run by `oracle-verify --suite all`.
inline std::vector<std::string> suite_names() {
  return {"gradient", "penalty", "gaussian", "fisher", "conditional-mi", "error-bound", "direction",
          "speedup", "grpo"};
}

inline std::vector<CheckResult> run_suite(const std::string& name, std::uint64_t seed) {
  if (name == "gradient")
    return {gradient_check(Arch::kLinearSoftmax, 100, seed), gradient_check(Arch::kSmallAttention, 100, seed)};
  if (name == "penalty") return {penalty_full_rank_check(50, seed)};
  if (name == "gaussian") return gaussian_checks(seed);
  if (name == "fisher") return fisher_checks(seed);
  if (name == "conditional-mi") return conditional_mi_checks(seed);
  if (name == "error-bound") {
    oracle::ErrorBoundConfig c;
    c.seed = seed;
    return {error_bound_check(c)};
  }
  if (name == "direction") return {direction_check(1000, seed)};
  if (name == "speedup") return {speedup_check(4096, 410, 30, seed)};
  if (name == "grpo") return grpo_invariant_checks(seed);
  throw Error("unknown suite '" + name + "'");
}

// ---------------------------------------------------------------------------
// Training-based studies.

struct PairedRun {
  std::uint64_t seed = 0;
  AblationResult l2t;
  AblationResult outcome;
  AblationResult no_compression;
};

inline std::vector<PairedRun> paired_runs(const std::vector<std::uint64_t>& seeds, int steps,
                                          const std::vector<Task>& eval_tasks, bool with_no_compression) {
  std::vector<PairedRun> out;
  PassOptions po;
  po.budget = desk_train_config().token_budget;
  for (std::uint64_t s : seeds) {
    PairedRun pr;
    pr.seed = s;
    const TrainConfig base = desk_train_config(s);
    pr.l2t = run_ablation({AblationVariant::kFullL2T}, base, desk_policy(), steps, eval_tasks, po);
    pr.outcome = run_ablation({AblationVariant::kOutcomeOnly}, base, desk_policy(), steps, eval_tasks, po);
    if (with_no_compression)
      pr.no_compression = run_ablation({AblationVariant::kNoCompression}, base, desk_policy(), steps, eval_tasks, po);
    out.push_back(std::move(pr));
  }
  return out;
}

// Serialised metrics and checkpoint of a short run, for byte comparison.
struct RunBytes {
  std::string metrics;
  std::string checkpoint;
};

inline RunBytes run_bytes(const TrainConfig& cfg, int steps) {
  Trainer tr(cfg, desk_policy(), mixed_tier_sampler(cfg.seed, cfg.min_tier, cfg.max_tier));
  RunBytes b;
  for (int s = 0; s < steps; ++s) b.metrics += metrics_record(tr.step()).dump() + "\n";
  std::ostringstream os;
  write_checkpoint(os, {tr.params(), tr.basis(), tr.steps_done()});
  b.checkpoint = os.str();
  return b;
}

inline bool non_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] < v[i - 1]) return false;
  return true;
}

}  // namespace l2t::checks

#endif  // L2T_CHECKS_HPP_
