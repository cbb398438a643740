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

#include <cmath>

#include <gtest/gtest.h>

#include "l2t/checks.hpp"
#include "l2t/oracle.hpp"

namespace l2t::oracle {
namespace {

GaussianModel isotropic(Vector mean, double var) {
  const auto n = mean.size();
  return {std::move(mean), var * Matrix::Identity(n, n)};
}

TEST(GaussianKl, SelfIsZero) {
  Rng rng(1);
  for (int n = 0; n < 20; ++n) {
    const Matrix a = rng.normal_vector(9).reshaped(3, 3);
    const GaussianModel p{rng.normal_vector(3), a * a.transpose() + Matrix::Identity(3, 3)};
    EXPECT_NEAR(gaussian_kl(p, p), 0.0, 1e-12);
  }
}

TEST(GaussianKl, UnitShift) {
  EXPECT_NEAR(gaussian_kl(isotropic(Vector::Zero(1), 1.0), isotropic(Vector::Ones(1), 1.0)), 0.5, 1e-15);
}

TEST(GaussianKl, MatchesMonteCarlo) {
  Rng rng(2);
  const int m = 5;
  const Matrix a = rng.normal_vector(m * m, 0.4).reshaped(m, m);
  const Matrix b = rng.normal_vector(m * m, 0.4).reshaped(m, m);
  const GaussianModel p{rng.normal_vector(m, 0.5), a * a.transpose() + Matrix::Identity(m, m)};
  const GaussianModel q{rng.normal_vector(m, 0.5), b * b.transpose() + Matrix::Identity(m, m)};
  auto logpdf = [&](const GaussianModel& g, const Vector& x) {
    const auto llt = checked_cholesky(g.cov);
    const Vector d = x - g.mean;
    return -0.5 * (d.dot(llt.solve(d)) + log_det(llt) + m * std::log(2 * M_PI));
  };
  const Eigen::LLT<Matrix> lp(p.cov);
  const Matrix L = lp.matrixL();
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector x = p.mean + L * rng.normal_vector(m);
    const double v = logpdf(p, x) - logpdf(q, x);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_NEAR(gaussian_kl(p, q), mean, 5 * se);
}

TEST(GaussianKl, RejectsIndefiniteCovariance) {
  GaussianModel p = isotropic(Vector::Zero(2), 1.0);
  p.cov(1, 1) = -1.0;
  EXPECT_THROW(gaussian_kl(p, p), Error);
}

TEST(MiIncrement, ZeroStepAndSubstitution) {
  const auto prior = isotropic(Vector::Zero(2), 0.04);
  const Vector a = Vector::Zero(2);
  EXPECT_EQ(exact_mi_increment(a, a, prior), 0.0);
  Vector b(2);
  b << 1.0, 0.0;
  EXPECT_NEAR(exact_mi_increment(a, b, isotropic(Vector::Zero(2), 0.04)), 25.0, 1e-12);
}

TEST(MiIncrement, TwiceKlForSharedCovariance) {
  Rng rng(3);
  for (int n = 0; n < 30; ++n) {
    const Matrix a = rng.normal_vector(16).reshaped(4, 4);
    const Matrix cov = a * a.transpose() + 0.5 * Matrix::Identity(4, 4);
    const Vector t0 = rng.normal_vector(4), t1 = t0 + rng.normal_vector(4, 0.1);
    const double kl = gaussian_kl({t1, cov}, {t0, cov});
    EXPECT_NEAR(exact_mi_increment(t0, t1, {Vector::Zero(4), cov}), 2.0 * kl, 1e-10 * (1 + kl));
  }
}

PolicyParams binary_policy(double scale, std::uint64_t seed) {
  ArchMeta m;
  m.vocab = toy_vocabulary(2, false);  // V = 4
  m.ngram_order = 1;
  m.context_window = 4;
  Rng rng(seed);
  return scale == 0.0 ? zero_params(m) : random_params(m, rng, scale);
}

TEST(Fisher, UniformPolicyClosedForm) {
  ArchMeta m;
  m.vocab = toy_vocabulary(1, false);  // V = 3
  m.ngram_order = 1;
  m.context_window = 2;
  const PolicyParams p = zero_params(m);
  const Matrix f = exact_fisher(p, make_state({}, m));
  // Only the bias feature is active: F = diag(1/V) - 1/V^2 on those entries.
  EXPECT_NEAR(f.trace(), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(f.maxCoeff(), 2.0 / 9.0, 1e-15);
  EXPECT_NEAR(f.minCoeff(), -1.0 / 9.0, 1e-15);
}

TEST(Fisher, PsdAndZeroExpectedScore) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const PolicyParams p = binary_policy(1.0, s);
    Rng rng(s + 100);
    const auto st = make_state(checks::detail::random_context(rng, 4, 3), p.meta);
    const Matrix f = exact_fisher(p, st);
    Eigen::SelfAdjointEigenSolver<Matrix> es(f);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
    EXPECT_LE(expected_score(p, st).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Fisher, EmpiricalConverges) {
  const PolicyParams p = binary_policy(1.0, 7);
  const auto st = make_state({0, 1}, p.meta);
  const Matrix f = exact_fisher(p, st);
  Rng rng(8);
  double prev = std::numeric_limits<double>::infinity();
  for (int n : {100, 10000, 1000000}) {
    Matrix e = Matrix::Zero(f.rows(), f.cols());
    const Vector lp = next_token_logprobs(p, st);
    for (int i = 0; i < n; ++i) {
      const Vector g = grad_logprob(p, st, rng.categorical_from_logprobs(lp));
      e.noalias() += g * g.transpose();
    }
    e /= n;
    const double err = (e - f).norm();
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LT(prev, 0.01);
}

TEST(Fisher, CovarianceVerification) {
  Matrix f(2, 2);
  f << 2.0, 0.5, 0.5, 1.0;
  const Matrix L = Eigen::LLT<Matrix>(f.inverse()).matrixL();
  Rng rng(9);
  std::vector<Vector> draws;
  for (int i = 0; i < 50000; ++i) draws.push_back(L * rng.normal_vector(2));
  EXPECT_TRUE(verify_fisher_covariance(draws, f).bound_satisfied);
  // An informative prior shrinks the posterior well below F^-1.
  std::vector<Vector> shrunk;
  for (const auto& d : draws) shrunk.push_back(0.5 * d);
  EXPECT_FALSE(verify_fisher_covariance(shrunk, f).bound_satisfied);
}

TEST(ErrorBound, Formula) {
  const double stat = error_bound_value(8, 64, 16, 0.05, 0.0, 3.0);
  EXPECT_NEAR(error_bound_value(8, 64, 16, 0.05, 1e-6, 3.0), stat, 1e-15);
  EXPECT_NEAR(error_bound_value(8, 32, 16, 0.05, 0.0, 3.0), std::sqrt(2.0) * stat, 1e-12);
  EXPECT_GT(error_bound_value(8, 64, 16, 0.01, 0.0, 3.0), stat);
}

TEST(ErrorBound, Coverage) {
  ErrorBoundConfig c;
  c.trials = 200;
  const auto rep = verify_error_bound(c);
  EXPECT_GE(rep.coverage, 0.95);
  EXPECT_TRUE(rep.verdict.bound_satisfied);
  EXPECT_EQ(rep.trial_bounds.size(), 200u);
  c.r = 9;
  EXPECT_THROW(verify_error_bound(c), Error);
}

TEST(Bench, FullRankRatioNearOne) {
  const auto row = bench_quadratic_form(256, 256, 15, 1);
  EXPECT_GT(row.ratio, 0.3);
  EXPECT_LT(row.ratio, 3.0);
}

TEST(Bench, RatioGrowsAsRankShrinks) {
  const auto rows = bench_complexity({1024}, {512, 64}, 15, 2);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_GT(rows[1].ratio, rows[0].ratio);
  EXPECT_TRUE(bench_complexity({16}, {32}, 3).empty());
}

TEST(ConditionalMi, IndependenceIsZero) {
  JointTable j(2, 3, 4);
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 3; ++y)
      for (int t = 0; t < 4; ++t) j(x, y, t) = (1.0 + x) * (1.0 + y) * (1.0 + 0.5 * t);
  j.normalize();
  EXPECT_NEAR(exact_conditional_mi(j), 0.0, 1e-14);
}

TEST(ConditionalMi, DeterministicParameterRecoversLabelEntropy) {
  JointTable j(1, 2, 2);
  j(0, 0, 0) = 0.5;
  j(0, 1, 1) = 0.5;
  EXPECT_NEAR(exact_conditional_mi(j), std::log(2.0), 1e-14);
  EXPECT_NEAR(expected_correctness(j), 1.0, 1e-14);
}

TEST(ConditionalMi, DualPathAgreement) {
  Rng rng(11);
  for (int n = 0; n < 100; ++n) {
    JointTable j(3, 3, 5);
    for (int x = 0; x < 3; ++x)
      for (int y = 0; y < 3; ++y)
        for (int t = 0; t < 5; ++t) j(x, y, t) = rng.uniform() * rng.uniform();
    j.normalize();
    EXPECT_NEAR(exact_conditional_mi(j), conditional_mi_from_entropies(j), 1e-12);
    EXPECT_GE(exact_conditional_mi(j), -1e-15);
  }
  EXPECT_THROW(JointTable(17, 1, 1), Error);
}

TEST(Direction, AgreementRate) {
  const auto r = checks::direction_check(300, 4);
  EXPECT_TRUE(r.passed) << r.value;
}

TEST(Verdict, SelfConsistency) {
  const auto v = make_verdict("x", 2.0, 2.5, 1.0);
  EXPECT_DOUBLE_EQ(v.abs_error, 0.5);
  EXPECT_DOUBLE_EQ(v.rel_error, 0.25);
  EXPECT_TRUE(v.bound_satisfied);
  EXPECT_FALSE(make_verdict("x", 2.0, 3.5, 1.0).bound_satisfied);
  EXPECT_TRUE(make_verdict("x", 0.0, 1e-3).bound_satisfied);
  const auto j = verdict_record(make_verdict("x", 1.0, 1.0));
  EXPECT_TRUE(j["bound"].is_null());
  EXPECT_EQ(j["quantity"], "x");
}

TEST(Suites, AllPass) {
  for (const auto& name : checks::suite_names()) {
    if (name == "speedup" || name == "direction" || name == "error-bound") continue;  // covered above
    for (const auto& r : checks::run_suite(name, 0)) EXPECT_TRUE(r.passed) << name << ": " << r.name;
  }
  EXPECT_THROW(checks::run_suite("nope", 0), Error);
}

}  // namespace
}  // namespace l2t::oracle
