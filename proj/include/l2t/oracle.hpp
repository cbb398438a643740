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

// Brute-force reference computations: Gaussian KL, exact Fisher by
// enumeration, materialised quadratic forms, the empirical-Fisher error bound,
// quadratic-form timing and exact conditional mutual information.

#ifndef L2T_ORACLE_HPP_
#define L2T_ORACLE_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "l2t/common.hpp"
#include "l2t/lowrank.hpp"
#include "l2t/policy.hpp"
#include "l2t/rng.hpp"

namespace l2t::oracle {

struct OracleVerdict {
  std::string quantity_name;
  double exact_value = 0.0;
  double approx_value = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
  std::optional<double> bound_value;
  bool bound_satisfied = false;

  bool consistent() const { return !bound_value || bound_satisfied == (abs_error <= *bound_value); }
};

inline OracleVerdict make_verdict(std::string name, double exact, double approx,
                                  std::optional<double> bound = std::nullopt) {
  OracleVerdict v;
  v.quantity_name = std::move(name);
  v.exact_value = exact;
  v.approx_value = approx;
  v.abs_error = std::abs(exact - approx);
  v.rel_error = exact != 0.0 ? v.abs_error / std::abs(exact) : v.abs_error;
  v.bound_value = bound;
  v.bound_satisfied = bound ? v.abs_error <= *bound : true;
  return v;
}

inline nlohmann::json verdict_record(const OracleVerdict& v) {
  nlohmann::json j = {{"quantity", v.quantity_name}, {"exact", v.exact_value},
                      {"approx", v.approx_value},    {"abs_error", v.abs_error},
                      {"rel_error", v.rel_error},    {"bound_satisfied", v.bound_satisfied}};
  j["bound"] = v.bound_value ? nlohmann::json(*v.bound_value) : nlohmann::json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Gaussians.

struct GaussianModel {
  Vector mean;
  Matrix cov;
};

inline Eigen::LLT<Matrix> checked_cholesky(const Matrix& s) {
  require(s.rows() == s.cols(), "covariance must be square");
  require((s - s.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, s.cwiseAbs().maxCoeff()),
          "covariance must be symmetric");
  Eigen::LLT<Matrix> llt(s);
  require(llt.info() == Eigen::Success, "covariance is not positive definite");
  return llt;
}

inline double log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

inline double gaussian_kl(const GaussianModel& p, const GaussianModel& q) {
  require(p.mean.size() == q.mean.size() && p.cov.rows() == q.cov.rows() &&
              p.cov.rows() == p.mean.size(),
          "dimension mismatch");
  const auto lp = checked_cholesky(p.cov);
  const auto lq = checked_cholesky(q.cov);
  const auto m = static_cast<double>(p.mean.size());
  const Vector diff = p.mean - q.mean;
  const double maha = diff.dot(lq.solve(diff));
  const double trace = lq.solve(p.cov).trace();
  return std::max(0.0, 0.5 * (log_det(lq) - log_det(lp) - m + maha + trace));
}

inline double exact_mi_increment(const Vector& theta_prev, const Vector& theta_curr,
                                 const GaussianModel& prior) {
  require(theta_prev.size() == prior.mean.size() && theta_curr.size() == prior.mean.size(),
          "dimension mismatch");
  const auto llt = checked_cholesky(prior.cov);
  const Vector d = theta_curr - theta_prev;
  return d.dot(llt.solve(d));
}

// ---------------------------------------------------------------------------
// Fisher information.

inline constexpr int kMaxEnumerableVocab = 16;
inline constexpr int kMaxFisherDim = 64;

// Sum_z pi(z|s) g(z) g(z)^T with g projected onto `basis` when given.
inline Matrix exact_fisher(const PolicyParams& params, const PolicyState& state,
                           const ProxyBasis* basis = nullptr) {
  const int V = params.meta.vocab.size;
  if (V > kMaxEnumerableVocab) throw Error("enumeration infeasible");
  validate(params);
  const auto m = basis ? basis->basis.cols() : static_cast<Eigen::Index>(params.dim());
  require(m <= kMaxFisherDim || !basis, "proxy dimension too large for exact Fisher");
  Matrix f = Matrix::Zero(m, m);
  for (TokenId z = 0; z < V; ++z) {
    const auto ev = detail::evaluate_unchecked(params, state, z);
    const Vector g = basis ? ev.score.project(basis->basis) : ev.score.dense(params.dim());
    f.noalias() += std::exp(ev.logprobs[z]) * g * g.transpose();
  }
  return f;
}

// Sum_z pi(z|s) g(z); zero up to rounding.
inline Vector expected_score(const PolicyParams& params, const PolicyState& state) {
  const int V = params.meta.vocab.size;
  if (V > kMaxEnumerableVocab) throw Error("enumeration infeasible");
  Vector s = Vector::Zero(static_cast<Eigen::Index>(params.dim()));
  for (TokenId z = 0; z < V; ++z) {
    const auto ev = detail::evaluate_unchecked(params, state, z);
    ev.score.add_to(s, std::exp(ev.logprobs[z]));
  }
  return s;
}

// delta^T (mean_j g_j g_j^T + lambda I) delta with the matrix formed
// explicitly, accumulated in extended precision.
inline double damped_quadratic_form(const std::vector<Vector>& grads, const Vector& delta,
                                    double damping) {
  require(!grads.empty(), "no gradients");
  const auto n = delta.size();
  using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  LMat f = LMat::Zero(n, n);
  for (const auto& g : grads) {
    require(g.size() == n, "dimension mismatch");
    const auto gl = g.cast<long double>();
    f.noalias() += gl * gl.transpose();
  }
  f /= static_cast<long double>(grads.size());
  f.diagonal().array() += static_cast<long double>(damping);
  const auto dl = delta.cast<long double>();
  return static_cast<double>(dl.dot(f * dl));
}

// Sample covariance of posterior draws against the inverse Fisher; the
// bound is 10% of the inverse Fisher's spectral norm.
inline OracleVerdict verify_fisher_covariance(const std::vector<Vector>& samples, const Matrix& fisher,
                                              double tolerance = 0.1) {
  require(samples.size() >= 2, "need at least two samples");
  const auto m = fisher.rows();
  Eigen::LLT<Matrix> llt(fisher);
  if (llt.info() != Eigen::Success) throw Error("singular Fisher");
  const Matrix inv = llt.solve(Matrix::Identity(m, m));
  Vector mean = Vector::Zero(m);
  for (const auto& s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  Matrix cov = Matrix::Zero(m, m);
  for (const auto& s : samples) cov.noalias() += (s - mean) * (s - mean).transpose();
  cov /= static_cast<double>(samples.size() - 1);
  auto spectral = [](const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  };
  const double ref = spectral(inv);
  OracleVerdict v;
  v.quantity_name = "fisher_inverse_covariance";
  v.exact_value = ref;
  v.approx_value = spectral(cov);
  v.abs_error = spectral(cov - inv);
  v.rel_error = v.abs_error / ref;
  v.bound_value = tolerance * ref;
  v.bound_satisfied = v.abs_error <= *v.bound_value;
  return v;
}

// ---------------------------------------------------------------------------
// Empirical-Fisher error bound.
//
// Each trial draws a categorical model over V outcomes with logits Phi theta
// (Phi rescaled so every score has norm <= 1 at theta0), forms the empirical
// Fisher from n_tau * k samples and compares, for k random steps h with
// |h| <= B, the exact increment 2 KL(pi_theta0 || pi_theta0+h) against
// h^T F_hat h.

struct ErrorBoundConfig {
  int d = 8;
  int r = 8;
  int n_tau = 64;
  int k = 16;
  double delta = 0.05;
  double B = 0.1;
  double M = 0.0;  // third-derivative bound; <= 0 derives it per instance
  int trials = 1000;
  int outcomes = 16;
  std::uint64_t seed = 0;
};

inline double error_bound_value(int d, int n_tau, int k, double delta, double B, double M) {
  const double stat = std::sqrt(8.0 * (std::log(4.0) + d * std::log(2.0) - std::log(delta)) /
                                (static_cast<double>(n_tau) * k));
  return M / 6.0 * B * B * B + stat;
}

struct ErrorBoundReport {
  OracleVerdict verdict;
  std::vector<double> trial_max_errors;
  std::vector<double> trial_bounds;
  double coverage = 0.0;
};

namespace detail {

inline Vector softmax(const Vector& logits) {
  Vector lp = logits;
  log_softmax_inplace(lp);
  return lp.array().exp().matrix();
}

inline double categorical_kl(const Vector& p, const Vector& q) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) s += p[i] * (std::log(p[i]) - std::log(q[i]));
  return std::max(0.0, s);
}

}  // namespace detail

inline ErrorBoundReport verify_error_bound(const ErrorBoundConfig& c) {
  require(c.d >= 1 && c.d <= 16, "d must be in [1, 16]");
  require(c.r >= 1 && c.r <= c.d, "r must be in [1, d]");
  require(c.n_tau >= 1 && c.k >= 1 && c.trials >= 1, "sample counts must be positive");
  require(c.delta > 0.0 && c.delta < 1.0, "delta must be in (0, 1)");
  require(c.B > 0.0, "B must be > 0");
  Rng rng(derive_seed(c.seed, {0xe4b0ULL}));
  ErrorBoundReport rep;
  int covered = 0;
  const int V = c.outcomes;
  for (int t = 0; t < c.trials; ++t) {
    Matrix phi(V, c.r);
    for (int i = 0; i < V; ++i)
      for (int j = 0; j < c.r; ++j) phi(i, j) = rng.normal();
    const Vector theta0 = rng.normal_vector(c.r, 1.0);
    Vector p0 = detail::softmax(phi * theta0);
    // Rescale so max_z |Phi^T (e_z - p0)| = 1.
    double gmax = 0.0;
    for (int z = 0; z < V; ++z) gmax = std::max(gmax, (phi.row(z).transpose() - phi.transpose() * p0).norm());
    phi /= gmax;
    const Vector th = theta0 * gmax;  // same logits as before the rescale
    p0 = detail::softmax(phi * th);

    double M = c.M;
    if (M <= 0.0) {
      // |d^3/dt^3 2 KL| <= 2 max|s - E s|^3 with s = phi_z . u, |u| = 1.
      double diam = 0.0;
      for (int a = 0; a < V; ++a)
        for (int b = a + 1; b < V; ++b) diam = std::max(diam, (phi.row(a) - phi.row(b)).norm());
      M = 2.0 * diam * diam * diam;
    }

    const int n = c.n_tau * c.k;
    Matrix fhat = Matrix::Zero(c.r, c.r);
    for (int s = 0; s < n; ++s) {
      const TokenId z = rng.categorical_from_logprobs(p0.array().log().matrix());
      const Vector g = phi.row(z).transpose() - phi.transpose() * p0;
      fhat.noalias() += g * g.transpose();
    }
    fhat /= static_cast<double>(n);

    double worst = 0.0;
    for (int k = 0; k < c.k; ++k) {
      Vector h = rng.normal_vector(c.r, 1.0);
      h *= c.B * rng.uniform() / h.norm();
      const Vector p1 = detail::softmax(phi * (th + h));
      const double exact = 2.0 * detail::categorical_kl(p0, p1);
      const double approx = h.dot(fhat * h);
      worst = std::max(worst, std::abs(exact - approx));
    }
    const double bound = error_bound_value(c.r, c.n_tau, c.k, c.delta, c.B, M);
    rep.trial_max_errors.push_back(worst);
    rep.trial_bounds.push_back(bound);
    if (worst <= bound) ++covered;
  }
  rep.coverage = static_cast<double>(covered) / c.trials;
  // Verdict in margin form: the (1 - delta) quantile of error - bound must be <= 0.
  std::vector<double> margins;
  for (std::size_t i = 0; i < rep.trial_max_errors.size(); ++i)
    margins.push_back(rep.trial_max_errors[i] - rep.trial_bounds[i]);
  std::sort(margins.begin(), margins.end());
  const auto q = static_cast<std::size_t>(std::ceil((1.0 - c.delta) * c.trials)) - 1;
  OracleVerdict& v = rep.verdict;
  v.quantity_name = "error_bound_coverage";
  v.exact_value = 1.0 - c.delta;
  v.approx_value = rep.coverage;
  v.abs_error = std::max(0.0, margins[std::min(q, margins.size() - 1)]);
  v.rel_error = v.abs_error;
  v.bound_value = 0.0;
  v.bound_satisfied = rep.coverage >= 1.0 - c.delta;
  return rep;
}

// ---------------------------------------------------------------------------
// Quadratic-form timing.

struct BenchRow {
  int d = 0;
  int r = 0;
  double full_ns = 0.0;
  double proxy_ns = 0.0;
  double ratio = 0.0;
};

namespace detail {

template <typename F>
double median_ns(int repetitions, F&& fn) {
  std::vector<double> t;
  volatile double sink = 0.0;
  for (int i = 0; i < repetitions; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    sink = sink + fn();
    t.push_back(std::chrono::duration<double, std::nano>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

}  // namespace detail

// Times Delta^T (G G^T / n + lambda I) Delta with the d x d matrix against the
// same form on the r x r projected matrix. Both matrices are built outside
// the timed region.
inline BenchRow bench_quadratic_form(int d, int r, int repetitions, std::uint64_t seed,
                                     int samples = 8, double damping = 1e-5) {
  require(r >= 1 && r <= d, "rank must be in [1, d]");
  Rng rng(derive_seed(seed, {0xbe7cULL, static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(r)}));
  Matrix g(d, samples);
  for (int j = 0; j < samples; ++j) g.col(j) = rng.normal_vector(d, 1.0);
  const Vector delta = rng.normal_vector(d, 1e-3);
  Matrix full = g * g.transpose() / samples;
  full.diagonal().array() += damping;

  Matrix q = Matrix::Zero(d, r);
  for (int j = 0; j < r; ++j) q.col(j) = rng.normal_vector(d, 1.0);
  Eigen::HouseholderQR<Matrix> qr(q);
  const Matrix basis = qr.householderQ() * Matrix::Identity(d, r);
  const Matrix gp = basis.transpose() * g;
  Matrix proxy = gp * gp.transpose() / samples;
  proxy.diagonal().array() += damping;
  const Vector dp = basis.transpose() * delta;

  BenchRow row;
  row.d = d;
  row.r = r;
  row.full_ns = detail::median_ns(repetitions, [&] { return delta.dot(full * delta); });
  row.proxy_ns = detail::median_ns(repetitions, [&] { return dp.dot(proxy * dp); });
  row.ratio = row.full_ns / row.proxy_ns;
  return row;
}

inline std::vector<BenchRow> bench_complexity(const std::vector<int>& d_values,
                                              const std::vector<int>& r_values, int repetitions,
                                              std::uint64_t seed = 0) {
  std::vector<BenchRow> out;
  for (int d : d_values)
    for (int r : r_values)
      if (r <= d) out.push_back(bench_quadratic_form(d, r, repetitions, seed));
  return out;
}

// ---------------------------------------------------------------------------
// Conditional mutual information on finite tables.

class JointTable {
 public:
  JointTable(int nx, int ny, int nt) : nx_(nx), ny_(ny), nt_(nt), p_(static_cast<std::size_t>(nx * ny * nt), 0.0) {
    require(nx >= 1 && ny >= 1 && nt >= 1 && nx <= 16 && ny <= 16 && nt <= 16,
            "table dimensions must be in [1, 16]");
  }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nt() const { return nt_; }
  double& operator()(int x, int y, int t) { return p_[index(x, y, t)]; }
  double operator()(int x, int y, int t) const { return p_[index(x, y, t)]; }
  double total() const {
    double s = 0.0;
    for (double v : p_) s += v;
    return s;
  }
  void normalize() {
    const double s = total();
    require(s > 0.0, "empty table");
    for (double& v : p_) v /= s;
  }
  void check() const {
    for (double v : p_) require(v >= 0.0 && std::isfinite(v), "table entries must be non-negative");
    require(std::abs(total() - 1.0) <= 1e-9, "table is not normalized");
  }

 private:
  std::size_t index(int x, int y, int t) const {
    return (static_cast<std::size_t>(x) * ny_ + y) * nt_ + t;
  }
  int nx_, ny_, nt_;
  std::vector<double> p_;
};

// I(Theta; Y | X) in nats, by the direct sum
//   sum p(x,y,t) log [ p(x,y,t) p(x) / (p(x,t) p(x,y)) ].
inline double exact_conditional_mi(const JointTable& j) {
  j.check();
  double mi = 0.0;
  for (int x = 0; x < j.nx(); ++x) {
    double px = 0.0;
    std::vector<double> pxy(static_cast<std::size_t>(j.ny()), 0.0), pxt(static_cast<std::size_t>(j.nt()), 0.0);
    for (int y = 0; y < j.ny(); ++y)
      for (int t = 0; t < j.nt(); ++t) {
        px += j(x, y, t);
        pxy[static_cast<std::size_t>(y)] += j(x, y, t);
        pxt[static_cast<std::size_t>(t)] += j(x, y, t);
      }
    for (int y = 0; y < j.ny(); ++y)
      for (int t = 0; t < j.nt(); ++t) {
        const double p = j(x, y, t);
        if (p > 0.0)
          mi += p * std::log(p * px / (pxt[static_cast<std::size_t>(t)] * pxy[static_cast<std::size_t>(y)]));
      }
  }
  return std::max(0.0, mi);
}

// The same quantity as H(Y|X) - H(Y|X,Theta), from marginal entropies.
inline double conditional_mi_from_entropies(const JointTable& j) {
  j.check();
  auto plogp = [](double p) { return p > 0.0 ? p * std::log(p) : 0.0; };
  double h_xy = 0.0, h_x = 0.0, h_xyt = 0.0, h_xt = 0.0;
  for (int x = 0; x < j.nx(); ++x) {
    double px = 0.0;
    for (int y = 0; y < j.ny(); ++y) {
      double pxy = 0.0;
      for (int t = 0; t < j.nt(); ++t) {
        pxy += j(x, y, t);
        h_xyt -= plogp(j(x, y, t));
      }
      h_xy -= plogp(pxy);
      px += pxy;
    }
    for (int t = 0; t < j.nt(); ++t) {
      double pxt = 0.0;
      for (int y = 0; y < j.ny(); ++y) pxt += j(x, y, t);
      h_xt -= plogp(pxt);
    }
    h_x -= plogp(px);
  }
  return (h_xy - h_x) - (h_xyt - h_xt);
}

// E[p(Y | X, Theta)]: the expected probability the parameter-conditioned
// predictor assigns to the realised label.
inline double expected_correctness(const JointTable& j) {
  double s = 0.0;
  for (int x = 0; x < j.nx(); ++x)
    for (int t = 0; t < j.nt(); ++t) {
      double pxt = 0.0;
      for (int y = 0; y < j.ny(); ++y) pxt += j(x, y, t);
      if (pxt <= 0.0) continue;
      for (int y = 0; y < j.ny(); ++y) s += j(x, y, t) * j(x, y, t) / pxt;
    }
  return s;
}

// Discretised Gaussian channel: labels Y | X drawn from a fixed table, the
// parameter bin Theta | X, Y ~ N(centre(y), sigma^2) over `bins` cells with
// multiplicative jitter. Smaller sigma means the parameters store more about
// the labels.
struct ChannelFamily {
  int nx = 3;
  int ny = 3;
  int bins = 16;
  std::vector<double> label_probs;  // nx * ny
  std::vector<double> centres;      // nx * ny
};

inline ChannelFamily random_channel_family(Rng& rng, int nx, int ny, int bins) {
  ChannelFamily f;
  f.nx = nx;
  f.ny = ny;
  f.bins = bins;
  for (int x = 0; x < nx; ++x) {
    double s = 0.0;
    std::vector<double> row;
    for (int y = 0; y < ny; ++y) {
      row.push_back(0.2 + rng.uniform());
      s += row.back();
    }
    for (double v : row) f.label_probs.push_back(v / s);
    for (int y = 0; y < ny; ++y)
      f.centres.push_back((static_cast<double>(y) + 0.5) * bins / ny + 0.5 * (rng.uniform() - 0.5));
  }
  return f;
}

inline JointTable channel_table(const ChannelFamily& f, double sigma, double jitter, Rng& rng) {
  JointTable j(f.nx, f.ny, f.bins);
  for (int x = 0; x < f.nx; ++x)
    for (int y = 0; y < f.ny; ++y) {
      const double c = f.centres[static_cast<std::size_t>(x * f.ny + y)];
      double z = 0.0;
      std::vector<double> w(static_cast<std::size_t>(f.bins));
      for (int t = 0; t < f.bins; ++t) {
        const double u = (t + 0.5 - c) / sigma;
        w[static_cast<std::size_t>(t)] = std::exp(-0.5 * u * u) * (1.0 + jitter * (rng.uniform() - 0.5)) + 1e-12;
        z += w[static_cast<std::size_t>(t)];
      }
      const double pxy = f.label_probs[static_cast<std::size_t>(x * f.ny + y)] / f.nx;
      for (int t = 0; t < f.bins; ++t) j(x, y, t) = pxy * w[static_cast<std::size_t>(t)] / z;
    }
  j.normalize();
  return j;
}

struct DirectionTrial {
  double mi_increment = 0.0;
  double fitting_gain = 0.0;
  bool agree = false;
};

// One episode of the channel family: sigma moves from `before` to `after`
// and every centre is nudged. The fitting gain is the change in expected
// correctness; the reference is the exact change in I(Theta; Y | X).
inline DirectionTrial direction_trial(Rng& rng, double jitter = 1.0, double centre_shift = 2.0) {
  const int nx = static_cast<int>(rng.uniform_int(2, 4));
  const int ny = static_cast<int>(rng.uniform_int(2, 4));
  const ChannelFamily f0 = random_channel_family(rng, nx, ny, 16);
  ChannelFamily f1 = f0;
  for (double& c : f1.centres) c += centre_shift * rng.normal();
  const double s0 = 0.3 + 3.0 * rng.uniform();
  const double s1 = 0.3 + 3.0 * rng.uniform();
  const JointTable before = channel_table(f0, s0, jitter, rng);
  const JointTable after = channel_table(f1, s1, jitter, rng);
  DirectionTrial t;
  t.mi_increment = exact_conditional_mi(after) - exact_conditional_mi(before);
  t.fitting_gain = expected_correctness(after) - expected_correctness(before);
  t.agree = (t.mi_increment > 0.0) == (t.fitting_gain > 0.0);
  return t;
}

}  // namespace l2t::oracle

#endif  // L2T_ORACLE_HPP_
