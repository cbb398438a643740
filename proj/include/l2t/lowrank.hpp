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

// Low-rank parameter proxy: an orthonormal d x r basis onto which parameter
// vectors and score vectors are projected before any quadratic form is
// evaluated.

#ifndef L2T_LOWRANK_HPP_
#define L2T_LOWRANK_HPP_

#include <algorithm>
#include <deque>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "l2t/common.hpp"
#include "l2t/rng.hpp"

namespace l2t {

struct ProxyBasis {
  Matrix basis;  // d x r, orthonormal columns
  int rank = 0;
  int built_at_step = 0;
  int window = 0;
  double coordinate_scale = 1.0;  // d / m for coordinate subsets, else 1

  std::size_t dim() const { return static_cast<std::size_t>(basis.rows()); }
};

// Top-r left singular vectors of the d x W matrix whose columns are the
// history entries. One-sided Jacobi keeps the cost at O(d W^2) and the
// ordering deterministic; each column's sign is fixed so that its entry of
// largest magnitude is positive.
inline ProxyBasis fit_basis(const std::vector<Vector>& history, int r, int step = 0) {
  require(!history.empty(), "empty update history");
  const auto d = history.front().size();
  const auto w = static_cast<Eigen::Index>(history.size());
  require(r >= 1 && r <= std::min<Eigen::Index>(d, w), "rank must be in [1, min(d, W)]");
  Matrix h(d, w);
  for (Eigen::Index j = 0; j < w; ++j) {
    require(history[static_cast<std::size_t>(j)].size() == d, "history dimension mismatch");
    h.col(j) = history[static_cast<std::size_t>(j)];
  }
  require(h.cwiseAbs().maxCoeff() > 0.0, "degenerate history");

  Eigen::JacobiSVD<Matrix> svd(h, Eigen::ComputeThinU);
  ProxyBasis b;
  b.basis = svd.matrixU().leftCols(r);
  for (Eigen::Index j = 0; j < r; ++j) {
    Eigen::Index arg = 0;
    b.basis.col(j).cwiseAbs().maxCoeff(&arg);
    if (b.basis(arg, j) < 0) b.basis.col(j) *= -1.0;
  }
  b.rank = r;
  b.built_at_step = step;
  b.window = static_cast<int>(w);
  return b;
}

// Cold-start proxy: the first r coordinates.
inline ProxyBasis identity_basis(std::size_t d, int r) {
  require(r >= 1 && static_cast<std::size_t>(r) <= d, "rank must be in [1, d]");
  ProxyBasis b;
  b.basis = Matrix::Identity(static_cast<Eigen::Index>(d), r);
  b.rank = r;
  return b;
}

// m coordinates drawn without replacement (random parameter sampling in
// place of the SVD proxy). Inner products taken on the subset are scaled by
// d / m so that they estimate the full-space ones without bias.
inline ProxyBasis random_coordinate_basis(std::size_t d, int m, Rng& rng, int step = 0) {
  require(m >= 1 && static_cast<std::size_t>(m) <= d, "subset size must be in [1, d]");
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                            static_cast<std::int64_t>(d - 1)));
    std::swap(idx[i], idx[j]);
  }
  std::sort(idx.begin(), idx.begin() + m);
  ProxyBasis b;
  b.basis = Matrix::Zero(static_cast<Eigen::Index>(d), m);
  for (int j = 0; j < m; ++j) b.basis(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(j)]), j) = 1.0;
  b.rank = m;
  b.built_at_step = step;
  b.coordinate_scale = static_cast<double>(d) / m;
  return b;
}

inline Vector project(const ProxyBasis& b, const Vector& v) {
  require(static_cast<std::size_t>(v.size()) == b.dim(),
          "dimension mismatch: basis has " + std::to_string(b.dim()) + " rows, vector has " +
              std::to_string(v.size()));
  return b.basis.transpose() * v;
}

inline Vector reconstruct(const ProxyBasis& b, const Vector& coords) { return b.basis * coords; }

// Rolling window of parameter-update deltas feeding fit_basis.
class UpdateHistory {
 public:
  explicit UpdateHistory(std::size_t window) : window_(window) {}

  void push(Vector delta) {
    deltas_.push_back(std::move(delta));
    while (deltas_.size() > window_) deltas_.pop_front();
  }
  std::vector<Vector> snapshot() const { return {deltas_.begin(), deltas_.end()}; }
  std::size_t size() const { return deltas_.size(); }

 private:
  std::size_t window_;
  std::deque<Vector> deltas_;
};

}  // namespace l2t

#endif  // L2T_LOWRANK_HPP_
