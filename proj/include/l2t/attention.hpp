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

// A tiny causal single-head attention stack with a hand-written reverse pass.
//
//   x_i   = E[t_i] + P[i]
//   per layer:
//     y   = x + softmax_causal(Q K^T / sqrt(h)) V Wo^T,   Q,K,V = x Wq^T, x Wk^T, x Wv^T
//     x'  = y + tanh(y W1^T) W2^T
//   logits = U x_last + b
//
// Parameters are packed row-major in the order E, P, {Wq, Wk, Wv, Wo, W1, W2}
// per layer, U, b.

#ifndef L2T_ATTENTION_HPP_
#define L2T_ATTENTION_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "l2t/common.hpp"

namespace l2t::attention {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

struct Shape {
  int vocab = 0;
  int window = 0;
  int hidden = 0;
  int layers = 1;

  std::size_t embed_offset() const { return 0; }
  std::size_t pos_offset() const { return static_cast<std::size_t>(vocab) * hidden; }
  std::size_t layer_offset(int l) const {
    return pos_offset() + static_cast<std::size_t>(window) * hidden +
           static_cast<std::size_t>(l) * 6 * hidden * hidden;
  }
  std::size_t out_offset() const { return layer_offset(layers); }
  std::size_t bias_offset() const { return out_offset() + static_cast<std::size_t>(vocab) * hidden; }
  std::size_t size() const { return bias_offset() + static_cast<std::size_t>(vocab); }
};

namespace detail {

struct LayerCache {
  RowMat x, q, k, v, a, o, y, m;
};

inline ConstMap cmat(const Vector& p, std::size_t off, int rows, int cols) {
  return ConstMap(p.data() + off, rows, cols);
}
inline MutMap mmat(Vector& p, std::size_t off, int rows, int cols) {
  return MutMap(p.data() + off, rows, cols);
}

}  // namespace detail

struct Forward {
  std::vector<detail::LayerCache> layers;
  RowMat final_x;
  Vector logits;
};

inline Forward forward(const Shape& s, const Vector& p, const TokenSeq& ctx) {
  const int n = static_cast<int>(ctx.size());
  const int h = s.hidden;
  Forward f;
  RowMat x(n, h);
  const auto E = detail::cmat(p, s.embed_offset(), s.vocab, h);
  const auto P = detail::cmat(p, s.pos_offset(), s.window, h);
  for (int i = 0; i < n; ++i) x.row(i) = E.row(ctx[static_cast<std::size_t>(i)]) + P.row(i);

  const double scale = 1.0 / std::sqrt(static_cast<double>(h));
  for (int l = 0; l < s.layers; ++l) {
    const std::size_t off = s.layer_offset(l);
    const std::size_t hh = static_cast<std::size_t>(h) * h;
    const auto Wq = detail::cmat(p, off, h, h);
    const auto Wk = detail::cmat(p, off + hh, h, h);
    const auto Wv = detail::cmat(p, off + 2 * hh, h, h);
    const auto Wo = detail::cmat(p, off + 3 * hh, h, h);
    const auto W1 = detail::cmat(p, off + 4 * hh, h, h);
    const auto W2 = detail::cmat(p, off + 5 * hh, h, h);

    detail::LayerCache c;
    c.x = x;
    c.q = x * Wq.transpose();
    c.k = x * Wk.transpose();
    c.v = x * Wv.transpose();
    c.a = RowMat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j <= i; ++j) {
        c.a(i, j) = scale * c.q.row(i).dot(c.k.row(j));
        mx = std::max(mx, c.a(i, j));
      }
      double z = 0.0;
      for (int j = 0; j <= i; ++j) {
        c.a(i, j) = std::exp(c.a(i, j) - mx);
        z += c.a(i, j);
      }
      for (int j = 0; j <= i; ++j) c.a(i, j) /= z;
    }
    c.o = c.a * c.v;
    c.y = x + c.o * Wo.transpose();
    c.m = (c.y * W1.transpose()).array().tanh().matrix();
    x = c.y + c.m * W2.transpose();
    f.layers.push_back(std::move(c));
  }
  f.final_x = x;
  const auto U = detail::cmat(p, s.out_offset(), s.vocab, h);
  f.logits = p.segment(static_cast<Eigen::Index>(s.bias_offset()), s.vocab);
  if (n > 0) f.logits += U * x.row(n - 1).transpose();
  return f;
}

// Accumulates d(objective)/d(params) into `grad`, given d(objective)/d(logits).
inline void backward(const Shape& s, const Vector& p, const TokenSeq& ctx, const Forward& f,
                     const Vector& dlogits, Vector& grad) {
  const int n = static_cast<int>(ctx.size());
  const int h = s.hidden;
  grad.segment(static_cast<Eigen::Index>(s.bias_offset()), s.vocab) += dlogits;
  if (n == 0) return;

  const auto U = detail::cmat(p, s.out_offset(), s.vocab, h);
  detail::mmat(grad, s.out_offset(), s.vocab, h) += dlogits * f.final_x.row(n - 1);
  RowMat dx = RowMat::Zero(n, h);
  dx.row(n - 1) = (U.transpose() * dlogits).transpose();

  const double scale = 1.0 / std::sqrt(static_cast<double>(h));
  for (int l = s.layers - 1; l >= 0; --l) {
    const auto& c = f.layers[static_cast<std::size_t>(l)];
    const std::size_t off = s.layer_offset(l);
    const std::size_t hh = static_cast<std::size_t>(h) * h;
    const auto Wq = detail::cmat(p, off, h, h);
    const auto Wk = detail::cmat(p, off + hh, h, h);
    const auto Wv = detail::cmat(p, off + 2 * hh, h, h);
    const auto Wo = detail::cmat(p, off + 3 * hh, h, h);
    const auto W1 = detail::cmat(p, off + 4 * hh, h, h);
    const auto W2 = detail::cmat(p, off + 5 * hh, h, h);

    // x' = y + m W2^T, m = tanh(y W1^T)
    detail::mmat(grad, off + 5 * hh, h, h) += dx.transpose() * c.m;
    const RowMat dm = dx * W2;
    const RowMat dz = (dm.array() * (1.0 - c.m.array().square())).matrix();
    detail::mmat(grad, off + 4 * hh, h, h) += dz.transpose() * c.y;
    RowMat dy = dx + dz * W1;

    // y = x + o Wo^T
    detail::mmat(grad, off + 3 * hh, h, h) += dy.transpose() * c.o;
    const RowMat dout = dy * Wo;
    RowMat dxl = dy;

    // o = a v
    const RowMat da = dout * c.v.transpose();
    const RowMat dv = c.a.transpose() * dout;
    RowMat ds = RowMat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      double inner = 0.0;
      for (int j = 0; j <= i; ++j) inner += c.a(i, j) * da(i, j);
      for (int j = 0; j <= i; ++j) ds(i, j) = c.a(i, j) * (da(i, j) - inner) * scale;
    }
    const RowMat dq = ds * c.k;
    const RowMat dk = ds.transpose() * c.q;

    detail::mmat(grad, off, h, h) += dq.transpose() * c.x;
    detail::mmat(grad, off + hh, h, h) += dk.transpose() * c.x;
    detail::mmat(grad, off + 2 * hh, h, h) += dv.transpose() * c.x;
    dxl += dq * Wq + dk * Wk + dv * Wv;
    dx = std::move(dxl);
  }

  auto dE = detail::mmat(grad, s.embed_offset(), s.vocab, h);
  auto dP = detail::mmat(grad, s.pos_offset(), s.window, h);
  for (int i = 0; i < n; ++i) {
    dE.row(ctx[static_cast<std::size_t>(i)]) += dx.row(i);
    dP.row(i) += dx.row(i);
  }
}

}  // namespace l2t::attention

#endif  // L2T_ATTENTION_HPP_
