#pragma once

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "eyemark/graph.hpp"
#include "eyemark/nn.hpp"
#include "eyemark/rng.hpp"
#include "eyemark/tensor.hpp"

namespace testsup {

using eyemark::Graph;
using eyemark::Rng;
using eyemark::Shape;
using eyemark::Tensor;

inline Tensor rand_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (long long i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (long long i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------------------
// Brute-force references, written as plain nested loops with none of the
// range precomputation the library uses.

inline Tensor conv2d_ref(const Tensor& x, const Tensor& k, int stride, int pad) {
  const int N = x.extent(0), Cin = x.extent(1), H = x.extent(2), W = x.extent(3);
  const int Cout = k.extent(0), kh = k.extent(2), kw = k.extent(3);
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  Tensor out({N, Cout, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          double acc = 0.0;
          for (int ci = 0; ci < Cin; ++ci)
            for (int ki = 0; ki < kh; ++ki)
              for (int kj = 0; kj < kw; ++kj) {
                const int ih = oh * stride - pad + ki;
                const int iw = ow * stride - pad + kj;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += x.at4(n, ci, ih, iw) * k.at4(co, ci, ki, kj);
              }
          out.at4(n, co, oh, ow) = acc;
        }
  return out;
}

inline Tensor depthwise_ref(const Tensor& x, const Tensor& k, int stride, int pad) {
  const int N = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  const int kh = k.extent(2), kw = k.extent(3);
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  Tensor out({N, C, OH, OW});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          double acc = 0.0;
          for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj) {
              const int ih = oh * stride - pad + ki;
              const int iw = ow * stride - pad + kj;
              if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
              acc += x.at4(n, c, ih, iw) * k.at4(c, 0, ki, kj);
            }
          out.at4(n, c, oh, ow) = acc;
        }
  return out;
}

inline Tensor maxpool_ref(const Tensor& x) {
  const int N = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  Tensor out({N, C, H / 2, W / 2});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < H / 2; ++oh)
        for (int ow = 0; ow < W / 2; ++ow) {
          double m = x.at4(n, c, 2 * oh, 2 * ow);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) m = std::max(m, x.at4(n, c, 2 * oh + dy, 2 * ow + dx));
          out.at4(n, c, oh, ow) = m;
        }
  return out;
}

inline Tensor upsample_ref(const Tensor& x) {
  const int N = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  Tensor out({N, C, 2 * H, 2 * W});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < 2 * H; ++y)
        for (int x2 = 0; x2 < 2 * W; ++x2) out.at4(n, c, y, x2) = x.at4(n, c, y / 2, x2 / 2);
  return out;
}

inline Tensor matmul_ref(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  const int off = a.rank() == 3 ? 1 : 0;
  const int B = off ? a.extent(0) : 1;
  const int M = ta ? a.extent(off + 1) : a.extent(off);
  const int K = ta ? a.extent(off) : a.extent(off + 1);
  const int Nn = tb ? b.extent(off) : b.extent(off + 1);
  Shape s = off ? Shape{B, M, Nn} : Shape{M, Nn};
  Tensor out(s);
  auto A = [&](int t, int i, int j) { return a[(static_cast<long long>(t) * a.extent(off) + i) * a.extent(off + 1) + j]; };
  auto Bv = [&](int t, int i, int j) { return b[(static_cast<long long>(t) * b.extent(off) + i) * b.extent(off + 1) + j]; };
  for (int t = 0; t < B; ++t)
    for (int m = 0; m < M; ++m)
      for (int n = 0; n < Nn; ++n) {
        double acc = 0.0;
        for (int k = 0; k < K; ++k) {
          const double av = ta ? A(t, k, m) : A(t, m, k);
          const double bv = tb ? Bv(t, n, k) : Bv(t, k, n);
          acc += av * bv;
        }
        out[(static_cast<long long>(t) * M + m) * Nn + n] = acc;
      }
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking. build records the computation on a
// fresh graph over the supplied leaves and returns the scalar loss node.
// Returns the worst relative error between analytic and central-difference
// gradients across every element of every leaf.

using GraphFn = std::function<int(Graph&, const std::vector<int>&)>;

inline double gradcheck(const GraphFn& build, const std::vector<Tensor>& xs, double h = 1e-5) {
  Graph g;
  std::vector<int> ids;
  ids.reserve(xs.size());
  for (const Tensor& x : xs) ids.push_back(g.input(x, true));
  const int loss = build(g, ids);
  REQUIRE(g.value(loss).numel() == 1);
  g.backward(loss);
  std::vector<Tensor> analytic;
  for (int id : ids) analytic.push_back(g.has_grad(id) ? g.grad(id) : Tensor(g.value(id).shape()));

  auto eval = [&](const std::vector<Tensor>& p) {
    Graph g2;
    std::vector<int> ids2;
    ids2.reserve(p.size());
    for (const Tensor& x : p) ids2.push_back(g2.input(x, false));
    return g2.value(build(g2, ids2))[0];
  };

  std::vector<Tensor> p = xs;
  double worst = 0.0;
  for (size_t t = 0; t < p.size(); ++t)
    for (long long i = 0; i < p[t].numel(); ++i) {
      const double orig = p[t][i];
      p[t][i] = orig + h;
      const double fp = eval(p);
      p[t][i] = orig - h;
      const double fm = eval(p);
      p[t][i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[t][i];
      const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3});
      worst = std::max(worst, err);
    }
  return worst;
}

// ---------------------------------------------------------------------------
// Central-difference check of one block forward: every element of the input
// and of every parameter the block binds, against the analytic gradient of a
// fixed random linear functional of the output. Returns the worst relative
// error. Runs in training mode, so batch statistics are live on both sides.

template <class Fwd>
inline double block_gradcheck(std::vector<Tensor> xs, Fwd fwd, Rng& rng, double h = 1e-5) {
  using eyemark::Binder;
  using eyemark::Param;
  Tensor w;
  {
    Graph g;
    Binder b(g, true);
    std::vector<int> ids;
    for (const Tensor& x : xs) ids.push_back(g.input(x, false));
    w = rand_tensor(g.value(fwd(b, ids)).shape(), rng);
  }
  auto eval = [&]() {
    Graph g;
    Binder b(g, true);
    std::vector<int> ids;
    for (const Tensor& x : xs) ids.push_back(g.input(x, false));
    return g.value(g.sum_all(g.mul(fwd(b, ids), g.input(w, false))))[0];
  };

  Graph g;
  Binder b(g, true);
  std::vector<int> ids;
  for (const Tensor& x : xs) ids.push_back(g.input(x, true));
  const int loss = g.sum_all(g.mul(fwd(b, ids), g.input(w, false)));
  g.backward(loss);
  std::vector<Tensor> xgrads;
  for (size_t t = 0; t < xs.size(); ++t)
    xgrads.push_back(g.has_grad(ids[t]) ? g.grad(ids[t]) : Tensor(xs[t].shape()));
  std::vector<std::pair<Param*, Tensor>> pgrads;
  for (const auto& [p, id] : b.bound())
    pgrads.push_back({p, g.has_grad(id) ? g.grad(id) : Tensor(p->value.shape())});

  double worst = 0.0;
  auto sweep = [&](Tensor& target, const Tensor& analytic) {
    for (long long i = 0; i < target.numel(); ++i) {
      const double orig = target[i];
      target[i] = orig + h;
      const double fp = eval();
      target[i] = orig - h;
      const double fm = eval();
      target[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double err = std::abs(fd - analytic[i]) / std::max({std::abs(fd), std::abs(analytic[i]), 1e-3});
      worst = std::max(worst, err);
    }
  };
  for (size_t t = 0; t < xs.size(); ++t) sweep(xs[t], xgrads[t]);
  for (auto& [p, ga] : pgrads) sweep(p->value, ga);
  return worst;
}

}  // namespace testsup
