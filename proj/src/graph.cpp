#include "eyemark/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace eyemark {

namespace {

void check_rank4(const Tensor& t, const char* op) {
  if (t.rank() != 4)
    throw std::invalid_argument(std::string(op) + ": expected NCHW tensor, got " + shape_str(t.shape()));
}

// Floor semantics: a trailing partial window is dropped, as in the usual
// deep-learning convention.
int out_extent(int in, int pad, int k, int stride, const char* op) {
  int span = in + 2 * pad - k;
  if (span < 0)
    throw std::invalid_argument(std::string(op) + ": kernel " + std::to_string(k) + " exceeds padded extent " +
                                std::to_string(in + 2 * pad));
  return span / stride + 1;
}

void check_conv_args(const Tensor& k, int stride, int padding, const char* op) {
  if (k.rank() != 4) throw std::invalid_argument(std::string(op) + ": kernel must be rank 4, got " + shape_str(k.shape()));
  if (k.extent(2) % 2 == 0 || k.extent(3) % 2 == 0)
    throw std::invalid_argument(std::string(op) + ": kernel extents must be odd, got " + shape_str(k.shape()));
  if (padding < 0) throw std::invalid_argument(std::string(op) + ": negative padding");
  if (stride < 1) throw std::invalid_argument(std::string(op) + ": stride must be >= 1");
}

// Valid output-index range [lo,hi] such that o*stride - pad + k_off lands
// inside [0, in_extent).
void valid_range(int in_extent, int out_extent_, int stride, int pad, int k_off, int& lo, int& hi) {
  int num = pad - k_off;
  lo = num <= 0 ? 0 : (num + stride - 1) / stride;
  hi = (in_extent - 1 + pad - k_off) / stride;
  if (hi > out_extent_ - 1) hi = out_extent_ - 1;
}

}  // namespace

int Graph::emit(Tensor value, bool requires_grad, std::function<void()> backward_fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backward_fn = std::move(backward_fn);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Graph::grad_buf(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_live) {
    n.grad = Tensor(n.value.shape());
    n.grad_live = true;
  }
  return n.grad;
}

void Graph::accum(int id, const Tensor& g) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.requires_grad) return;
  Tensor& buf = grad_buf(id);
  for (long long i = 0; i < g.numel(); ++i) buf[i] += g[i];
}

void Graph::accum_at(int id, long long flat_index, double g) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.requires_grad) return;
  grad_buf(id)[flat_index] += g;
}

bool Graph::has_grad(int id) const { return nodes_[static_cast<size_t>(id)].grad_live; }

const Tensor& Graph::grad(int id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_live) throw std::logic_error("node has no gradient (backward not run or node unreachable)");
  return n.grad;
}

void Graph::backward(int loss) {
  if (backward_done_) throw std::logic_error("backward already run on this graph");
  const Tensor& lv = value(loss);
  if (lv.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(lv.shape()));
  backward_done_ = true;
  grad_buf(loss).fill(1.0);
  for (int id = loss; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad_live && n.backward_fn) n.backward_fn();
  }
}

int Graph::input(Tensor value, bool requires_grad) { return emit(std::move(value), requires_grad, {}); }

// ---------------------------------------------------------------------------
// Convolutions

int Graph::conv2d(int x, int kernel, int stride, int padding) {
  const Tensor& xv = value(x);
  const Tensor& kv = value(kernel);
  check_rank4(xv, "conv2d");
  check_conv_args(kv, stride, padding, "conv2d");
  if (kv.extent(1) != xv.extent(1))
    throw std::invalid_argument("conv2d: kernel input channels " + std::to_string(kv.extent(1)) +
                                " != input channels " + std::to_string(xv.extent(1)) + " (input " +
                                shape_str(xv.shape()) + ", kernel " + shape_str(kv.shape()) + ")");
  const int N = xv.extent(0), Cin = xv.extent(1), H = xv.extent(2), W = xv.extent(3);
  const int Cout = kv.extent(0), kh = kv.extent(2), kw = kv.extent(3);
  const int OH = out_extent(H, padding, kh, stride, "conv2d");
  const int OW = out_extent(W, padding, kw, stride, "conv2d");

  Tensor out({N, Cout, OH, OW});
  {
    const double* X = xv.data();
    const double* K = kv.data();
    double* O = out.data();
    for (int n = 0; n < N; ++n)
      for (int co = 0; co < Cout; ++co) {
        double* op = O + (static_cast<long long>(n) * Cout + co) * OH * OW;
        for (int ci = 0; ci < Cin; ++ci) {
          const double* xp = X + (static_cast<long long>(n) * Cin + ci) * H * W;
          const double* kp = K + (static_cast<long long>(co) * Cin + ci) * kh * kw;
          for (int ki = 0; ki < kh; ++ki) {
            int oh_lo, oh_hi;
            valid_range(H, OH, stride, padding, ki, oh_lo, oh_hi);
            for (int kj = 0; kj < kw; ++kj) {
              const double kval = kp[ki * kw + kj];
              int ow_lo, ow_hi;
              valid_range(W, OW, stride, padding, kj, ow_lo, ow_hi);
              for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                const double* xrow = xp + static_cast<long long>(oh * stride - padding + ki) * W;
                double* orow = op + static_cast<long long>(oh) * OW;
                int iw = ow_lo * stride - padding + kj;
                for (int ow = ow_lo; ow <= ow_hi; ++ow, iw += stride) orow[ow] += kval * xrow[iw];
              }
            }
          }
        }
      }
  }

  int out_id = emit(std::move(out), requires_grad(x) || requires_grad(kernel), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, x, kernel, out_id, stride, padding]() {
    const Tensor& xv2 = value(x);
    const Tensor& kv2 = value(kernel);
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    const int N = xv2.extent(0), Cin = xv2.extent(1), H = xv2.extent(2), W = xv2.extent(3);
    const int Cout = kv2.extent(0), kh = kv2.extent(2), kw = kv2.extent(3);
    const int OH = go.extent(2), OW = go.extent(3);
    const bool need_x = nodes_[static_cast<size_t>(x)].requires_grad;
    const bool need_k = nodes_[static_cast<size_t>(kernel)].requires_grad;
    double* GX = need_x ? grad_buf(x).data() : nullptr;
    double* GK = need_k ? grad_buf(kernel).data() : nullptr;
    const double* X = xv2.data();
    const double* K = kv2.data();
    const double* GO = go.data();
    for (int n = 0; n < N; ++n)
      for (int co = 0; co < Cout; ++co) {
        const double* gop = GO + (static_cast<long long>(n) * Cout + co) * OH * OW;
        for (int ci = 0; ci < Cin; ++ci) {
          const double* xp = X + (static_cast<long long>(n) * Cin + ci) * H * W;
          double* gxp = need_x ? GX + (static_cast<long long>(n) * Cin + ci) * H * W : nullptr;
          const double* kp = K + (static_cast<long long>(co) * Cin + ci) * kh * kw;
          double* gkp = need_k ? GK + (static_cast<long long>(co) * Cin + ci) * kh * kw : nullptr;
          for (int ki = 0; ki < kh; ++ki) {
            int oh_lo, oh_hi;
            valid_range(H, OH, stride, padding, ki, oh_lo, oh_hi);
            for (int kj = 0; kj < kw; ++kj) {
              int ow_lo, ow_hi;
              valid_range(W, OW, stride, padding, kj, ow_lo, ow_hi);
              const double kval = kp[ki * kw + kj];
              double kacc = 0.0;
              for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                const long long row = static_cast<long long>(oh * stride - padding + ki) * W;
                const double* gorow = gop + static_cast<long long>(oh) * OW;
                int iw = ow_lo * stride - padding + kj;
                for (int ow = ow_lo; ow <= ow_hi; ++ow, iw += stride) {
                  const double g = gorow[ow];
                  if (need_x) gxp[row + iw] += kval * g;
                  kacc += xp[row + iw] * g;
                }
              }
              if (need_k) gkp[ki * kw + kj] += kacc;
            }
          }
        }
      }
  };
  return out_id;
}

int Graph::depthwise_conv2d(int x, int kernel, int stride, int padding) {
  const Tensor& xv = value(x);
  const Tensor& kv = value(kernel);
  check_rank4(xv, "depthwise_conv2d");
  check_conv_args(kv, stride, padding, "depthwise_conv2d");
  if (kv.extent(1) != 1 || kv.extent(0) != xv.extent(1))
    throw std::invalid_argument("depthwise_conv2d: kernel must be [C,1,kh,kw] with C matching input (input " +
                                shape_str(xv.shape()) + ", kernel " + shape_str(kv.shape()) + ")");
  const int N = xv.extent(0), C = xv.extent(1), H = xv.extent(2), W = xv.extent(3);
  const int kh = kv.extent(2), kw = kv.extent(3);
  const int OH = out_extent(H, padding, kh, stride, "depthwise_conv2d");
  const int OW = out_extent(W, padding, kw, stride, "depthwise_conv2d");

  Tensor out({N, C, OH, OW});
  {
    const double* X = xv.data();
    const double* K = kv.data();
    double* O = out.data();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const double* xp = X + (static_cast<long long>(n) * C + c) * H * W;
        const double* kp = K + static_cast<long long>(c) * kh * kw;
        double* op = O + (static_cast<long long>(n) * C + c) * OH * OW;
        for (int ki = 0; ki < kh; ++ki) {
          int oh_lo, oh_hi;
          valid_range(H, OH, stride, padding, ki, oh_lo, oh_hi);
          for (int kj = 0; kj < kw; ++kj) {
            const double kval = kp[ki * kw + kj];
            int ow_lo, ow_hi;
            valid_range(W, OW, stride, padding, kj, ow_lo, ow_hi);
            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
              const double* xrow = xp + static_cast<long long>(oh * stride - padding + ki) * W;
              double* orow = op + static_cast<long long>(oh) * OW;
              int iw = ow_lo * stride - padding + kj;
              for (int ow = ow_lo; ow <= ow_hi; ++ow, iw += stride) orow[ow] += kval * xrow[iw];
            }
          }
        }
      }
  }

  int out_id = emit(std::move(out), requires_grad(x) || requires_grad(kernel), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, x, kernel, out_id, stride, padding]() {
    const Tensor& xv2 = value(x);
    const Tensor& kv2 = value(kernel);
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    const int N = xv2.extent(0), C = xv2.extent(1), H = xv2.extent(2), W = xv2.extent(3);
    const int kh = kv2.extent(2), kw = kv2.extent(3);
    const int OH = go.extent(2), OW = go.extent(3);
    const bool need_x = nodes_[static_cast<size_t>(x)].requires_grad;
    const bool need_k = nodes_[static_cast<size_t>(kernel)].requires_grad;
    double* GX = need_x ? grad_buf(x).data() : nullptr;
    double* GK = need_k ? grad_buf(kernel).data() : nullptr;
    const double* X = xv2.data();
    const double* K = kv2.data();
    const double* GO = go.data();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const double* xp = X + (static_cast<long long>(n) * C + c) * H * W;
        double* gxp = need_x ? GX + (static_cast<long long>(n) * C + c) * H * W : nullptr;
        const double* kp = K + static_cast<long long>(c) * kh * kw;
        double* gkp = need_k ? GK + static_cast<long long>(c) * kh * kw : nullptr;
        const double* gop = GO + (static_cast<long long>(n) * C + c) * OH * OW;
        for (int ki = 0; ki < kh; ++ki) {
          int oh_lo, oh_hi;
          valid_range(H, OH, stride, padding, ki, oh_lo, oh_hi);
          for (int kj = 0; kj < kw; ++kj) {
            int ow_lo, ow_hi;
            valid_range(W, OW, stride, padding, kj, ow_lo, ow_hi);
            const double kval = kp[ki * kw + kj];
            double kacc = 0.0;
            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
              const long long row = static_cast<long long>(oh * stride - padding + ki) * W;
              const double* gorow = gop + static_cast<long long>(oh) * OW;
              int iw = ow_lo * stride - padding + kj;
              for (int ow = ow_lo; ow <= ow_hi; ++ow, iw += stride) {
                const double g = gorow[ow];
                if (need_x) gxp[row + iw] += kval * g;
                kacc += xp[row + iw] * g;
              }
            }
            if (need_k) gkp[ki * kw + kj] += kacc;
          }
        }
      }
  };
  return out_id;
}

int Graph::maxpool2x2(int x) {
  const Tensor& xv = value(x);
  check_rank4(xv, "maxpool2x2");
  const int N = xv.extent(0), C = xv.extent(1), H = xv.extent(2), W = xv.extent(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw std::invalid_argument("maxpool2x2: spatial extents must be even, got " + shape_str(xv.shape()));
  const int OH = H / 2, OW = W / 2;
  Tensor out({N, C, OH, OW});
  // First max in scan order wins ties, so backward routing is unambiguous.
  auto argmax = std::make_shared<std::vector<long long>>(static_cast<size_t>(out.numel()));
  {
    const double* X = xv.data();
    double* O = out.data();
    long long oi = 0;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const double* xp = X + (static_cast<long long>(n) * C + c) * H * W;
        const long long base = (static_cast<long long>(n) * C + c) * H * W;
        for (int oh = 0; oh < OH; ++oh)
          for (int ow = 0; ow < OW; ++ow, ++oi) {
            double best = xp[(2 * oh) * W + 2 * ow];
            long long best_i = base + (2 * oh) * W + 2 * ow;
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const long long idx = base + (2 * oh + dy) * W + (2 * ow + dx);
                const double v = xp[(2 * oh + dy) * W + (2 * ow + dx)];
                if (v > best) {
                  best = v;
                  best_i = idx;
                }
              }
            O[oi] = best;
            (*argmax)[static_cast<size_t>(oi)] = best_i;
          }
      }
  }
  int out_id = emit(std::move(out), requires_grad(x), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, x, out_id, argmax]() {
    if (!nodes_[static_cast<size_t>(x)].requires_grad) return;
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    Tensor& gx = grad_buf(x);
    for (long long i = 0; i < go.numel(); ++i) gx[(*argmax)[static_cast<size_t>(i)]] += go[i];
  };
  return out_id;
}

int Graph::upsample2x_nearest(int x) {
  const Tensor& xv = value(x);
  check_rank4(xv, "upsample2x_nearest");
  const int N = xv.extent(0), C = xv.extent(1), H = xv.extent(2), W = xv.extent(3);
  Tensor out({N, C, 2 * H, 2 * W});
  {
    const double* X = xv.data();
    double* O = out.data();
    for (long long nc = 0; nc < static_cast<long long>(N) * C; ++nc) {
      const double* xp = X + nc * H * W;
      double* op = O + nc * 4 * H * W;
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          const double v = xp[h * W + w];
          double* row0 = op + (2 * h) * (2 * W) + 2 * w;
          double* row1 = row0 + 2 * W;
          row0[0] = v;
          row0[1] = v;
          row1[0] = v;
          row1[1] = v;
        }
    }
  }
  int out_id = emit(std::move(out), requires_grad(x), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, x, out_id, N, C, H, W]() {
    if (!nodes_[static_cast<size_t>(x)].requires_grad) return;
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    Tensor& gx = grad_buf(x);
    const double* G = go.data();
    double* GX = gx.data();
    for (long long nc = 0; nc < static_cast<long long>(N) * C; ++nc) {
      const double* gp = G + nc * 4 * H * W;
      double* gxp = GX + nc * H * W;
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
          const double* row0 = gp + (2 * h) * (2 * W) + 2 * w;
          const double* row1 = row0 + 2 * W;
          gxp[h * W + w] += row0[0] + row0[1] + row1[0] + row1[1];
        }
    }
  };
  return out_id;
}

// ---------------------------------------------------------------------------
// Softmax

int Graph::spatial_softmax(int x) {
  const Tensor& xv = value(x);
  check_rank4(xv, "spatial_softmax");
  const int N = xv.extent(0), C = xv.extent(1);
  const long long S = static_cast<long long>(xv.extent(2)) * xv.extent(3);
  Tensor out(xv.shape());
  {
    const double* X = xv.data();
    double* O = out.data();
    for (long long s = 0; s < static_cast<long long>(N) * C; ++s) {
      const double* xp = X + s * S;
      double* op = O + s * S;
      double m = xp[0];
      for (long long i = 1; i < S; ++i) m = std::max(m, xp[i]);
      double sum = 0.0;
      for (long long i = 0; i < S; ++i) {
        op[i] = std::exp(xp[i] - m);
        sum += op[i];
      }
      const double inv = 1.0 / sum;
      for (long long i = 0; i < S; ++i) op[i] *= inv;
    }
  }
  int out_id = emit(std::move(out), requires_grad(x), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, x, out_id, N, C, S]() {
    if (!nodes_[static_cast<size_t>(x)].requires_grad) return;
    const Tensor& p = value(out_id);
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    Tensor& gx = grad_buf(x);
    for (long long s = 0; s < static_cast<long long>(N) * C; ++s) {
      const double* pp = p.data() + s * S;
      const double* gp = go.data() + s * S;
      double* gxp = gx.data() + s * S;
      double dot = 0.0;
      for (long long i = 0; i < S; ++i) dot += gp[i] * pp[i];
      for (long long i = 0; i < S; ++i) gxp[i] += pp[i] * (gp[i] - dot);
    }
  };
  return out_id;
}

// ---------------------------------------------------------------------------
// Elementwise and shape ops

int Graph::add(int a, int b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_same_shape(av, bv, "add");
  Tensor out(av.shape());
  for (long long i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  int out_id = emit(std::move(out), requires_grad(a) || requires_grad(b), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, a, b, out_id]() {
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    accum(a, go);
    accum(b, go);
  };
  return out_id;
}

int Graph::sub(int a, int b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_same_shape(av, bv, "sub");
  Tensor out(av.shape());
  for (long long i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
  int out_id = emit(std::move(out), requires_grad(a) || requires_grad(b), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, a, b, out_id]() {
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    accum(a, go);
    if (nodes_[static_cast<size_t>(b)].requires_grad) {
      Tensor& gb = grad_buf(b);
      for (long long i = 0; i < go.numel(); ++i) gb[i] -= go[i];
    }
  };
  return out_id;
}

int Graph::mul(int a, int b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_same_shape(av, bv, "mul");
  Tensor out(av.shape());
  for (long long i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  int out_id = emit(std::move(out), requires_grad(a) || requires_grad(b), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, a, b, out_id]() {
    const Tensor& av2 = value(a);
    const Tensor& bv2 = value(b);
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    if (nodes_[static_cast<size_t>(a)].requires_grad) {
      Tensor& ga = grad_buf(a);
      for (long long i = 0; i < go.numel(); ++i) ga[i] += go[i] * bv2[i];
    }
    if (nodes_[static_cast<size_t>(b)].requires_grad) {
      Tensor& gb = grad_buf(b);
      for (long long i = 0; i < go.numel(); ++i) gb[i] += go[i] * av2[i];
    }
  };
  return out_id;
}

int Graph::scale(int a, double c) {
  const Tensor& av = value(a);
  Tensor out(av.shape());
  for (long long i = 0; i < out.numel(); ++i) out[i] = c * av[i];
  int out_id = emit(std::move(out), requires_grad(a), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, a, out_id, c]() {
    if (!nodes_[static_cast<size_t>(a)].requires_grad) return;
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    Tensor& ga = grad_buf(a);
    for (long long i = 0; i < go.numel(); ++i) ga[i] += c * go[i];
  };
  return out_id;
}

int Graph::relu(int a) {
  const Tensor& av = value(a);
  Tensor out(av.shape());
  for (long long i = 0; i < out.numel(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  int out_id = emit(std::move(out), requires_grad(a), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, a, out_id]() {
    if (!nodes_[static_cast<size_t>(a)].requires_grad) return;
    const Tensor& av2 = value(a);
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    Tensor& ga = grad_buf(a);
    for (long long i = 0; i < go.numel(); ++i)
      if (av2[i] > 0.0) ga[i] += go[i];
  };
  return out_id;
}

int Graph::concat_channels(int a, int b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  check_rank4(av, "concat_channels");
  check_rank4(bv, "concat_channels");
  if (av.extent(0) != bv.extent(0) || av.extent(2) != bv.extent(2) || av.extent(3) != bv.extent(3))
    throw std::invalid_argument("concat_channels: shape mismatch " + shape_str(av.shape()) + " vs " +
                                shape_str(bv.shape()));
  const int N = av.extent(0), Ca = av.extent(1), Cb = bv.extent(1);
  const long long S = static_cast<long long>(av.extent(2)) * av.extent(3);
  Tensor out({N, Ca + Cb, av.extent(2), av.extent(3)});
  for (int n = 0; n < N; ++n) {
    std::copy(av.data() + static_cast<long long>(n) * Ca * S, av.data() + static_cast<long long>(n + 1) * Ca * S,
              out.data() + static_cast<long long>(n) * (Ca + Cb) * S);
    std::copy(bv.data() + static_cast<long long>(n) * Cb * S, bv.data() + static_cast<long long>(n + 1) * Cb * S,
              out.data() + (static_cast<long long>(n) * (Ca + Cb) + Ca) * S);
  }
  int out_id = emit(std::move(out), requires_grad(a) || requires_grad(b), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, a, b, out_id, N, Ca, Cb, S]() {
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    if (nodes_[static_cast<size_t>(a)].requires_grad) {
      Tensor& ga = grad_buf(a);
      for (int n = 0; n < N; ++n)
        for (long long i = 0; i < Ca * S; ++i)
          ga[static_cast<long long>(n) * Ca * S + i] += go[static_cast<long long>(n) * (Ca + Cb) * S + i];
    }
    if (nodes_[static_cast<size_t>(b)].requires_grad) {
      Tensor& gb = grad_buf(b);
      for (int n = 0; n < N; ++n)
        for (long long i = 0; i < Cb * S; ++i)
          gb[static_cast<long long>(n) * Cb * S + i] += go[(static_cast<long long>(n) * (Ca + Cb) + Ca) * S + i];
    }
  };
  return out_id;
}

int Graph::bias_add(int x, int bias) {
  const Tensor& xv = value(x);
  const Tensor& bv = value(bias);
  check_rank4(xv, "bias_add");
  if (bv.rank() != 1 || bv.extent(0) != xv.extent(1))
    throw std::invalid_argument("bias_add: bias " + shape_str(bv.shape()) + " does not match channels of " +
                                shape_str(xv.shape()));
  const int N = xv.extent(0), C = xv.extent(1);
  const long long S = static_cast<long long>(xv.extent(2)) * xv.extent(3);
  Tensor out(xv.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double bval = bv[c];
      const long long base = (static_cast<long long>(n) * C + c) * S;
      for (long long i = 0; i < S; ++i) out[base + i] = xv[base + i] + bval;
    }
  int out_id = emit(std::move(out), requires_grad(x) || requires_grad(bias), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, x, bias, out_id, N, C, S]() {
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    accum(x, go);
    if (nodes_[static_cast<size_t>(bias)].requires_grad) {
      Tensor& gb = grad_buf(bias);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const long long base = (static_cast<long long>(n) * C + c) * S;
          double acc = 0.0;
          for (long long i = 0; i < S; ++i) acc += go[base + i];
          gb[c] += acc;
        }
    }
  };
  return out_id;
}

int Graph::reshape(int x, Shape shape) {
  const Tensor& xv = value(x);
  if (shape_numel(shape) != xv.numel())
    throw std::invalid_argument("reshape: cannot view " + shape_str(xv.shape()) + " as " + shape_str(shape));
  Tensor out(shape);
  std::copy(xv.data(), xv.data() + xv.numel(), out.data());
  int out_id = emit(std::move(out), requires_grad(x), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, x, out_id]() {
    if (!nodes_[static_cast<size_t>(x)].requires_grad) return;
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    Tensor& gx = grad_buf(x);
    for (long long i = 0; i < go.numel(); ++i) gx[i] += go[i];
  };
  return out_id;
}

int Graph::reduce_spatial_sum(int x) {
  const Tensor& xv = value(x);
  check_rank4(xv, "reduce_spatial_sum");
  const int N = xv.extent(0), C = xv.extent(1);
  const long long S = static_cast<long long>(xv.extent(2)) * xv.extent(3);
  Tensor out({N, C});
  for (long long nc = 0; nc < static_cast<long long>(N) * C; ++nc) {
    double acc = 0.0;
    const double* xp = xv.data() + nc * S;
    for (long long i = 0; i < S; ++i) acc += xp[i];
    out[nc] = acc;
  }
  int out_id = emit(std::move(out), requires_grad(x), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, x, out_id, N, C, S]() {
    if (!nodes_[static_cast<size_t>(x)].requires_grad) return;
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    Tensor& gx = grad_buf(x);
    for (long long nc = 0; nc < static_cast<long long>(N) * C; ++nc) {
      const double g = go[nc];
      double* gp = gx.data() + nc * S;
      for (long long i = 0; i < S; ++i) gp[i] += g;
    }
  };
  return out_id;
}

int Graph::sum_all(int x) {
  const Tensor& xv = value(x);
  double acc = 0.0;
  for (long long i = 0; i < xv.numel(); ++i) acc += xv[i];
  int out_id = emit(Tensor::scalar(acc), requires_grad(x), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, x, out_id]() {
    if (!nodes_[static_cast<size_t>(x)].requires_grad) return;
    const double g = nodes_[static_cast<size_t>(out_id)].grad[0];
    Tensor& gx = grad_buf(x);
    for (long long i = 0; i < gx.numel(); ++i) gx[i] += g;
  };
  return out_id;
}

int Graph::stack_last2(int a, int b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_same_shape(av, bv, "stack_last2");
  Shape s = av.shape();
  s.push_back(2);
  Tensor out(s);
  for (long long i = 0; i < av.numel(); ++i) {
    out[2 * i] = av[i];
    out[2 * i + 1] = bv[i];
  }
  int out_id = emit(std::move(out), requires_grad(a) || requires_grad(b), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, a, b, out_id]() {
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    if (nodes_[static_cast<size_t>(a)].requires_grad) {
      Tensor& ga = grad_buf(a);
      for (long long i = 0; i < ga.numel(); ++i) ga[i] += go[2 * i];
    }
    if (nodes_[static_cast<size_t>(b)].requires_grad) {
      Tensor& gb = grad_buf(b);
      for (long long i = 0; i < gb.numel(); ++i) gb[i] += go[2 * i + 1];
    }
  };
  return out_id;
}

// ---------------------------------------------------------------------------
// matmul

namespace {

struct MatDims {
  int batch, M, N, K;
  int ra, ca, rb, cb;  // stored row/col extents of each operand slice
};

MatDims matmul_dims(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  if (a.rank() != b.rank() || (a.rank() != 2 && a.rank() != 3))
    throw std::invalid_argument("matmul: operands must both be rank 2 or rank 3, got " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  MatDims d{};
  int off = a.rank() == 3 ? 1 : 0;
  d.batch = off ? a.extent(0) : 1;
  if (off && b.extent(0) != d.batch)
    throw std::invalid_argument("matmul: batch mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  d.ra = a.extent(off);
  d.ca = a.extent(off + 1);
  d.rb = b.extent(off);
  d.cb = b.extent(off + 1);
  d.M = ta ? d.ca : d.ra;
  d.K = ta ? d.ra : d.ca;
  const int Kb = tb ? d.cb : d.rb;
  d.N = tb ? d.rb : d.cb;
  if (d.K != Kb)
    throw std::invalid_argument("matmul: inner extents disagree, " + shape_str(a.shape()) + (ta ? "^T" : "") +
                                " x " + shape_str(b.shape()) + (tb ? "^T" : ""));
  return d;
}

// C[M,N] += op(A) * op(B), one slice.
void gemm_acc(const double* A, bool ta, const double* B, bool tb, double* C, const MatDims& d) {
  for (int m = 0; m < d.M; ++m) {
    double* crow = C + static_cast<long long>(m) * d.N;
    for (int k = 0; k < d.K; ++k) {
      const double av = ta ? A[static_cast<long long>(k) * d.ca + m] : A[static_cast<long long>(m) * d.ca + k];
      if (!tb) {
        const double* brow = B + static_cast<long long>(k) * d.cb;
        for (int n = 0; n < d.N; ++n) crow[n] += av * brow[n];
      } else {
        for (int n = 0; n < d.N; ++n) crow[n] += av * B[static_cast<long long>(n) * d.cb + k];
      }
    }
  }
}

}  // namespace

int Graph::matmul(int a, int b, bool transpose_a, bool transpose_b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  const MatDims d = matmul_dims(av, bv, transpose_a, transpose_b);
  Shape out_shape = av.rank() == 3 ? Shape{d.batch, d.M, d.N} : Shape{d.M, d.N};
  Tensor out(out_shape);
  const long long a_sz = static_cast<long long>(d.ra) * d.ca;
  const long long b_sz = static_cast<long long>(d.rb) * d.cb;
  const long long c_sz = static_cast<long long>(d.M) * d.N;
  for (int t = 0; t < d.batch; ++t)
    gemm_acc(av.data() + t * a_sz, transpose_a, bv.data() + t * b_sz, transpose_b, out.data() + t * c_sz, d);

  int out_id = emit(std::move(out), requires_grad(a) || requires_grad(b), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, a, b, out_id, transpose_a, transpose_b, d, a_sz, b_sz,
                                                     c_sz]() {
    const Tensor& av2 = value(a);
    const Tensor& bv2 = value(b);
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    const bool need_a = nodes_[static_cast<size_t>(a)].requires_grad;
    const bool need_b = nodes_[static_cast<size_t>(b)].requires_grad;
    // dA' = G B'^T, dB' = A'^T G in op-space, then map back through the
    // transposition flags.
    for (int t = 0; t < d.batch; ++t) {
      const double* A = av2.data() + t * a_sz;
      const double* B = bv2.data() + t * b_sz;
      const double* G = go.data() + t * c_sz;
      if (need_a) {
        std::vector<double> da(static_cast<size_t>(d.M) * d.K, 0.0);
        MatDims dd{};  // G [M,N] x op(B)^T [N,K]
        dd.M = d.M;
        dd.K = d.N;
        dd.N = d.K;
        dd.ca = d.N;  // G stored [M,N]
        dd.cb = d.cb;
        // op(B)^T has entry (n,k) = B'(k,n): if !tb, B'(k,n)=B[k*cb+n] so
        // op(B)^T = B transposed in storage; reuse gemm with flag.
        gemm_acc(G, false, B, !transpose_b, da.data(), dd);
        Tensor& ga = grad_buf(a);
        double* GA = ga.data() + t * a_sz;
        if (!transpose_a) {
          for (long long i = 0; i < static_cast<long long>(d.M) * d.K; ++i) GA[i] += da[static_cast<size_t>(i)];
        } else {
          for (int m = 0; m < d.M; ++m)
            for (int k = 0; k < d.K; ++k) GA[static_cast<long long>(k) * d.ca + m] += da[static_cast<size_t>(m) * d.K + k];
        }
      }
      if (need_b) {
        std::vector<double> db(static_cast<size_t>(d.K) * d.N, 0.0);
        MatDims dd{};  // op(A)^T [K,M] x G [M,N]
        dd.M = d.K;
        dd.K = d.M;
        dd.N = d.N;
        dd.ca = d.ca;
        dd.cb = d.N;
        gemm_acc(A, !transpose_a, G, false, db.data(), dd);
        Tensor& gb = grad_buf(b);
        double* GB = gb.data() + t * b_sz;
        if (!transpose_b) {
          for (long long i = 0; i < static_cast<long long>(d.K) * d.N; ++i) GB[i] += db[static_cast<size_t>(i)];
        } else {
          for (int k = 0; k < d.K; ++k)
            for (int n = 0; n < d.N; ++n) GB[static_cast<long long>(n) * d.cb + k] += db[static_cast<size_t>(k) * d.N + n];
        }
      }
    }
  };
  return out_id;
}

// ---------------------------------------------------------------------------
// Batchnorm

int Graph::batchnorm(int x, int gamma, int beta, BatchNormStats* stats, bool training, double momentum, double eps) {
  const Tensor& xv = value(x);
  const Tensor& gv = value(gamma);
  const Tensor& bv = value(beta);
  check_rank4(xv, "batchnorm");
  const int N = xv.extent(0), C = xv.extent(1), H = xv.extent(2), W = xv.extent(3);
  if (gv.rank() != 1 || gv.extent(0) != C || bv.rank() != 1 || bv.extent(0) != C)
    throw std::invalid_argument("batchnorm: scale/shift must be [C]=" + std::to_string(C) + ", got " +
                                shape_str(gv.shape()) + " and " + shape_str(bv.shape()));
  if (!training && stats == nullptr)
    throw std::invalid_argument("batchnorm: inference mode requires running statistics");
  const long long S = static_cast<long long>(H) * W;
  const long long M = static_cast<long long>(N) * S;

  auto mean = std::make_shared<std::vector<double>>(static_cast<size_t>(C), 0.0);
  auto invstd = std::make_shared<std::vector<double>>(static_cast<size_t>(C), 0.0);
  if (training) {
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* xp = xv.data() + (static_cast<long long>(n) * C + c) * S;
        for (long long i = 0; i < S; ++i) acc += xp[i];
      }
      const double mu = acc / static_cast<double>(M);
      double var = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* xp = xv.data() + (static_cast<long long>(n) * C + c) * S;
        for (long long i = 0; i < S; ++i) {
          const double dv = xp[i] - mu;
          var += dv * dv;
        }
      }
      var /= static_cast<double>(M);
      (*mean)[static_cast<size_t>(c)] = mu;
      (*invstd)[static_cast<size_t>(c)] = 1.0 / std::sqrt(var + eps);
      if (stats) {
        stats->running_mean[c] = momentum * stats->running_mean[c] + (1.0 - momentum) * mu;
        stats->running_var[c] = momentum * stats->running_var[c] + (1.0 - momentum) * var;
      }
    }
  } else {
    for (int c = 0; c < C; ++c) {
      (*mean)[static_cast<size_t>(c)] = stats->running_mean[c];
      (*invstd)[static_cast<size_t>(c)] = 1.0 / std::sqrt(stats->running_var[c] + eps);
    }
  }

  Tensor out(xv.shape());
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double mu = (*mean)[static_cast<size_t>(c)];
      const double is = (*invstd)[static_cast<size_t>(c)];
      const double ga = gv[c], be = bv[c];
      const double* xp = xv.data() + (static_cast<long long>(n) * C + c) * S;
      double* op = out.data() + (static_cast<long long>(n) * C + c) * S;
      for (long long i = 0; i < S; ++i) op[i] = ga * ((xp[i] - mu) * is) + be;
    }

  int out_id = emit(std::move(out), requires_grad(x) || requires_grad(gamma) || requires_grad(beta), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, x, gamma, beta, out_id, mean, invstd, training, N, C,
                                                     S, M]() {
    const Tensor& xv2 = value(x);
    const Tensor& gv2 = value(gamma);
    const Tensor& go = nodes_[static_cast<size_t>(out_id)].grad;
    const bool need_x = nodes_[static_cast<size_t>(x)].requires_grad;
    const bool need_g = nodes_[static_cast<size_t>(gamma)].requires_grad;
    const bool need_b = nodes_[static_cast<size_t>(beta)].requires_grad;
    for (int c = 0; c < C; ++c) {
      const double mu = (*mean)[static_cast<size_t>(c)];
      const double is = (*invstd)[static_cast<size_t>(c)];
      double sum_g = 0.0, sum_gx = 0.0;  // sums of grad and grad*xhat
      for (int n = 0; n < N; ++n) {
        const double* xp = xv2.data() + (static_cast<long long>(n) * C + c) * S;
        const double* gp = go.data() + (static_cast<long long>(n) * C + c) * S;
        for (long long i = 0; i < S; ++i) {
          sum_g += gp[i];
          sum_gx += gp[i] * ((xp[i] - mu) * is);
        }
      }
      if (need_g) accum_at(gamma, c, sum_gx);
      if (need_b) accum_at(beta, c, sum_g);
      if (need_x) {
        Tensor& gx = grad_buf(x);
        const double ga = gv2[c];
        if (training) {
          const double mg = sum_g / static_cast<double>(M);
          const double mgx = sum_gx / static_cast<double>(M);
          for (int n = 0; n < N; ++n) {
            const double* xp = xv2.data() + (static_cast<long long>(n) * C + c) * S;
            const double* gp = go.data() + (static_cast<long long>(n) * C + c) * S;
            double* gxp = gx.data() + (static_cast<long long>(n) * C + c) * S;
            for (long long i = 0; i < S; ++i) {
              const double xhat = (xp[i] - mu) * is;
              gxp[i] += ga * is * (gp[i] - mg - xhat * mgx);
            }
          }
        } else {
          for (int n = 0; n < N; ++n) {
            const double* gp = go.data() + (static_cast<long long>(n) * C + c) * S;
            double* gxp = gx.data() + (static_cast<long long>(n) * C + c) * S;
            for (long long i = 0; i < S; ++i) gxp[i] += ga * is * gp[i];
          }
        }
      }
    }
  };
  return out_id;
}

// ---------------------------------------------------------------------------
// Losses

namespace {
void check_loss_pair(const Tensor& pr, const Tensor& gt, const char* op) {
  if (!pr.same_shape(gt))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(gt.shape()) + " vs " +
                                shape_str(pr.shape()));
  if (pr.numel() == 0) throw std::invalid_argument(std::string(op) + ": empty tensors");
}
}  // namespace

int Graph::mse_loss(int pr, int gt) {
  const Tensor& pv = value(pr);
  const Tensor& gv = value(gt);
  check_loss_pair(pv, gv, "mse_loss");
  const long long M = pv.numel();
  double acc = 0.0;
  for (long long i = 0; i < M; ++i) {
    const double d = gv[i] - pv[i];
    acc += d * d;
  }
  int out_id = emit(Tensor::scalar(acc / static_cast<double>(M)), requires_grad(pr) || requires_grad(gt), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, pr, gt, out_id, M]() {
    const Tensor& pv2 = value(pr);
    const Tensor& gv2 = value(gt);
    const double g = nodes_[static_cast<size_t>(out_id)].grad[0];
    const double k = 2.0 * g / static_cast<double>(M);
    if (nodes_[static_cast<size_t>(pr)].requires_grad) {
      Tensor& gp = grad_buf(pr);
      for (long long i = 0; i < M; ++i) gp[i] += k * (pv2[i] - gv2[i]);
    }
    if (nodes_[static_cast<size_t>(gt)].requires_grad) {
      Tensor& gg = grad_buf(gt);
      for (long long i = 0; i < M; ++i) gg[i] += k * (gv2[i] - pv2[i]);
    }
  };
  return out_id;
}

int Graph::huber_loss(int pr, int gt, double delta) {
  if (delta <= 0.0) throw std::invalid_argument("huber_loss: delta must be positive");
  const Tensor& pv = value(pr);
  const Tensor& gv = value(gt);
  check_loss_pair(pv, gv, "huber_loss");
  const long long M = pv.numel();
  double acc = 0.0;
  for (long long i = 0; i < M; ++i) {
    const double d = gv[i] - pv[i];
    const double a = std::abs(d);
    acc += a <= delta ? 0.5 * d * d : delta * (a - 0.5 * delta);
  }
  int out_id = emit(Tensor::scalar(acc / static_cast<double>(M)), requires_grad(pr) || requires_grad(gt), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, pr, gt, out_id, M, delta]() {
    const Tensor& pv2 = value(pr);
    const Tensor& gv2 = value(gt);
    const double g = nodes_[static_cast<size_t>(out_id)].grad[0];
    const bool need_p = nodes_[static_cast<size_t>(pr)].requires_grad;
    const bool need_g = nodes_[static_cast<size_t>(gt)].requires_grad;
    for (long long i = 0; i < M; ++i) {
      const double d = gv2[i] - pv2[i];
      const double dl = std::abs(d) <= delta ? d : delta * (d > 0.0 ? 1.0 : -1.0);
      const double gi = g * dl / static_cast<double>(M);
      if (need_p) accum_at(pr, i, -gi);
      if (need_g) accum_at(gt, i, gi);
    }
  };
  return out_id;
}

int Graph::wing_loss(int pr, int gt, double w, double epsilon) {
  if (w <= 0.0 || epsilon <= 0.0) throw std::invalid_argument("wing_loss: w and epsilon must be positive");
  const Tensor& pv = value(pr);
  const Tensor& gv = value(gt);
  check_loss_pair(pv, gv, "wing_loss");
  const long long M = pv.numel();
  // The linear branch offset making both branches meet at |d| = w.
  const double C = w - w * std::log(1.0 + w / epsilon);
  double acc = 0.0;
  for (long long i = 0; i < M; ++i) {
    const double a = std::abs(gv[i] - pv[i]);
    acc += a < w ? w * std::log(1.0 + a / epsilon) : a - C;
  }
  int out_id = emit(Tensor::scalar(acc / static_cast<double>(M)), requires_grad(pr) || requires_grad(gt), {});
  nodes_[static_cast<size_t>(out_id)].backward_fn = [this, pr, gt, out_id, M, w, epsilon]() {
    const Tensor& pv2 = value(pr);
    const Tensor& gv2 = value(gt);
    const double g = nodes_[static_cast<size_t>(out_id)].grad[0];
    const bool need_p = nodes_[static_cast<size_t>(pr)].requires_grad;
    const bool need_g = nodes_[static_cast<size_t>(gt)].requires_grad;
    for (long long i = 0; i < M; ++i) {
      const double d = gv2[i] - pv2[i];
      const double a = std::abs(d);
      const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      const double dl = a < w ? w * sgn / (epsilon + a) : sgn;
      const double gi = g * dl / static_cast<double>(M);
      if (need_p) accum_at(pr, i, -gi);
      if (need_g) accum_at(gt, i, gi);
    }
  };
  return out_id;
}

}  // namespace eyemark
