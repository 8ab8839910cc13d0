// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#include "wcdnet/autodiff.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "wcdnet/losses.h"
#include "wcdnet/remap.h"

namespace wcdnet::ag {

using MatRM = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

namespace {

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void()> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return n;
}

void check_4d(const Var& x, const char* op) {
  if (x->value.ndim() != 4)
    throw std::invalid_argument(std::string(op) + ": expected a 4-d tensor, got " +
                                shape_str(x->value.shape));
}

}  // namespace

Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return n;
}

Var parameter(Tensor t, std::string name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  n->name = std::move(name);
  return n;
}

void backward(const Var& root) {
  if (root->value.size() != 1)
    throw std::invalid_argument("backward: root must be scalar");
  // Topological order by iterative DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->zero_grad();
  root->grad[0] = real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn();
}

// ---------------------------------------------------------------------------
// elementwise / shape ops

Var add(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument("add: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  Var av = a, bv = b;
  auto result = make_node(std::move(out), {a, b}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, av, bv] {
    if (av->requires_grad) {
      auto& g = av->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += r->grad[i];
    }
    if (bv->requires_grad) {
      auto& g = bv->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += r->grad[i];
    }
  };
  return result;
}

Var scale(const Var& a, real s) {
  Tensor out = a->value;
  for (auto& x : out.v) x *= s;
  Var av = a;
  auto result = make_node(std::move(out), {a}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, av, s] {
    if (!av->requires_grad) return;
    auto& g = av->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += s * r->grad[i];
  };
  return result;
}

Var relu(const Var& a) {
  Tensor out = a->value;
  for (auto& x : out.v) x = std::max(x, real(0));
  Var av = a;
  auto result = make_node(std::move(out), {a}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, av] {
    if (!av->requires_grad) return;
    auto& g = av->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i)
      if (r->value[i] > real(0)) g[i] += r->grad[i];
  };
  return result;
}

Var abs_diff(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument("abs_diff: shape mismatch between branches " +
                                shape_str(a->value.shape) + " vs " +
                                shape_str(b->value.shape));
  Tensor out(a->value.shape);
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = std::fabs(a->value[i] - b->value[i]);
  Var av = a, bv = b;
  auto result = make_node(std::move(out), {a, b}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, av, bv] {
    for (int64_t i = 0; i < r->value.size(); ++i) {
      const real d = av->value[i] - bv->value[i];
      const real s = d > 0 ? real(1) : (d < 0 ? real(-1) : real(0));
      if (av->requires_grad) av->ensure_grad()[i] += s * r->grad[i];
      if (bv->requires_grad) bv->ensure_grad()[i] -= s * r->grad[i];
    }
  };
  return result;
}

Var mul_broadcast_mask(const Var& x, const Var& mask) {
  check_4d(x, "mul_broadcast_mask");
  check_4d(mask, "mul_broadcast_mask");
  const auto& xs = x->value.shape;
  const auto& ms = mask->value.shape;
  if (ms[0] != xs[0] || ms[1] != 1 || ms[2] != xs[2] || ms[3] != xs[3])
    throw std::invalid_argument("mul_broadcast_mask: mask must be (N,1,H,W) matching x");
  const int N = xs[0], C = xs[1];
  const int64_t HW = int64_t(xs[2]) * xs[3];
  Tensor out(xs);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const real* xp = x->value.data() + (int64_t(n) * C + c) * HW;
      const real* mp = mask->value.data() + int64_t(n) * HW;
      real* op = out.data() + (int64_t(n) * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) op[i] = xp[i] * mp[i];
    }
  Var xv = x, mv = mask;
  auto result = make_node(std::move(out), {x, mask}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, xv, mv, N, C, HW] {
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const real* gp = r->grad.data() + (int64_t(n) * C + c) * HW;
        const real* xp = xv->value.data() + (int64_t(n) * C + c) * HW;
        const real* mp = mv->value.data() + int64_t(n) * HW;
        if (xv->requires_grad) {
          real* gx = xv->ensure_grad().data() + (int64_t(n) * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) gx[i] += gp[i] * mp[i];
        }
        if (mv->requires_grad) {
          real* gm = mv->ensure_grad().data() + int64_t(n) * HW;
          for (int64_t i = 0; i < HW; ++i) gm[i] += gp[i] * xp[i];
        }
      }
  };
  return result;
}

Var concat_channels(const Var& a, const Var& b) {
  check_4d(a, "concat_channels");
  check_4d(b, "concat_channels");
  const auto& as = a->value.shape;
  const auto& bs = b->value.shape;
  if (as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3])
    throw std::invalid_argument("concat_channels: incompatible shapes");
  const int N = as[0], Ca = as[1], Cb = bs[1];
  const int64_t HW = int64_t(as[2]) * as[3];
  Tensor out({N, Ca + Cb, as[2], as[3]});
  for (int n = 0; n < N; ++n) {
    std::copy_n(a->value.data() + int64_t(n) * Ca * HW, Ca * HW,
                out.data() + int64_t(n) * (Ca + Cb) * HW);
    std::copy_n(b->value.data() + int64_t(n) * Cb * HW, Cb * HW,
                out.data() + int64_t(n) * (Ca + Cb) * HW + Ca * HW);
  }
  Var av = a, bv = b;
  auto result = make_node(std::move(out), {a, b}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, av, bv, N, Ca, Cb, HW] {
    for (int n = 0; n < N; ++n) {
      const real* gp = r->grad.data() + int64_t(n) * (Ca + Cb) * HW;
      if (av->requires_grad) {
        real* ga = av->ensure_grad().data() + int64_t(n) * Ca * HW;
        for (int64_t i = 0; i < Ca * HW; ++i) ga[i] += gp[i];
      }
      if (bv->requires_grad) {
        real* gb = bv->ensure_grad().data() + int64_t(n) * Cb * HW;
        for (int64_t i = 0; i < Cb * HW; ++i) gb[i] += gp[Ca * HW + i];
      }
    }
  };
  return result;
}

Var concat_features(const Var& a, const Var& b) {
  if (a->value.ndim() != 2 || b->value.ndim() != 2 ||
      a->value.dim(0) != b->value.dim(0))
    throw std::invalid_argument("concat_features: incompatible shapes");
  const int N = a->value.dim(0), Da = a->value.dim(1), Db = b->value.dim(1);
  Tensor out({N, Da + Db});
  for (int n = 0; n < N; ++n) {
    std::copy_n(a->value.data() + int64_t(n) * Da, Da,
                out.data() + int64_t(n) * (Da + Db));
    std::copy_n(b->value.data() + int64_t(n) * Db, Db,
                out.data() + int64_t(n) * (Da + Db) + Da);
  }
  Var av = a, bv = b;
  auto result = make_node(std::move(out), {a, b}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, av, bv, N, Da, Db] {
    for (int n = 0; n < N; ++n) {
      const real* gp = r->grad.data() + int64_t(n) * (Da + Db);
      if (av->requires_grad) {
        real* ga = av->ensure_grad().data() + int64_t(n) * Da;
        for (int i = 0; i < Da; ++i) ga[i] += gp[i];
      }
      if (bv->requires_grad) {
        real* gb = bv->ensure_grad().data() + int64_t(n) * Db;
        for (int i = 0; i < Db; ++i) gb[i] += gp[Da + i];
      }
    }
  };
  return result;
}

// ---------------------------------------------------------------------------
// conv stack

namespace {

// col has shape (C*k*k, oH*oW), one column per output pixel.
void im2col(const real* x, int C, int H, int W, int k, int stride, int pad,
            int oH, int oW, real* col) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        real* row = col + (int64_t(c) * k * k + ky * k + kx) * oH * oW;
        for (int oy = 0; oy < oH; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) {
            std::fill_n(row + int64_t(oy) * oW, oW, real(0));
            continue;
          }
          const real* src = x + (int64_t(c) * H + iy) * W;
          for (int ox = 0; ox < oW; ++ox) {
            const int ix = ox * stride + kx - pad;
            row[int64_t(oy) * oW + ox] = (ix < 0 || ix >= W) ? real(0) : src[ix];
          }
        }
      }
    }
  }
}

void col2im_acc(const real* col, int C, int H, int W, int k, int stride,
                int pad, int oH, int oW, real* gx) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const real* row = col + (int64_t(c) * k * k + ky * k + kx) * oH * oW;
        for (int oy = 0; oy < oH; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          real* dst = gx + (int64_t(c) * H + iy) * W;
          for (int ox = 0; ox < oW; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < W) dst[ix] += row[int64_t(oy) * oW + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  check_4d(x, "conv2d");
  const auto& xs = x->value.shape;
  const auto& ws = w->value.shape;
  if (w->value.ndim() != 4 || ws[1] != xs[1])
    throw std::invalid_argument("conv2d: weight shape " + shape_str(ws) +
                                " incompatible with input " + shape_str(xs));
  const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const int O = ws[0], k = ws[2];
  if (ws[3] != k) throw std::invalid_argument("conv2d: non-square kernel");
  if (b->value.size() != O) throw std::invalid_argument("conv2d: bias size mismatch");
  const int oH = (H + 2 * pad - k) / stride + 1;
  const int oW = (W + 2 * pad - k) / stride + 1;
  const int64_t kk = int64_t(C) * k * k, oHW = int64_t(oH) * oW;

  Tensor out({N, O, oH, oW});
  MatRM col(kk, oHW);
  CMapRM Wm(w->value.data(), O, kk);
  for (int n = 0; n < N; ++n) {
    im2col(x->value.data() + int64_t(n) * C * H * W, C, H, W, k, stride, pad,
           oH, oW, col.data());
    MapRM om(out.data() + int64_t(n) * O * oHW, O, oHW);
    om.noalias() = Wm * col;
    for (int o = 0; o < O; ++o) om.row(o).array() += b->value[o];
  }

  Var xv = x, wv = w, bv = b;
  auto result = make_node(std::move(out), {x, w, b}, nullptr);
  Node* r = result.get();
  // im2col is recomputed here rather than cached; caching it for every conv
  // in the graph costs far more memory than the recompute costs time.
  result->backward_fn = [r, xv, wv, bv, N, C, H, W, O, k, stride, pad,
                         oH, oW, kk, oHW] {
    CMapRM Wm(wv->value.data(), O, kk);
    MatRM col(kk, oHW), dcol(kk, oHW);
    for (int n = 0; n < N; ++n) {
      CMapRM gm(r->grad.data() + int64_t(n) * O * oHW, O, oHW);
      if (wv->requires_grad) {
        im2col(xv->value.data() + int64_t(n) * C * H * W, C, H, W, k, stride,
               pad, oH, oW, col.data());
        MapRM gw(wv->ensure_grad().data(), O, kk);
        gw.noalias() += gm * col.transpose();
      }
      if (bv->requires_grad) {
        auto& gb = bv->ensure_grad();
        for (int o = 0; o < O; ++o) gb[o] += gm.row(o).sum();
      }
      if (xv->requires_grad) {
        dcol.noalias() = Wm.transpose() * gm;
        col2im_acc(dcol.data(), C, H, W, k, stride, pad, oH, oW,
                   xv->ensure_grad().data() + int64_t(n) * C * H * W);
      }
    }
  };
  return result;
}

Var maxpool2x2(const Var& x) {
  check_4d(x, "maxpool2x2");
  const auto& xs = x->value.shape;
  const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  if (H % 2 || W % 2) throw std::invalid_argument("maxpool2x2: odd spatial size");
  const int oH = H / 2, oW = W / 2;
  Tensor out({N, C, oH, oW});
  auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
  int64_t oi = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const real* xp = x->value.data() + (int64_t(n) * C + c) * H * W;
      for (int oy = 0; oy < oH; ++oy)
        for (int ox = 0; ox < oW; ++ox, ++oi) {
          int64_t best = int64_t(2 * oy) * W + 2 * ox;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int64_t idx = int64_t(2 * oy + dy) * W + 2 * ox + dx;
              if (xp[idx] > xp[best]) best = idx;
            }
          out[oi] = xp[best];
          (*argmax)[oi] = (int64_t(n) * C + c) * H * W + best;
        }
    }
  Var xv = x;
  auto result = make_node(std::move(out), {x}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, xv, argmax] {
    if (!xv->requires_grad) return;
    auto& g = xv->ensure_grad();
    for (int64_t i = 0; i < r->value.size(); ++i) g[(*argmax)[i]] += r->grad[i];
  };
  return result;
}

Var upsample_nearest2x(const Var& x) {
  check_4d(x, "upsample_nearest2x");
  const auto& xs = x->value.shape;
  const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  Tensor out({N, C, 2 * H, 2 * W});
  for (int nc = 0; nc < N * C; ++nc) {
    const real* xp = x->value.data() + int64_t(nc) * H * W;
    real* op = out.data() + int64_t(nc) * 4 * H * W;
    for (int y = 0; y < 2 * H; ++y)
      for (int x2 = 0; x2 < 2 * W; ++x2)
        op[int64_t(y) * 2 * W + x2] = xp[int64_t(y / 2) * W + x2 / 2];
  }
  Var xv = x;
  auto result = make_node(std::move(out), {x}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, xv, N, C, H, W] {
    if (!xv->requires_grad) return;
    auto& g = xv->ensure_grad();
    for (int nc = 0; nc < N * C; ++nc) {
      real* gp = g.data() + int64_t(nc) * H * W;
      const real* rp = r->grad.data() + int64_t(nc) * 4 * H * W;
      for (int y = 0; y < 2 * H; ++y)
        for (int x2 = 0; x2 < 2 * W; ++x2)
          gp[int64_t(y / 2) * W + x2 / 2] += rp[int64_t(y) * 2 * W + x2];
    }
  };
  return result;
}

Var global_avg_pool(const Var& x) {
  check_4d(x, "global_avg_pool");
  const auto& xs = x->value.shape;
  const int N = xs[0], C = xs[1];
  const int64_t HW = int64_t(xs[2]) * xs[3];
  Tensor out({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const real* xp = x->value.data() + (int64_t(n) * C + c) * HW;
      real s = 0;
      for (int64_t i = 0; i < HW; ++i) s += xp[i];
      out[int64_t(n) * C + c] = s / real(HW);
    }
  Var xv = x;
  auto result = make_node(std::move(out), {x}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, xv, N, C, HW] {
    if (!xv->requires_grad) return;
    auto& g = xv->ensure_grad();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const real gv = r->grad[int64_t(n) * C + c] / real(HW);
        real* gp = g.data() + (int64_t(n) * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) gp[i] += gv;
      }
  };
  return result;
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               Tensor* running_mean, Tensor* running_var, bool training,
               real momentum, real eps) {
  check_4d(x, "batch_norm");
  const auto& xs = x->value.shape;
  const int N = xs[0], C = xs[1];
  const int64_t HW = int64_t(xs[2]) * xs[3];
  const int64_t M = int64_t(N) * HW;  // elements per channel
  if (gamma->value.size() != C || beta->value.size() != C)
    throw std::invalid_argument("batch_norm: affine parameter size mismatch");

  Tensor mean({C}), inv_std({C});
  if (training) {
    for (int c = 0; c < C; ++c) {
      double mu = 0;
      for (int n = 0; n < N; ++n) {
        const real* xp = x->value.data() + (int64_t(n) * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) mu += xp[i];
      }
      mu /= double(M);
      double var = 0;
      for (int n = 0; n < N; ++n) {
        const real* xp = x->value.data() + (int64_t(n) * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) {
          const double d = xp[i] - mu;
          var += d * d;
        }
      }
      var /= double(M);
      mean[c] = real(mu);
      inv_std[c] = real(1.0 / std::sqrt(var + double(eps)));
      (*running_mean)[c] = (1 - momentum) * (*running_mean)[c] + momentum * real(mu);
      (*running_var)[c] = (1 - momentum) * (*running_var)[c] + momentum * real(var);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = (*running_mean)[c];
      inv_std[c] = real(1) / std::sqrt((*running_var)[c] + eps);
    }
  }

  Tensor out(xs);
  auto xhat = std::make_shared<Tensor>(xs);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const real* xp = x->value.data() + (int64_t(n) * C + c) * HW;
      real* hp = xhat->data() + (int64_t(n) * C + c) * HW;
      real* op = out.data() + (int64_t(n) * C + c) * HW;
      const real g = gamma->value[c], bb = beta->value[c];
      for (int64_t i = 0; i < HW; ++i) {
        hp[i] = (xp[i] - mean[c]) * inv_std[c];
        op[i] = g * hp[i] + bb;
      }
    }

  Var xv = x, gv = gamma, bv = beta;
  auto istd = std::make_shared<Tensor>(std::move(inv_std));
  auto result = make_node(std::move(out), {x, gamma, beta}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, xv, gv, bv, xhat, istd, N, C, HW, M, training] {
    for (int c = 0; c < C; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (int n = 0; n < N; ++n) {
        const real* gp = r->grad.data() + (int64_t(n) * C + c) * HW;
        const real* hp = xhat->data() + (int64_t(n) * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) {
          sum_dy += gp[i];
          sum_dy_xhat += double(gp[i]) * hp[i];
        }
      }
      if (gv->requires_grad) gv->ensure_grad()[c] += real(sum_dy_xhat);
      if (bv->requires_grad) bv->ensure_grad()[c] += real(sum_dy);
      if (!xv->requires_grad) continue;
      const real g = gv->value[c] * (*istd)[c];
      const real mean_dy = real(sum_dy / double(M));
      const real mean_dy_xhat = real(sum_dy_xhat / double(M));
      for (int n = 0; n < N; ++n) {
        const real* gp = r->grad.data() + (int64_t(n) * C + c) * HW;
        const real* hp = xhat->data() + (int64_t(n) * C + c) * HW;
        real* gx = xv->ensure_grad().data() + (int64_t(n) * C + c) * HW;
        if (training) {
          for (int64_t i = 0; i < HW; ++i)
            gx[i] += g * (gp[i] - mean_dy - hp[i] * mean_dy_xhat);
        } else {
          for (int64_t i = 0; i < HW; ++i) gx[i] += g * gp[i];
        }
      }
    }
  };
  return result;
}

// ---------------------------------------------------------------------------
// dense stack

Var dense(const Var& x, const Var& w, const Var& b) {
  if (x->value.ndim() != 2 || w->value.ndim() != 2)
    throw std::invalid_argument("dense: expects 2-d input and weights");
  const int N = x->value.dim(0), D = x->value.dim(1), O = w->value.dim(0);
  if (w->value.dim(1) != D || b->value.size() != O)
    throw std::invalid_argument("dense: shape mismatch");
  Tensor out({N, O});
  CMapRM xm(x->value.data(), N, D);
  CMapRM wm(w->value.data(), O, D);
  MapRM om(out.data(), N, O);
  om.noalias() = xm * wm.transpose();
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o) om(n, o) += b->value[o];
  Var xv = x, wv = w, bv = b;
  auto result = make_node(std::move(out), {x, w, b}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, xv, wv, bv, N, D, O] {
    CMapRM gm(r->grad.data(), N, O);
    CMapRM xm(xv->value.data(), N, D);
    CMapRM wm(wv->value.data(), O, D);
    if (wv->requires_grad)
      MapRM(wv->ensure_grad().data(), O, D).noalias() += gm.transpose() * xm;
    if (bv->requires_grad) {
      auto& gb = bv->ensure_grad();
      for (int o = 0; o < O; ++o) gb[o] += gm.col(o).sum();
    }
    if (xv->requires_grad)
      MapRM(xv->ensure_grad().data(), N, D).noalias() += gm * wm;
  };
  return result;
}

Var softmax_rows(const Var& x) {
  if (x->value.ndim() != 2) throw std::invalid_argument("softmax_rows: expects 2-d");
  const int N = x->value.dim(0), C = x->value.dim(1);
  Tensor out({N, C});
  for (int n = 0; n < N; ++n) {
    const real* xp = x->value.data() + int64_t(n) * C;
    real* op = out.data() + int64_t(n) * C;
    real mx = xp[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, xp[c]);
    real sum = 0;
    for (int c = 0; c < C; ++c) {
      op[c] = std::exp(xp[c] - mx);
      sum += op[c];
    }
    for (int c = 0; c < C; ++c) op[c] /= sum;
  }
  Var xv = x;
  auto result = make_node(std::move(out), {x}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, xv, N, C] {
    if (!xv->requires_grad) return;
    auto& g = xv->ensure_grad();
    for (int n = 0; n < N; ++n) {
      const real* sp = r->value.data() + int64_t(n) * C;
      const real* gp = r->grad.data() + int64_t(n) * C;
      real dot = 0;
      for (int c = 0; c < C; ++c) dot += sp[c] * gp[c];
      for (int c = 0; c < C; ++c) g[int64_t(n) * C + c] += sp[c] * (gp[c] - dot);
    }
  };
  return result;
}

// ---------------------------------------------------------------------------
// model-specific ops

Var remap_mask(const Var& raw, real alpha) {
  check_4d(raw, "remap_mask");
  const auto& xs = raw->value.shape;
  if (xs[1] != 1) throw std::invalid_argument("remap_mask: expects single channel");
  const int N = xs[0];
  const int64_t HW = int64_t(xs[2]) * xs[3];
  Tensor out(xs);
  auto ctxs = std::make_shared<std::vector<RemapContext<real>>>(N);
  for (int n = 0; n < N; ++n)
    (*ctxs)[n] = remap_forward(raw->value.data() + n * HW, HW, alpha,
                               out.data() + n * HW);
  Var rv = raw;
  auto result = make_node(std::move(out), {raw}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, rv, ctxs, N, HW, alpha] {
    if (!rv->requires_grad) return;
    auto& g = rv->ensure_grad();
    for (int n = 0; n < N; ++n)
      remap_backward(rv->value.data() + n * HW, HW, alpha, (*ctxs)[n],
                     r->value.data() + n * HW, r->grad.data() + n * HW,
                     g.data() + n * HW);
  };
  return result;
}

// ---------------------------------------------------------------------------
// losses

Var categorical_crossentropy(const Var& pred, const Tensor& one_hot) {
  if (!pred->value.same_shape(one_hot))
    throw std::invalid_argument("categorical_crossentropy: shape mismatch");
  const int N = pred->value.dim(0), C = pred->value.dim(1);
  double loss = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const double p = std::clamp(double(pred->value[int64_t(n) * C + c]),
                                  kProbClamp, 1.0);
      loss -= double(one_hot[int64_t(n) * C + c]) * std::log(p);
    }
  Tensor out = Tensor::from({1}, {real(loss / N)});
  Var pv = pred;
  auto target = std::make_shared<Tensor>(one_hot);
  auto result = make_node(std::move(out), {pred}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, pv, target, N, C] {
    if (!pv->requires_grad) return;
    auto& g = pv->ensure_grad();
    const real gy = r->grad[0] / real(N);
    for (int64_t i = 0; i < pv->value.size(); ++i) {
      const real p = pv->value[i];
      if (p > real(kProbClamp) && p < real(1))
        g[i] += -gy * (*target)[i] / p;
    }
  };
  return result;
}

Var conditional_bce(const Var& pred_mask, const Tensor& gt_mask) {
  if (!pred_mask->value.same_shape(gt_mask))
    throw std::invalid_argument("conditional_bce: shape mismatch");
  const int N = pred_mask->value.dim(0);
  const int64_t S = pred_mask->value.size() / N;
  auto gt = std::make_shared<Tensor>(gt_mask);
  double loss = 0;
  std::vector<char> gated(N, 0);
  for (int n = 0; n < N; ++n) {
    bool any = false;
    for (int64_t i = 0; i < S; ++i) {
      const real g = gt_mask[n * S + i];
      if (g != 0 && g != 1)
        throw std::invalid_argument("conditional_bce: gt mask not binary");
      if (g == 1) any = true;
    }
    gated[n] = any ? 1 : 0;
    if (!any) continue;
    double l = 0;
    for (int64_t i = 0; i < S; ++i) {
      const double p = std::clamp(double(pred_mask->value[n * S + i]),
                                  kProbClamp, 1.0 - kProbClamp);
      const double g = gt_mask[n * S + i];
      l -= g * std::log(p) + (1 - g) * std::log(1 - p);
    }
    loss += l / double(S);
  }
  Tensor out = Tensor::from({1}, {real(loss / N)});
  Var pv = pred_mask;
  auto gates = std::make_shared<std::vector<char>>(std::move(gated));
  auto result = make_node(std::move(out), {pred_mask}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, pv, gt, gates, N, S] {
    if (!pv->requires_grad) return;
    auto& gx = pv->ensure_grad();
    const real gy = r->grad[0] / real(N) / real(S);
    for (int n = 0; n < N; ++n) {
      if (!(*gates)[n]) continue;  // exact zero gradient for empty gt
      for (int64_t i = 0; i < S; ++i) {
        const real p = pv->value[n * S + i];
        if (p <= real(kProbClamp) || p >= real(1.0 - kProbClamp)) continue;
        const real g = (*gt)[n * S + i];
        gx[n * S + i] += gy * (-g / p + (1 - g) / (1 - p));
      }
    }
  };
  return result;
}

Var add_scalars(const Var& a, const Var& b) {
  if (a->value.size() != 1 || b->value.size() != 1)
    throw std::invalid_argument("add_scalars: expects scalars");
  Tensor out = Tensor::from({1}, {a->value[0] + b->value[0]});
  Var av = a, bv = b;
  auto result = make_node(std::move(out), {a, b}, nullptr);
  Node* r = result.get();
  result->backward_fn = [r, av, bv] {
    if (av->requires_grad) av->ensure_grad()[0] += r->grad[0];
    if (bv->requires_grad) bv->ensure_grad()[0] += r->grad[0];
  };
  return result;
}

}  // namespace wcdnet::ag
