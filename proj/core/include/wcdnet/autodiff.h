// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "wcdnet/tensor.h"

namespace wcdnet::ag {

// Tape-style reverse-mode autodiff. A forward pass builds a fresh graph of
// Nodes; backward() walks it in reverse topological order. Parameter nodes
// are long-lived and reused across steps.
class Node;
using Var = std::shared_ptr<Node>;

class Node {
 public:
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::string name;  // set for parameters, empty for intermediates
  std::vector<Var> parents;
  std::function<void()> backward_fn;  // accumulates into parents' grads

  Tensor& ensure_grad() {
    if (grad.shape != value.shape) grad = Tensor(value.shape);
    return grad;
  }
  void zero_grad() {
    if (grad.shape != value.shape) grad = Tensor(value.shape);
    grad.fill(0);
  }
};

Var constant(Tensor t);
Var parameter(Tensor t, std::string name);

// Runs reverse-mode accumulation from a scalar root (seeds d(root)/d(root)=1).
void backward(const Var& root);

// ---- elementwise / shape ops ----
Var add(const Var& a, const Var& b);
Var scale(const Var& a, real s);
Var relu(const Var& a);
Var abs_diff(const Var& a, const Var& b);       // |a - b|, symmetric in (a,b)
Var mul_broadcast_mask(const Var& x, const Var& mask);  // (N,C,H,W)*(N,1,H,W)
Var concat_channels(const Var& a, const Var& b);
Var concat_features(const Var& a, const Var& b);    // (N,Da)+(N,Db)->(N,Da+Db)

// ---- conv stack ----
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var maxpool2x2(const Var& x);
Var upsample_nearest2x(const Var& x);
Var global_avg_pool(const Var& x);  // (N,C,H,W) -> (N,C)

// Batch normalization over (N,H,W) per channel. Running statistics live
// outside the graph and are updated in training mode.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               Tensor* running_mean, Tensor* running_var, bool training,
               real momentum = real(0.1), real eps = real(1e-5));

// ---- dense stack ----
Var dense(const Var& x, const Var& w, const Var& b);  // x:(N,D) w:(O,D)
Var softmax_rows(const Var& x);

// ---- model-specific ops ----
// Min-max remapping (per sample over the spatial extent) followed by a
// scaled sigmoid; constant inputs map to 0.5 with zero gradient.
Var remap_mask(const Var& raw, real alpha);

// ---- losses (reduce to scalar, shape {1}) ----
// -sum(target * log(clamp(pred, 1e-7, 1))) averaged over the batch.
Var categorical_crossentropy(const Var& pred_probs, const Tensor& one_hot);
// Pixel-mean BCE per sample, zeroed (value and gradient) for samples whose
// ground-truth mask is empty; averaged over the batch.
Var conditional_bce(const Var& pred_mask, const Tensor& gt_mask);
Var add_scalars(const Var& a, const Var& b);

}  // namespace wcdnet::ag
