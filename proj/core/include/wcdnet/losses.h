// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

namespace wcdnet {

constexpr double kProbClamp = 1e-7;

/// Loss components of one training example or batch. total is always the
/// plain sum of the two terms (optionally re-weighted through LossWeights).
struct LossBundle {
  double image_label_loss = 0;
  double mask_loss = 0;
  double total = 0;
};

struct LossWeights {
  double image_label = 1.0;
  double mask = 1.0;
};

enum class SupervisionMode { weak, full_multitask };

// Categorical crossentropy: -sum(target * log(clamp(pred, 1e-7, 1))).
template <typename T>
T image_label_loss(const std::vector<T>& pred, const std::vector<T>& target) {
  if (pred.size() != target.size())
    throw std::invalid_argument("image_label_loss: length mismatch");
  T loss = T(0);
  for (size_t i = 0; i < pred.size(); ++i) {
    const T p = std::clamp(pred[i], T(kProbClamp), T(1));
    loss -= target[i] * std::log(p);
  }
  return loss;
}

// d(loss)/d(pred), accumulated into gx. Zero where the clamp is active.
template <typename T>
void image_label_loss_grad(const std::vector<T>& pred,
                           const std::vector<T>& target, T gy,
                           std::vector<T>& gx) {
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] > T(kProbClamp) && pred[i] < T(1))
      gx[i] += -gy * target[i] / pred[i];
  }
}

// Conditional mask loss: pixel-mean binary crossentropy, hard-gated to 0
// (value and gradient) when the ground-truth mask is all zero.
template <typename T>
T conditional_mask_loss(const std::vector<T>& pred_mask,
                        const std::vector<T>& gt_mask) {
  if (pred_mask.size() != gt_mask.size())
    throw std::invalid_argument("conditional_mask_loss: shape mismatch");
  if (pred_mask.empty())
    throw std::invalid_argument("conditional_mask_loss: empty mask");
  bool any_change = false;
  for (T g : gt_mask) {
    if (g != T(0) && g != T(1))
      throw std::invalid_argument("conditional_mask_loss: gt mask not binary");
    if (g == T(1)) any_change = true;
  }
  if (!any_change) return T(0);
  T loss = T(0);
  for (size_t i = 0; i < pred_mask.size(); ++i) {
    const T p = std::clamp(pred_mask[i], T(kProbClamp), T(1 - kProbClamp));
    loss -= gt_mask[i] * std::log(p) + (T(1) - gt_mask[i]) * std::log(T(1) - p);
  }
  return loss / T(pred_mask.size());
}

template <typename T>
void conditional_mask_loss_grad(const std::vector<T>& pred_mask,
                                const std::vector<T>& gt_mask, T gy,
                                std::vector<T>& gx) {
  bool any_change = false;
  for (T g : gt_mask)
    if (g == T(1)) any_change = true;
  if (!any_change) return;  // exact zero gradient
  const T inv_n = T(1) / T(pred_mask.size());
  for (size_t i = 0; i < pred_mask.size(); ++i) {
    const T p = pred_mask[i];
    if (p <= T(kProbClamp) || p >= T(1 - kProbClamp)) continue;
    gx[i] += gy * inv_n * (-gt_mask[i] / p + (T(1) - gt_mask[i]) / (T(1) - p));
  }
}

// Combined loss per supervision mode. target_mask must be present exactly in
// full_multitask mode.
template <typename T>
LossBundle total_loss(const std::vector<T>& pred_probs,
                      const std::vector<T>& target_label,
                      const std::vector<T>& pred_mask,
                      const std::optional<std::vector<T>>& target_mask,
                      SupervisionMode mode,
                      LossWeights weights = {}) {
  LossBundle out;
  out.image_label_loss =
      weights.image_label * double(image_label_loss(pred_probs, target_label));
  if (mode == SupervisionMode::full_multitask) {
    if (!target_mask)
      throw std::invalid_argument("total_loss: full_multitask requires a target mask");
    out.mask_loss =
        weights.mask * double(conditional_mask_loss(pred_mask, *target_mask));
  } else {
    if (target_mask)
      throw std::invalid_argument("total_loss: weak mode takes no target mask");
    out.mask_loss = 0;
  }
  out.total = out.image_label_loss + out.mask_loss;
  return out;
}

}  // namespace wcdnet
