// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace wcdnet {

struct ConfusionCounts {
  int64_t tp = 0, tn = 0, fp = 0, fn = 0;
  int64_t total() const { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

struct MetricsReport {
  double miou = 0;               // mean over {change, background}
  double miou_change_class = 0;  // change-class IoU only
  double ap = 0;
  double accuracy = 0;
  double top1 = 0;
  double top5 = 0;
  double kappa = 0;
  double dice = 0;
  double total_accuracy = 0;

  std::string to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

// Exact pixel/sample-level confusion counts. Inputs must be 0/1.
ConfusionCounts confusion(const std::vector<uint8_t>& pred,
                          const std::vector<uint8_t>& gt);

// IoU per the usual TP/(TP+FP+FN). A class with zero denominator scores 1
// when nothing was predicted for it either, else 0.
double iou_change(const ConfusionCounts& c);
double iou_background(const ConfusionCounts& c);
double miou(const ConfusionCounts& c);  // mean of the two

// Interpolation-free AP over thresholds at each distinct score, descending.
// Throws if labels contain no positive.
double average_precision(const std::vector<double>& scores,
                         const std::vector<uint8_t>& labels);

struct KappaDiceTotalAcc {
  double kappa = 0, dice = 0, total_accuracy = 0;
};
KappaDiceTotalAcc kappa_dice_totalacc(const ConfusionCounts& c);

// Fraction of samples whose label ranks in the top k classes by probability;
// ties resolved toward the lower class index.
double topk_accuracy(const std::vector<std::vector<double>>& probabilities,
                     const std::vector<int>& labels, int k);

}  // namespace wcdnet
