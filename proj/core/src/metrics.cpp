// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#include "wcdnet/metrics.h"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace wcdnet {

ConfusionCounts confusion(const std::vector<uint8_t>& pred,
                          const std::vector<uint8_t>& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("confusion: shape mismatch");
  ConfusionCounts c;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] > 1 || gt[i] > 1)
      throw std::invalid_argument("confusion: non-binary input");
    if (gt[i]) {
      pred[i] ? ++c.tp : ++c.fn;
    } else {
      pred[i] ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

namespace {
double iou_of(int64_t tp, int64_t fp, int64_t fn) {
  const int64_t denom = tp + fp + fn;
  if (denom == 0) return (tp + fp) == 0 ? 1.0 : 0.0;
  return double(tp) / double(denom);
}
}  // namespace

double iou_change(const ConfusionCounts& c) { return iou_of(c.tp, c.fp, c.fn); }

double iou_background(const ConfusionCounts& c) {
  // background as positive class: TP'=tn, FP'=fn, FN'=fp
  return iou_of(c.tn, c.fn, c.fp);
}

double miou(const ConfusionCounts& c) {
  return 0.5 * (iou_change(c) + iou_background(c));
}

double average_precision(const std::vector<double>& scores,
                         const std::vector<uint8_t>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("average_precision: size mismatch");
  const int64_t num_pos = std::count(labels.begin(), labels.end(), uint8_t(1));
  if (num_pos == 0)
    throw std::invalid_argument("average_precision: no positive labels");
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  double ap = 0, prev_recall = 0;
  int64_t tp = 0, seen = 0;
  size_t i = 0;
  while (i < order.size()) {
    // advance over the whole group of equal scores (one threshold)
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      ++seen;
      if (labels[order[i]]) ++tp;
      ++i;
    }
    const double precision = double(tp) / double(seen);
    const double recall = double(tp) / double(num_pos);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

KappaDiceTotalAcc kappa_dice_totalacc(const ConfusionCounts& c) {
  const double total = double(c.total());
  if (total <= 0) throw std::invalid_argument("kappa_dice_totalacc: empty counts");
  KappaDiceTotalAcc out;
  const double po = double(c.tp + c.tn) / total;
  const double pe = (double(c.tp + c.fp) * double(c.tp + c.fn) +
                     double(c.tn + c.fn) * double(c.tn + c.fp)) /
                    (total * total);
  if (pe == 1.0) {
    out.kappa = (po == 1.0) ? 1.0 : 0.0;
  } else {
    out.kappa = (po - pe) / (1.0 - pe);
  }
  const double dice_denom = double(2 * c.tp + c.fp + c.fn);
  out.dice = dice_denom > 0 ? 2.0 * double(c.tp) / dice_denom : 1.0;
  out.total_accuracy = po;
  return out;
}

double topk_accuracy(const std::vector<std::vector<double>>& probabilities,
                     const std::vector<int>& labels, int k) {
  if (probabilities.size() != labels.size())
    throw std::invalid_argument("topk_accuracy: size mismatch");
  if (probabilities.empty()) throw std::invalid_argument("topk_accuracy: empty");
  int64_t hits = 0;
  for (size_t s = 0; s < probabilities.size(); ++s) {
    const auto& p = probabilities[s];
    if (k > int(p.size()))
      throw std::invalid_argument("topk_accuracy: k exceeds class count");
    const int gt = labels[s];
    if (gt < 0 || gt >= int(p.size()))
      throw std::invalid_argument("topk_accuracy: label out of range");
    // rank of gt = number of classes strictly better, ties to lower index
    int rank = 0;
    for (int c = 0; c < int(p.size()); ++c) {
      if (c == gt) continue;
      if (p[c] > p[gt] || (p[c] == p[gt] && c < gt)) ++rank;
    }
    if (rank < k) ++hits;
  }
  return double(hits) / double(probabilities.size());
}

std::string MetricsReport::to_json() const {
  nlohmann::json j{{"miou", miou},
                   {"miou_change_class", miou_change_class},
                   {"ap", ap},
                   {"accuracy", accuracy},
                   {"top1", top1},
                   {"top5", top5},
                   {"kappa", kappa},
                   {"dice", dice},
                   {"total_accuracy", total_accuracy}};
  return j.dump(2);
}

std::string MetricsReport::csv_header() {
  return "miou,miou_change_class,ap,accuracy,top1,top5,kappa,dice,total_accuracy";
}

std::string MetricsReport::csv_row() const {
  std::ostringstream os;
  os.precision(10);
  os << miou << ',' << miou_change_class << ',' << ap << ',' << accuracy << ','
     << top1 << ',' << top5 << ',' << kappa << ',' << dice << ','
     << total_accuracy;
  return os.str();
}

}  // namespace wcdnet
