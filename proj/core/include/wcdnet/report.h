// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "wcdnet/data.h"
#include "wcdnet/metrics.h"
#include "wcdnet/model.h"
#include "wcdnet/train.h"

namespace wcdnet {

// Evaluates the model on the split and writes metrics.json, metrics.csv and
// panels/<pair_id>.png (previous | current | predicted mask | ground truth,
// black when absent) for the first panel_count pairs.
MetricsReport write_report(Model& model, const DatasetManifest& split,
                           const ClassMapping& mapping,
                           const std::string& out_dir, int panel_count = 8);

// One side-by-side panel image for a single pair.
Image make_panel(const Image& prev, const Image& curr,
                 const std::vector<uint8_t>& pred_mask,
                 const std::vector<uint8_t>* gt_mask, int height, int width);

}  // namespace wcdnet
