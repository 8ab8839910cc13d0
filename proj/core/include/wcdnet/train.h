// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "wcdnet/checkpoint.h"
#include "wcdnet/data.h"
#include "wcdnet/metrics.h"
#include "wcdnet/model.h"

namespace wcdnet {

struct TrainConfig {
  double alpha_train = 32.0;     // stage 1, CRF removed
  double alpha_finetune = 16.0;  // stage 2, CRF inserted
  double learning_rate = 1e-4;
  double finetune_lr_factor = 0.1;
  int batch_size = 8;
  int max_epochs = 30;
  uint64_t seed = 1;
  int early_stop_patience = 10;
  bool augment = false;  // pairwise flips + brightness jitter
  std::string optimizer = "adam";
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights loss_weights;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

// Maps (possibly sparse) dataset label ids onto dense class indices.
struct ClassMapping {
  std::vector<int> ids;  // sorted label ids, index = class index
  int unchanged_index = 0;

  static ClassMapping from_manifest(const DatasetManifest& m);
  int index_of(int label_id) const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0, train_image_label_loss = 0, train_mask_loss = 0;
  double val_top1 = 0;
  double val_miou_change = -1;  // -1 when the split has no ground-truth masks
};

struct TrainResult {
  std::string best_checkpoint;
  std::string last_checkpoint;
  std::vector<EpochLog> log;
  double best_val_top1 = 0;
};

// Stage 1: CRF removed, alpha = alpha_train. init_checkpoint, when set,
// warm-starts every parameter whose name and shape match that archive (e.g.
// transferring a trained trunk into a variant without the residual block);
// non-matching parameters keep their fresh initialization.
TrainResult train_stage1(const ModelConfig& base_config,
                         const DatasetManifest& train_set,
                         const DatasetManifest& val_set, const TrainConfig& cfg,
                         const std::string& out_dir, bool resume = false,
                         const std::string& init_checkpoint = "");

// Stage 2: rebuilds with the CRF layer, alpha = alpha_finetune and a reduced
// learning rate; all non-CRF weights restored from the stage-1 checkpoint.
TrainResult finetune_stage2(const std::string& stage1_checkpoint,
                            const DatasetManifest& train_set,
                            const DatasetManifest& val_set, const TrainConfig& cfg,
                            const std::string& out_dir, bool resume = false);

MetricsReport evaluate(Model& model, const DatasetManifest& split,
                       const ClassMapping& mapping);

// Writes mask_soft.png, mask_binary.png and prediction.json under out_prefix.
void predict_to_files(Model& model, const ImagePair& pair,
                      const std::map<int, std::string>& label_names,
                      const ClassMapping& mapping, const std::string& out_dir);

// Loads a pair at the model's input resolution.
ImagePair load_pair(const DatasetManifest& m, size_t index, int height, int width);

// Deterministic tail split for validation when no separate split is given.
std::pair<DatasetManifest, DatasetManifest> split_manifest(
    const DatasetManifest& m, double val_fraction);

Model model_from_checkpoint(const std::string& path);

}  // namespace wcdnet
