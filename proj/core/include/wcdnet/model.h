// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wcdnet/autodiff.h"
#include "wcdnet/crf.h"
#include "wcdnet/image.h"
#include "wcdnet/losses.h"
#include "wcdnet/tensor.h"

namespace wcdnet {

/// A co-registered image pair with optional ground truth.
struct ImagePair {
  Image prev, curr;
  std::optional<std::vector<uint8_t>> mask;  // binary, prev/curr resolution
  int label_id = 0;
};

struct ModelConfig {
  int input_height = 64;
  int input_width = 64;
  int num_classes = 4;  // N, one of which is "unchanged"
  double alpha = 32.0;
  std::vector<int> filter_schedule = {256, 128, 64, 32, 16, 16};
  bool residual_block_enabled = true;
  bool crf_enabled = false;
  int crf_iterations = 5;
  SupervisionMode supervision_mode = SupervisionMode::weak;
  double mask_threshold = 0.5;
  int unchanged_class_index = 0;  // class treated as "unchanged" (D7 gating)
  // Width multiplier for the VGG16-topology encoders so small synthetic
  // experiments train on a CPU (1.0 = the full 64-channel base width).
  double width_multiplier = 0.125;
  CrfParams crf;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

/// Eval-mode prediction for one pair.
struct ModelOutput {
  std::vector<double> class_probabilities;  // length N, sums to 1
  std::vector<float> change_mask;           // soft, H*W in [0,1]
  std::vector<float> raw_mask;              // nonnegative, H*W
  int predicted_label = 0;
  std::vector<uint8_t> binary_mask;  // thresholded; empty-by-gating when the
                                     // predicted label is "unchanged"
};

class Model {
 public:
  explicit Model(ModelConfig config, uint64_t init_seed = 42);

  const ModelConfig& config() const { return cfg_; }

  // Named parameters (learned) and buffers (batch-norm running statistics).
  std::map<std::string, ag::Var>& params() { return params_; }
  std::map<std::string, Tensor*> buffers();

  struct ForwardResult {
    ag::Var class_probs;   // (N, num_classes)
    ag::Var change_mask;   // (N,1,H,W), CRF-refined when enabled
    ag::Var raw_mask;      // (N,1,H,W)
  };
  // prev/curr: (N,3,H,W) in [0,1]. training toggles batch-norm statistics.
  ForwardResult forward(const Tensor& prev, const Tensor& curr, bool training);

  // Individual stages, exposed for direct verification.
  std::vector<ag::Var> extract_features(const ag::Var& image, bool training);
  ag::Var comparison_block(int index, const ag::Var& feat_prev,
                           const ag::Var& feat_curr, const ag::Var* upstream,
                           bool training);
  ag::Var raw_mask_head(const ag::Var& last_block_output, bool training);
  ag::Var segment_current(const ag::Var& current, const ag::Var& mask);
  ag::Var encode_segmented(const ag::Var& segmented, bool training);
  ag::Var residual_features(const ag::Var& raw, bool training);
  ag::Var fuse_and_classify(const ag::Var& seg_vec, const ag::Var* res_vec);
  ag::Var crf_refine(const ag::Var& mask, const Tensor& guide);

  // Convenience single-pair inference (eval mode, D7 binarization).
  ModelOutput predict_pair(const ImagePair& pair);

  // Effective CRF parameters (config sigmas + learned weights/compatibility).
  CrfParams effective_crf_params() const;

  int residual_feature_dim() const;
  int segmented_feature_dim() const;

 private:
  ag::Var conv_layer(const std::string& name, const ag::Var& x, bool relu_after,
                     bool training, bool with_bn = false);
  struct LayerShapes;
  void build_params(uint64_t seed);
  ag::Var p(const std::string& name) { return params_.at(name); }

  ModelConfig cfg_;
  std::map<std::string, ag::Var> params_;
  std::map<std::string, Tensor> bn_stats_;  // running mean/var by layer path
  // static channel plan, filled at construction
  std::vector<int> enc_widths_;        // per encoder stage
  std::vector<int> enc_convs_;         // convs per encoder stage
  std::vector<int> dec_widths_;        // per decoder stage (coarse to fine)
  int residual_width_ = 0;
};

// Converts an image batch to a (N,3,H,W) tensor (and back for masks).
Tensor images_to_tensor(const std::vector<const Image*>& images);
std::vector<float> tensor_mask_to_vector(const Tensor& t, int sample);

}  // namespace wcdnet
