// Copyright (c) 2026 wcdnet authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "wcdnet/model.h"
#include "wcdnet/tensor.h"

namespace wcdnet {

inline constexpr const char* kCheckpointVersion = "wcdnet-checkpoint-1";

/// Named-array archive: every parameter and batch-norm buffer keyed by its
/// layer path, plus a version string and the model config as metadata.
struct Checkpoint {
  std::string version = kCheckpointVersion;
  std::string meta;  // model config JSON
  std::map<std::string, Tensor> arrays;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint model_state(Model& model);

// Restores matching arrays into the model. Entries missing from the archive
// are an error, except "crf.*" parameters, which stay freshly initialized so
// a stage-1 checkpoint loads into a CRF-enabled model.
void load_model_state(Model& model, const Checkpoint& ckpt);

// Restores only arrays whose name and shape both match the model; everything
// else keeps its fresh initialization. Lets a trained trunk warm-start a
// model variant with a different head. Returns the number of arrays restored.
int load_model_state_partial(Model& model, const Checkpoint& ckpt);

}  // namespace wcdnet
