// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "volta/cluster/embedding.hpp"

namespace volta::finetune {

struct FinetuneConfig {
  int head_depth = 1;  // 1: linear, 2: linear-relu-linear
  int hidden = 256;
  bool freeze_backbone = true;
  double label_fraction = 1.0;
  int epochs = 300;
  int batch_size = 1024;
  double lr = 1e-3;           // head
  double backbone_lr = 1e-4;  // encoder, when unfrozen
  double weight_decay = 1e-5;
  double momentum = 0.9;
  cluster::EmbeddingSource source = cluster::EmbeddingSource::momentum_encoder;
  std::uint64_t seed = 0;

  void validate() const;
};

}  // namespace volta::finetune
