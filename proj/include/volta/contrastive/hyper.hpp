// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace volta::contrastive {

struct HyperParams {
  double tau = 0.07;
  double lambda = 1.0;
  double momentum = 0.999;
  int batch_size = 1024;
  int queue_size = 65536;  // 0 disables the memory bank
  int epochs = 500;
  int warmup_epochs = 10;
  double lr = 1e-3;
  double weight_decay = 1e-4;

  void validate() const;
};

}  // namespace volta::contrastive
