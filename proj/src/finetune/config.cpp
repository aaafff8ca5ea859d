// SPDX-License-Identifier: Apache-2.0
#include "volta/finetune/config.hpp"

#include "volta/common/error.hpp"

namespace volta::finetune {

void FinetuneConfig::validate() const {
  if (head_depth != 1 && head_depth != 2) throw ConfigError("head_depth must be 1 or 2");
  if (hidden < 1) throw ConfigError("hidden width must be >= 1");
  if (!(label_fraction > 0.0 && label_fraction <= 1.0)) throw ConfigError("label_fraction must be in (0, 1]");
  if (epochs < 1 || batch_size < 1) throw ConfigError("epochs and batch_size must be >= 1");
  if (!(lr > 0.0) || !(backbone_lr >= 0.0) || !(weight_decay >= 0.0)) {
    throw ConfigError("learning rates and weight decay must be non-negative (head lr > 0)");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("SGD momentum must be in [0, 1)");
}

}  // namespace volta::finetune
