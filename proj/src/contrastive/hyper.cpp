// SPDX-License-Identifier: Apache-2.0
#include "volta/contrastive/hyper.hpp"

#include "volta/common/error.hpp"

namespace volta::contrastive {

void HyperParams::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("momentum must be in [0, 1]");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (queue_size < 0) throw ConfigError("queue_size must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs > epochs) throw ConfigError("warmup_epochs must be in [0, epochs]");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

}  // namespace volta::contrastive
