// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace volta::nets {

/// Architecture tag plus shape contract of an image encoder.
///   convnet4         small conv stack (test scale), widths.size() blocks
///   preact_resnet18  pre-activation residual net, 4 stages of 2 blocks
///   lambda_net       conv stem + lambda-layer stages (environment reference)
///   mlp              flatten -> hidden -> output (toy models)
struct EncoderSpec {
  std::string arch = "convnet4";
  int input_size = 32;
  int in_channels = 3;
  int output_dim = 512;
  std::vector<int> widths{32, 64, 128, 256};
  int groups = 8;  // GroupNorm groups (convnet4, lambda_net)

  /// Throws ConfigError on unknown tags or inconsistent sizes.
  void validate() const;
};

struct ModelSpec {
  EncoderSpec cell;  // backbone and momentum encoder; output_dim is the feature width
  EncoderSpec env{"convnet4", 64, 3, 512, {16, 32, 64, 128}, 8};
  int proj_hidden = 128;
  int proj_dim = 64;
  int pred_hidden = 32;
  int env_hidden = 128;
  bool with_env = true;  // false drops the environment encoder and both env heads

  void validate() const;
};

std::string spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const std::string& json);

}  // namespace volta::nets
