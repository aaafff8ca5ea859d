// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include <memory>
#include <string>
#include <vector>

#include "volta/nets/spec.hpp"

namespace volta::nets {


/// Image encoder: (N, C, H, W) -> (N, output_dim).
class EncoderImpl : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(const torch::Tensor& x) = 0;
  [[nodiscard]] const EncoderSpec& spec() const { return spec_; }

 protected:
  explicit EncoderImpl(EncoderSpec spec) : spec_(std::move(spec)) {}
  EncoderSpec spec_;
};

using Encoder = std::shared_ptr<EncoderImpl>;

Encoder make_encoder(const EncoderSpec& spec);

/// Two-layer perceptron in -> hidden -> out with a ReLU in between.
class MlpImpl : public torch::nn::Module {
 public:
  MlpImpl(int in, int hidden, int out);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Linear fc1_{nullptr};
  torch::nn::Linear fc2_{nullptr};
};
TORCH_MODULE(Mlp);

/// Lambda layer with a content lambda and a local positional lambda computed
/// by a 3-D convolution over an r x r neighbourhood.
class LambdaLayerImpl : public torch::nn::Module {
 public:
  LambdaLayerImpl(int dim, int dim_out, int heads, int dim_k, int receptive_field);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  int heads_;
  int dim_k_;
  int dim_v_;
  torch::nn::Conv2d to_q_{nullptr};
  torch::nn::Conv2d to_k_{nullptr};
  torch::nn::Conv2d to_v_{nullptr};
  torch::nn::BatchNorm2d norm_q_{nullptr};
  torch::nn::BatchNorm2d norm_v_{nullptr};
  torch::nn::Conv3d pos_conv_{nullptr};
};
TORCH_MODULE(LambdaLayer);

}  // namespace volta::nets
