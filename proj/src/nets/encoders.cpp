// SPDX-License-Identifier: Apache-2.0
#include "volta/nets/encoders.hpp"

#include <algorithm>

#include "volta/common/error.hpp"

namespace volta::nets {

namespace {

int norm_groups(int requested, int channels) {
  int g = std::min(requested, channels);
  while (channels % g != 0) --g;
  return g;
}

class ConvNet4 : public EncoderImpl {
 public:
  explicit ConvNet4(const EncoderSpec& spec) : EncoderImpl(spec) {
    int in = spec.in_channels;
    int side = spec.input_size;
    for (std::size_t i = 0; i < spec.widths.size(); ++i) {
      const int w = spec.widths[i];
      blocks_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, w, 3).padding(1).bias(false)));
      blocks_->push_back(torch::nn::GroupNorm(torch::nn::GroupNormOptions(norm_groups(spec.groups, w), w)));
      blocks_->push_back(torch::nn::ReLU());
      if (side > 1) {
        blocks_->push_back(torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2)));
        side /= 2;
      }
      in = w;
    }
    register_module("blocks", blocks_);
    fc_ = register_module("fc", torch::nn::Linear(in, spec.output_dim));
  }

  torch::Tensor forward(const torch::Tensor& x) override {
    auto h = blocks_->forward(x);
    h = h.mean({2, 3});
    return fc_->forward(h);
  }

 private:
  torch::nn::Sequential blocks_;
  torch::nn::Linear fc_{nullptr};
};

class PreActBlockImpl : public torch::nn::Module {
 public:
  PreActBlockImpl(int in, int out, int stride) {
    bn1_ = register_module("bn1", torch::nn::BatchNorm2d(in));
    conv1_ = register_module(
        "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false)));
    bn2_ = register_module("bn2", torch::nn::BatchNorm2d(out));
    conv2_ = register_module(
        "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).padding(1).bias(false)));
    if (stride != 1 || in != out) {
      shortcut_ = register_module(
          "shortcut", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto out = torch::relu(bn1_->forward(x));
    auto skip = shortcut_ ? shortcut_->forward(out) : x;
    out = conv1_->forward(out);
    out = conv2_->forward(torch::relu(bn2_->forward(out)));
    return out + skip;
  }

 private:
  torch::nn::BatchNorm2d bn1_{nullptr};
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::BatchNorm2d bn2_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
  torch::nn::Conv2d shortcut_{nullptr};
};
TORCH_MODULE(PreActBlock);

class PreActResNet18 : public EncoderImpl {
 public:
  explicit PreActResNet18(const EncoderSpec& spec) : EncoderImpl(spec) {
    const auto& w = spec.widths;
    stem_ = register_module(
        "stem", torch::nn::Conv2d(torch::nn::Conv2dOptions(spec.in_channels, w[0], 3).padding(1).bias(false)));
    int in = w[0];
    for (std::size_t s = 0; s < 4; ++s) {
      const int stride = s == 0 ? 1 : 2;
      stages_->push_back(PreActBlock(in, w[s], stride));
      stages_->push_back(PreActBlock(w[s], w[s], 1));
      in = w[s];
    }
    register_module("stages", stages_);
    bn_ = register_module("bn", torch::nn::BatchNorm2d(in));
    if (in != spec.output_dim) fc_ = register_module("fc", torch::nn::Linear(in, spec.output_dim));
  }

  torch::Tensor forward(const torch::Tensor& x) override {
    auto h = stages_->forward(stem_->forward(x));
    h = torch::relu(bn_->forward(h)).mean({2, 3});
    return fc_ ? fc_->forward(h) : h;
  }

 private:
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::Sequential stages_;
  torch::nn::BatchNorm2d bn_{nullptr};
  torch::nn::Linear fc_{nullptr};
};

class LambdaNet : public EncoderImpl {
 public:
  explicit LambdaNet(const EncoderSpec& spec) : EncoderImpl(spec) {
    const auto& w = spec.widths;
    body_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(spec.in_channels, w[0], 3).padding(1).bias(false)));
    body_->push_back(torch::nn::GroupNorm(torch::nn::GroupNormOptions(norm_groups(spec.groups, w[0]), w[0])));
    body_->push_back(torch::nn::ReLU());
    body_->push_back(torch::nn::AvgPool2d(torch::nn::AvgPool2dOptions(2)));
    for (std::size_t i = 1; i < w.size(); ++i) {
      body_->push_back(LambdaLayer(w[i - 1], w[i], 4, 16, 7));
      body_->push_back(torch::nn::GroupNorm(torch::nn::GroupNormOptions(norm_groups(spec.groups, w[i]), w[i])));
      body_->push_back(torch::nn::ReLU());
      body_->push_back(torch::nn::AvgPool2d(torch::nn::AvgPool2dOptions(2)));
    }
    register_module("body", body_);
    fc_ = register_module("fc", torch::nn::Linear(w.back(), spec.output_dim));
  }

  torch::Tensor forward(const torch::Tensor& x) override {
    return fc_->forward(body_->forward(x).mean({2, 3}));
  }

 private:
  torch::nn::Sequential body_;
  torch::nn::Linear fc_{nullptr};
};

class MlpEncoder : public EncoderImpl {
 public:
  explicit MlpEncoder(const EncoderSpec& spec) : EncoderImpl(spec) {
    const int in = spec.in_channels * spec.input_size * spec.input_size;
    fc1_ = register_module("fc1", torch::nn::Linear(in, spec.widths[0]));
    fc2_ = register_module("fc2", torch::nn::Linear(spec.widths[0], spec.output_dim));
  }

  torch::Tensor forward(const torch::Tensor& x) override {
    return fc2_->forward(torch::tanh(fc1_->forward(x.flatten(1))));
  }

 private:
  torch::nn::Linear fc1_{nullptr};
  torch::nn::Linear fc2_{nullptr};
};

}  // namespace

Encoder make_encoder(const EncoderSpec& spec) {
  spec.validate();
  if (spec.arch == "convnet4") return std::make_shared<ConvNet4>(spec);
  if (spec.arch == "preact_resnet18") return std::make_shared<PreActResNet18>(spec);
  if (spec.arch == "lambda_net") return std::make_shared<LambdaNet>(spec);
  return std::make_shared<MlpEncoder>(spec);
}

MlpImpl::MlpImpl(int in, int hidden, int out) {
  fc1_ = register_module("fc1", torch::nn::Linear(in, hidden));
  fc2_ = register_module("fc2", torch::nn::Linear(hidden, out));
}

torch::Tensor MlpImpl::forward(const torch::Tensor& x) {
  return fc2_->forward(torch::relu(fc1_->forward(x)));
}

LambdaLayerImpl::LambdaLayerImpl(int dim, int dim_out, int heads, int dim_k, int receptive_field)
    : heads_(heads), dim_k_(dim_k), dim_v_(dim_out / heads) {
  require(dim_out % heads == 0, "lambda layer output width must be divisible by heads");
  require(receptive_field % 2 == 1, "lambda receptive field must be odd");
  to_q_ = register_module("to_q", torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, dim_k * heads, 1).bias(false)));
  to_k_ = register_module("to_k", torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, dim_k, 1).bias(false)));
  to_v_ = register_module("to_v", torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, dim_v_, 1).bias(false)));
  norm_q_ = register_module("norm_q", torch::nn::BatchNorm2d(dim_k * heads));
  norm_v_ = register_module("norm_v", torch::nn::BatchNorm2d(dim_v_));
  const int pad = receptive_field / 2;
  pos_conv_ = register_module(
      "pos_conv", torch::nn::Conv3d(torch::nn::Conv3dOptions(1, dim_k, {1, receptive_field, receptive_field})
                                        .padding({0, pad, pad})));
}

torch::Tensor LambdaLayerImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0);
  const auto hh = x.size(2);
  const auto ww = x.size(3);
  const auto n = hh * ww;
  auto q = norm_q_->forward(to_q_->forward(x)).reshape({b, heads_, dim_k_, n});
  auto k = to_k_->forward(x).reshape({b, dim_k_, n}).softmax(-1);
  auto v = norm_v_->forward(to_v_->forward(x)).reshape({b, dim_v_, n});
  // Content lambda (b, k, v) shared by every position.
  auto content = torch::einsum("bkm,bvm->bkv", {k, v});
  auto y_content = torch::einsum("bhkn,bkv->bhvn", {q, content});
  // Position lambdas (b, k, v, n) from an r x r neighbourhood of the values.
  auto pos = pos_conv_->forward(v.reshape({b, 1, dim_v_, hh, ww})).reshape({b, dim_k_, dim_v_, n});
  auto y_pos = torch::einsum("bhkn,bkvn->bhvn", {q, pos});
  return (y_content + y_pos).reshape({b, heads_ * dim_v_, hh, ww});
}

}  // namespace volta::nets
