// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "volta/nets/encoders.hpp"

namespace volta::nets {

/// All parameter trees of the model.
///   online   backbone + query_projector + predictor (f_q), env_encoder +
///            env_projector (g_env), cell_env_head (g_cell)
///   momentum momentum_encoder + key_projector (f_k), never trained by gradients
class ModelBundleImpl : public torch::nn::Module {
 public:
  explicit ModelBundleImpl(ModelSpec spec);

  struct QueryOutput {
    torch::Tensor features;  // (N, feature_dim) backbone output
    torch::Tensor z;         // (N, proj_dim) predictor output
  };

  /// views: (N, C, H, W) at the cell encoder's input size.
  QueryOutput forward_query(const torch::Tensor& views);
  /// Key embeddings through the momentum branch, computed without autograd.
  torch::Tensor forward_key(const torch::Tensor& views);
  /// Momentum-encoder features (no autograd), the default inference embedding.
  torch::Tensor momentum_features(const torch::Tensor& views);
  torch::Tensor backbone_features(const torch::Tensor& views);
  torch::Tensor forward_env(const torch::Tensor& env_views);
  torch::Tensor project_cell_for_env(const torch::Tensor& features);

  /// theta_k <- m * theta_k + (1 - m) * theta_q for every paired tensor
  /// (parameters and floating-point buffers). Throws ContractViolation when
  /// the paired trees differ in structure or m is outside [0, 1].
  void momentum_update(double m);
  /// theta_k <- theta_q exactly.
  void sync_momentum();

  /// Parameters updated by the optimiser (online branch, env branch, g_cell).
  std::vector<torch::Tensor> trainable_parameters() const;
  /// Named (query, key) tensor pairs covered by the momentum update.
  std::vector<std::pair<std::string, std::pair<torch::Tensor, torch::Tensor>>> momentum_pairs() const;

  [[nodiscard]] const ModelSpec& spec() const { return spec_; }

  Encoder backbone;
  Mlp query_projector{nullptr};
  Mlp predictor{nullptr};
  Encoder momentum_encoder;
  Mlp key_projector{nullptr};
  Encoder env_encoder;
  Mlp env_projector{nullptr};
  Mlp cell_env_head{nullptr};

 private:
  ModelSpec spec_;
};
TORCH_MODULE(ModelBundle);

/// Throws ContractViolation unless x is (N, C, S, S) with the spec's C and S.
void check_input(const torch::Tensor& x, const EncoderSpec& spec, const char* what);

struct CheckpointMeta {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  std::string config_hash;  // hash of the model + training configuration
  std::string model_hash;   // hash of the model section alone
  std::string spec_json;    // ModelSpec as JSON
};

/// One archive holding every parameter tree keyed by component name, plus
/// step and hashes.
void save_checkpoint(const ModelBundle& bundle, const CheckpointMeta& meta, const std::filesystem::path& path);
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);
/// Loads parameters into a bundle built from the stored spec. Refuses
/// (ConfigError) when expected_model_hash is non-empty and differs.
ModelBundle load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr,
                            const std::string& expected_model_hash = "");

/// SHA-256 over the raw bytes of the named tensors (in name order).
std::string parameter_digest(const torch::nn::Module& module);

/// HWC float rows (row-major n x side x side x channels) -> (n, C, side, side).
torch::Tensor images_to_tensor(const std::vector<const float*>& rows, int side, int channels = 3);

}  // namespace volta::nets
