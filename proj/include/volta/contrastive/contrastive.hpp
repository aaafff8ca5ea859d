// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "volta/augment/augment.hpp"
#include "volta/contrastive/hyper.hpp"
#include "volta/ingest/record_store.hpp"
#include "volta/nets/model.hpp"

namespace volta::contrastive {

/// FIFO ring of L2-normalised key vectors.
class NegativeQueue {
 public:
  NegativeQueue(int capacity, int dim);

  /// Appends the rows of `keys` (n, dim) in order, evicting the oldest rows
  /// once full. Rows must have unit norm within 1e-5.
  void push(const torch::Tensor& keys);
  /// Stored keys oldest first, (size, dim).
  [[nodiscard]] torch::Tensor contents(torch::Dtype dtype = torch::kFloat64) const;
  [[nodiscard]] int size() const { return fill_; }
  [[nodiscard]] int capacity() const { return capacity_; }
  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] int head() const { return head_; }
  void clear();

 private:
  int capacity_;
  int dim_;
  int fill_ = 0;
  int head_ = 0;  // next slot to write
  std::vector<double> buffer_;
};

/// Mean over i of -log softmax over candidates {k_1..k_N, queue} at k_i, with
/// logits z_q . candidate / tau. Inputs must be row-normalised.
torch::Tensor info_nce_cell(const torch::Tensor& z_q, const torch::Tensor& k, const NegativeQueue& queue,
                            double tau);
/// Batch-only variant: candidates are e_1..e_N.
torch::Tensor info_nce_env(const torch::Tensor& c, const torch::Tensor& e, double tau);

struct LossBreakdown {
  double l_cell = 0.0;
  double l_env = 0.0;
  double total = 0.0;
};

LossBreakdown total_loss(double l_cell, double l_env, double lambda);

/// Linear warm-up to `lr` over warmup_epochs, then cosine decay reaching 0
/// at `epochs`. Progress is measured after the step: epoch + (step+1)/steps.
double lr_at(const HyperParams& hyper, int epoch, int step, int steps_per_epoch);

/// Augmented, normalised network inputs for one step, NCHW float32.
struct StepBatch {
  torch::Tensor query_views;
  torch::Tensor key_views;
  torch::Tensor env_views;  // undefined when the model has no env branch
  std::vector<std::size_t> rows;
};

/// View i uses an RNG seeded by (seed, epoch, step, rows[i]), so the batch
/// does not depend on the worker count.
StepBatch build_batch(const ingest::RecordStore& store, const std::vector<std::size_t>& rows,
                      const augment::AugmentationConfig& config, bool with_env, std::uint64_t seed, int epoch,
                      int step, int workers);

/// Losses of one batch as differentiable scalars; `l_env` is undefined
/// without an env branch. Env loss is computed without autograd when lambda=0.
struct StepLosses {
  torch::Tensor l_cell;
  torch::Tensor l_env;
  torch::Tensor total;
  torch::Tensor keys;  // normalised, detached
};
StepLosses compute_losses(nets::ModelBundle& model, const StepBatch& batch, const NegativeQueue& queue,
                          const HyperParams& hyper);

/// forward -> losses -> optimiser step on the trainable trees -> momentum
/// update -> enqueue keys. Throws NumericalFailure on a non-finite loss
/// before any parameter changes.
LossBreakdown training_step(nets::ModelBundle& model, const StepBatch& batch, NegativeQueue& queue,
                            const HyperParams& hyper, torch::optim::Optimizer& optimizer);

torch::optim::Adam make_optimizer(nets::ModelBundle& model, const HyperParams& hyper);
void set_learning_rate(torch::optim::Optimizer& optimizer, double lr);

struct LossRow {
  int epoch = 0;
  int step = 0;
  LossBreakdown loss;
  double lr = 0.0;
};

void write_loss_csv(const std::vector<LossRow>& rows, const std::filesystem::path& path);

struct TrainOptions {
  HyperParams hyper;
  augment::AugmentationConfig augment;
  nets::ModelSpec model;
  std::uint64_t seed = 0;
  int workers = 1;
  std::filesystem::path output_dir;  // empty: no files are written
  std::string config_hash;
  std::string model_hash;
  bool keep_all_checkpoints = true;  // false keeps only the last one
  std::function<void(const LossRow&)> on_step;
};

struct TrainResult {
  nets::ModelBundle model{nullptr};
  std::vector<LossRow> losses;
  std::vector<double> epoch_means;  // mean total loss per epoch
  std::vector<std::filesystem::path> checkpoints;
};

/// Trains on the train split. Writes checkpoint_eNNNN.pt per epoch,
/// losses.csv and, on a numerical failure, diagnostics.json.
TrainResult train(const ingest::RecordStore& store, const TrainOptions& options);

}  // namespace volta::contrastive
