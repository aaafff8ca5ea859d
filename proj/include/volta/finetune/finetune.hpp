// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "volta/cluster/embedding.hpp"
#include "volta/finetune/config.hpp"
#include "volta/ingest/record_store.hpp"
#include "volta/nets/model.hpp"

namespace volta::finetune {

/// Stratified sample: ceil(fraction * n_c) indices of every class c (at
/// least one). Classes listed in `classes` without records are skipped with a
/// warning. Returned indices are sorted.
std::vector<std::size_t> subsample_labels(std::span<const std::string> labels, double fraction, std::uint64_t seed,
                                          std::span<const std::string> classes = {});

class ClassifierHeadImpl : public torch::nn::Module {
 public:
  ClassifierHeadImpl(int in, int classes, int depth, int hidden = 256);
  torch::Tensor forward(const torch::Tensor& x);
  [[nodiscard]] int classes() const { return classes_; }

 private:
  int classes_;
  torch::nn::Sequential layers_{nullptr};
};
TORCH_MODULE(ClassifierHead);

struct FinetuneResult {
  ClassifierHead head{nullptr};
  std::vector<std::string> class_names;  // index = class id
  std::vector<double> epoch_losses;
  double train_accuracy = 0.0;
  std::size_t n_train = 0;
};

/// Cross-entropy training of a head on the encoder chosen by config.source.
/// A frozen run trains on precomputed features and leaves the model
/// untouched; an unfrozen run also updates that encoder with backbone_lr.
FinetuneResult train_classifier(nets::ModelBundle& model, const ingest::RecordStore& store,
                                const std::vector<std::size_t>& rows, const FinetuneConfig& config);

/// Head training on fixed features (n, d) with integer targets.
FinetuneResult train_head(const torch::Tensor& features, const std::vector<int>& targets, int classes,
                          const FinetuneConfig& config);

/// Fraction of predictions equal to truth. Throws on empty or mismatched input.
double top1(std::span<const int> predicted, std::span<const int> truth);

/// Argmax predictions of encoder + head on the unaugmented crops of `rows`.
std::vector<int> predict(nets::ModelBundle& model, ClassifierHead head, const ingest::RecordStore& store,
                         const std::vector<std::size_t>& rows, cluster::EmbeddingSource source);

/// Top-1 accuracy on labelled rows; labels map through result.class_names,
/// unknown labels count as wrong.
double evaluate_top1(nets::ModelBundle& model, const FinetuneResult& result, const ingest::RecordStore& store,
                     const std::vector<std::size_t>& rows, cluster::EmbeddingSource source);

}  // namespace volta::finetune
