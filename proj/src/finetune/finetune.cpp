// SPDX-License-Identifier: Apache-2.0
#include "volta/finetune/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "volta/common/error.hpp"
#include "volta/common/log.hpp"
#include "volta/common/random.hpp"
#include "volta/embed/embed.hpp"

namespace volta::finetune {

namespace {

constexpr std::uint64_t kSampleTag = 0x11;
constexpr std::uint64_t kInitTag = 0x12;
constexpr std::uint64_t kShuffleTag = 0x13;

double cosine_lr(double base, int epoch, int epochs) {
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / epochs));
}

std::vector<std::vector<std::size_t>> batches_for(std::size_t n, int batch_size, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, {kShuffleTag, static_cast<std::uint64_t>(epoch)}));
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> out;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t b = 0; b < n; b += bs) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + bs)));
  }
  return out;
}

torch::Tensor index_tensor(const std::vector<std::size_t>& idx) {
  std::vector<std::int64_t> v(idx.begin(), idx.end());
  return torch::tensor(v, torch::kInt64);
}

void check_loss(const torch::Tensor& loss, int epoch) {
  const double v = loss.item<double>();
  if (!std::isfinite(v)) throw NumericalFailure("non-finite classifier loss at epoch " + std::to_string(epoch));
}

torch::Tensor features_of(nets::ModelBundle& model, const ingest::RecordStore& store,
                          const std::vector<std::size_t>& rows, cluster::EmbeddingSource source) {
  std::vector<torch::Tensor> parts;
  for (std::size_t b = 0; b < rows.size(); b += 256) {
    const std::vector<std::size_t> chunk(rows.begin() + static_cast<std::ptrdiff_t>(b),
                                         rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), b + 256)));
    parts.push_back(embed::encode(model, embed::crop_tensor(store, chunk), source, "features"));
  }
  return torch::cat(parts, 0);
}

}  // namespace

std::vector<std::size_t> subsample_labels(std::span<const std::string> labels, double fraction, std::uint64_t seed,
                                          std::span<const std::string> classes) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("label_fraction must be in (0, 1]");
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& c : classes) {
    if (!by_class.contains(c)) log::warn("class '" + c + "' has no labelled records; excluded from the subset");
  }
  std::vector<std::size_t> out;
  for (auto& [name, members] : by_class) {
    const auto take = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(members.size()) - 1e-9)), 1, members.size());
    Rng rng(derive_seed(seed, {kSampleTag, std::hash<std::string>{}(name)}));
    shuffle(members, rng);
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

ClassifierHeadImpl::ClassifierHeadImpl(int in, int classes, int depth, int hidden) : classes_(classes) {
  require(in >= 1 && classes >= 1, "classifier head needs in >= 1 and classes >= 1");
  require(depth == 1 || depth == 2, "head depth must be 1 or 2");
  layers_ = torch::nn::Sequential();
  if (depth == 1) {
    layers_->push_back(torch::nn::Linear(in, classes));
  } else {
    layers_->push_back(torch::nn::Linear(in, hidden));
    layers_->push_back(torch::nn::ReLU());
    layers_->push_back(torch::nn::Linear(hidden, classes));
  }
  register_module("layers", layers_);
}

torch::Tensor ClassifierHeadImpl::forward(const torch::Tensor& x) { return layers_->forward(x); }

double top1(std::span<const int> predicted, std::span<const int> truth) {
  require(!truth.empty(), "top1: empty evaluation set");
  require(predicted.size() == truth.size(), "top1: length mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

FinetuneResult train_head(const torch::Tensor& features, const std::vector<int>& targets, int classes,
                          const FinetuneConfig& config) {
  config.validate();
  require(features.dim() == 2 && features.size(0) == static_cast<std::int64_t>(targets.size()) && !targets.empty(),
          "train_head: features must be (n, d) with one target per row");
  torch::manual_seed(derive_seed(config.seed, {kInitTag}));
  FinetuneResult result;
  result.head = ClassifierHead(static_cast<int>(features.size(1)), classes, config.head_depth, config.hidden);
  result.head->to(features.scalar_type());
  result.n_train = targets.size();
  const auto x = features.detach();
  const auto y = torch::tensor(std::vector<std::int64_t>(targets.begin(), targets.end()), torch::kInt64);
  torch::optim::SGD opt(result.head->parameters(),
                        torch::optim::SGDOptions(config.lr).momentum(config.momentum).weight_decay(config.weight_decay));
  result.head->train();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (auto& g : opt.param_groups()) g.options().set_lr(cosine_lr(config.lr, epoch, config.epochs));
    double sum = 0.0;
    for (const auto& b : batches_for(targets.size(), config.batch_size, config.seed, epoch)) {
      const auto idx = index_tensor(b);
      opt.zero_grad();
      const auto loss = torch::nn::functional::cross_entropy(result.head->forward(x.index_select(0, idx)),
                                                             y.index_select(0, idx));
      check_loss(loss, epoch);
      loss.backward();
      opt.step();
      sum += loss.item<double>() * static_cast<double>(b.size());
    }
    result.epoch_losses.push_back(sum / static_cast<double>(targets.size()));
  }
  torch::NoGradGuard no_grad;
  result.head->eval();
  const auto pred = result.head->forward(x).argmax(1).to(torch::kInt32).contiguous();
  result.train_accuracy = top1({pred.data_ptr<int>(), targets.size()}, targets);
  return result;
}

FinetuneResult train_classifier(nets::ModelBundle& model, const ingest::RecordStore& store,
                                const std::vector<std::size_t>& rows, const FinetuneConfig& config) {
  config.validate();
  const auto class_names = store.label_table();
  if (class_names.empty()) throw DataError("record store has no labelled cells");
  std::vector<std::size_t> labelled;
  std::vector<std::string> labels;
  for (auto r : rows) {
    if (store.cells[r].label) {
      labelled.push_back(r);
      labels.push_back(*store.cells[r].label);
    }
  }
  if (labelled.empty()) throw DataError("no labelled cells among the training rows");
  if (labelled.size() < rows.size()) log::warn(std::to_string(rows.size() - labelled.size()) + " unlabelled cells ignored");
  const auto pick = subsample_labels(labels, config.label_fraction, config.seed, class_names);
  std::vector<std::size_t> subset;
  std::vector<int> targets;
  for (auto i : pick) {
    subset.push_back(labelled[i]);
    targets.push_back(static_cast<int>(std::lower_bound(class_names.begin(), class_names.end(), labels[i]) -
                                       class_names.begin()));
  }
  const int classes = static_cast<int>(class_names.size());
  log::info("fine-tuning on " + std::to_string(subset.size()) + " of " + std::to_string(labelled.size()) +
            " labelled cells, " + std::to_string(classes) + " classes");

  if (config.freeze_backbone) {
    auto result = train_head(features_of(model, store, subset, config.source), targets, classes, config);
    result.class_names = class_names;
    return result;
  }

  const bool momentum = config.source == cluster::EmbeddingSource::momentum_encoder;
  auto encoder = momentum ? model->momentum_encoder : model->backbone;
  std::vector<bool> previous;
  for (auto& p : encoder->parameters()) {
    previous.push_back(p.requires_grad());
    p.set_requires_grad(true);
  }
  torch::manual_seed(derive_seed(config.seed, {kInitTag}));
  FinetuneResult result;
  result.class_names = class_names;
  result.n_train = subset.size();
  result.head = ClassifierHead(model->spec().cell.output_dim, classes, config.head_depth, config.hidden);
  std::vector<torch::optim::OptimizerParamGroup> groups;
  groups.emplace_back(result.head->parameters(), std::make_unique<torch::optim::SGDOptions>(
                                                     torch::optim::SGDOptions(config.lr)
                                                         .momentum(config.momentum)
                                                         .weight_decay(config.weight_decay)));
  groups.emplace_back(encoder->parameters(), std::make_unique<torch::optim::SGDOptions>(
                                                 torch::optim::SGDOptions(config.backbone_lr)
                                                     .momentum(config.momentum)
                                                     .weight_decay(config.weight_decay)));
  torch::optim::SGD opt(groups, torch::optim::SGDOptions(config.lr));
  const auto crops = embed::crop_tensor(store, subset);
  const auto y = torch::tensor(std::vector<std::int64_t>(targets.begin(), targets.end()), torch::kInt64);
  encoder->train();
  result.head->train();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    opt.param_groups()[0].options().set_lr(cosine_lr(config.lr, epoch, config.epochs));
    opt.param_groups()[1].options().set_lr(cosine_lr(config.backbone_lr, epoch, config.epochs));
    double sum = 0.0;
    for (const auto& b : batches_for(subset.size(), config.batch_size, config.seed, epoch)) {
      const auto idx = index_tensor(b);
      opt.zero_grad();
      const auto logits = result.head->forward(encoder->forward(crops.index_select(0, idx)));
      const auto loss = torch::nn::functional::cross_entropy(logits, y.index_select(0, idx));
      check_loss(loss, epoch);
      loss.backward();
      opt.step();
      sum += loss.item<double>() * static_cast<double>(b.size());
    }
    result.epoch_losses.push_back(sum / static_cast<double>(subset.size()));
  }
  std::size_t i = 0;
  for (auto& p : encoder->parameters()) p.set_requires_grad(previous[i++]);
  const auto pred = predict(model, result.head, store, subset, config.source);
  result.train_accuracy = top1(pred, targets);
  return result;
}

std::vector<int> predict(nets::ModelBundle& model, ClassifierHead head, const ingest::RecordStore& store,
                         const std::vector<std::size_t>& rows, cluster::EmbeddingSource source) {
  if (rows.empty()) return {};
  torch::NoGradGuard no_grad;
  head->eval();
  const auto f = features_of(model, store, rows, source);
  const auto pred = head->forward(f.to(head->parameters().front().scalar_type())).argmax(1).to(torch::kInt32).contiguous();
  return {pred.data_ptr<int>(), pred.data_ptr<int>() + pred.numel()};
}

double evaluate_top1(nets::ModelBundle& model, const FinetuneResult& result, const ingest::RecordStore& store,
                     const std::vector<std::size_t>& rows, cluster::EmbeddingSource source) {
  std::vector<std::size_t> labelled;
  std::vector<int> truth;
  for (auto r : rows) {
    if (!store.cells[r].label) continue;
    labelled.push_back(r);
    const auto it = std::find(result.class_names.begin(), result.class_names.end(), *store.cells[r].label);
    truth.push_back(it == result.class_names.end() ? -1 : static_cast<int>(it - result.class_names.begin()));
  }
  require(!labelled.empty(), "evaluate_top1: no labelled test cells");
  return top1(predict(model, result.head, store, labelled, source), truth);
}

}  // namespace volta::finetune
