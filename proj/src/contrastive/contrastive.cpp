// SPDX-License-Identifier: Apache-2.0
#include "volta/contrastive/contrastive.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "volta/common/error.hpp"
#include "volta/common/log.hpp"
#include "volta/common/parallel.hpp"
#include "volta/common/random.hpp"

namespace volta::contrastive {

namespace F = torch::nn::functional;

namespace {

constexpr std::uint64_t kInitTag = 0x1;
constexpr std::uint64_t kShuffleTag = 0x2;
constexpr std::uint64_t kViewTag = 0x3;

void require_normalized(const torch::Tensor& x, const char* what) {
  // Non-finite rows surface later as a non-finite loss.
  if (!torch::isfinite(x.detach()).all().item<bool>()) return;
  const auto norms = x.detach().norm(2, 1);
  const double worst = (norms - 1.0).abs().max().item<double>();
  require(worst <= 1e-4, std::string(what) + " rows must be L2-normalised");
}

}  // namespace

NegativeQueue::NegativeQueue(int capacity, int dim)
    : capacity_(capacity), dim_(dim), buffer_(static_cast<std::size_t>(std::max(capacity, 0)) * dim) {
  require(capacity >= 0 && dim >= 1, "queue capacity must be >= 0 and dim >= 1");
}

void NegativeQueue::push(const torch::Tensor& keys) {
  require(keys.dim() == 2 && keys.size(1) == dim_, "queue push: expected (n, " + std::to_string(dim_) + ") keys");
  if (keys.size(0) == 0) return;
  const auto k = keys.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  require_normalized(k, "queued key");
  if (capacity_ == 0) return;
  const double* src = k.data_ptr<double>();
  for (std::int64_t r = 0; r < k.size(0); ++r) {
    std::copy(src + r * dim_, src + (r + 1) * dim_, buffer_.begin() + static_cast<std::ptrdiff_t>(head_) * dim_);
    head_ = (head_ + 1) % capacity_;
    fill_ = std::min(fill_ + 1, capacity_);
  }
}

torch::Tensor NegativeQueue::contents(torch::Dtype dtype) const {
  auto out = torch::empty({fill_, dim_}, torch::kFloat64);
  double* dst = out.data_ptr<double>();
  const int oldest = fill_ < capacity_ ? 0 : head_;
  for (int i = 0; i < fill_; ++i) {
    const int slot = (oldest + i) % std::max(capacity_, 1);
    std::copy(buffer_.begin() + static_cast<std::ptrdiff_t>(slot) * dim_,
              buffer_.begin() + static_cast<std::ptrdiff_t>(slot + 1) * dim_, dst + static_cast<std::ptrdiff_t>(i) * dim_);
  }
  return out.to(dtype);
}

void NegativeQueue::clear() {
  fill_ = 0;
  head_ = 0;
}

torch::Tensor info_nce_cell(const torch::Tensor& z_q, const torch::Tensor& k, const NegativeQueue& queue,
                            double tau) {
  require(tau > 0.0, "temperature must be > 0");
  require(z_q.dim() == 2 && z_q.sizes() == k.sizes() && z_q.size(0) >= 1,
          "info_nce_cell: z_q and k must both be (N, d) with N >= 1");
  require(queue.size() == 0 || queue.dim() == z_q.size(1), "info_nce_cell: queue width differs from z_q");
  require_normalized(z_q, "z_q");
  require_normalized(k, "k");
  auto candidates = k;
  if (queue.size() > 0) candidates = torch::cat({k, queue.contents(z_q.scalar_type()).to(z_q.device())}, 0);
  const auto logits = torch::matmul(z_q, candidates.t()) / tau;
  return (torch::logsumexp(logits, 1) - logits.diagonal()).mean();
}

torch::Tensor info_nce_env(const torch::Tensor& c, const torch::Tensor& e, double tau) {
  require(tau > 0.0, "temperature must be > 0");
  require(c.dim() == 2 && c.sizes() == e.sizes() && c.size(0) >= 1,
          "info_nce_env: c and e must both be (N, d) with N >= 1");
  require_normalized(c, "c");
  require_normalized(e, "e");
  const auto logits = torch::matmul(c, e.t()) / tau;
  return (torch::logsumexp(logits, 1) - logits.diagonal()).mean();
}

LossBreakdown total_loss(double l_cell, double l_env, double lambda) {
  return {l_cell, l_env, l_cell + lambda * l_env};
}

double lr_at(const HyperParams& hyper, int epoch, int step, int steps_per_epoch) {
  require(steps_per_epoch >= 1 && step >= 0 && step < steps_per_epoch, "lr_at: step outside the epoch");
  const double p = epoch + static_cast<double>(step + 1) / steps_per_epoch;
  const double warm = hyper.warmup_epochs;
  if (p < warm) return hyper.lr * p / warm;
  const double span = hyper.epochs - warm;
  if (span <= 0.0) return hyper.lr;
  const double t = std::clamp((p - warm) / span, 0.0, 1.0);
  return hyper.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

StepBatch build_batch(const ingest::RecordStore& store, const std::vector<std::size_t>& rows,
                      const augment::AugmentationConfig& config, bool with_env, std::uint64_t seed, int epoch,
                      int step, int workers) {
  require(!rows.empty(), "build_batch: empty batch");
  const std::size_t n = rows.size();
  std::vector<cv::Mat> q(n), k(n), e(n);
  parallel_for(n, workers, [&](std::size_t i) {
    const auto row = rows[i];
    Rng rng(derive_seed(seed, {kViewTag, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(step), row}));
    const auto crop = store.cell_crop(row);
    auto pair = augment::make_view_pair(crop, config, rng);
    q[i] = std::move(pair.query_view);
    k[i] = std::move(pair.key_view);
    if (with_env) e[i] = augment::augment_environment(store.environment(row), store.normalization, config, rng);
  });
  auto to_tensor = [](const std::vector<cv::Mat>& views) {
    std::vector<const float*> ptrs;
    ptrs.reserve(views.size());
    for (const auto& v : views) {
      require(v.isContinuous() && v.type() == CV_32FC3, "build_batch: view is not a continuous CV_32FC3 image");
      ptrs.push_back(v.ptr<float>());
    }
    return nets::images_to_tensor(ptrs, views.front().rows, 3);
  };
  StepBatch batch;
  batch.query_views = to_tensor(q);
  batch.key_views = to_tensor(k);
  if (with_env) batch.env_views = to_tensor(e);
  batch.rows = rows;
  return batch;
}

StepLosses compute_losses(nets::ModelBundle& model, const StepBatch& batch, const NegativeQueue& queue,
                          const HyperParams& hyper) {
  StepLosses out;
  const auto query = model->forward_query(batch.query_views);
  const auto z_q = F::normalize(query.z, F::NormalizeFuncOptions().dim(1));
  out.keys = F::normalize(model->forward_key(batch.key_views), F::NormalizeFuncOptions().dim(1)).detach();
  out.l_cell = info_nce_cell(z_q, out.keys, queue, hyper.tau);
  out.total = out.l_cell;
  if (model->spec().with_env) {
    auto env_loss = [&] {
      const auto c = F::normalize(model->project_cell_for_env(query.features), F::NormalizeFuncOptions().dim(1));
      const auto e = F::normalize(model->forward_env(batch.env_views), F::NormalizeFuncOptions().dim(1));
      return info_nce_env(c, e, hyper.tau);
    };
    if (hyper.lambda > 0.0) {
      out.l_env = env_loss();
      out.total = out.l_cell + hyper.lambda * out.l_env;
    } else {
      torch::NoGradGuard no_grad;
      out.l_env = env_loss();
    }
  }
  return out;
}

LossBreakdown training_step(nets::ModelBundle& model, const StepBatch& batch, NegativeQueue& queue,
                            const HyperParams& hyper, torch::optim::Optimizer& optimizer) {
  optimizer.zero_grad();
  auto losses = compute_losses(model, batch, queue, hyper);
  const double lc = losses.l_cell.item<double>();
  const double le = losses.l_env.defined() ? losses.l_env.item<double>() : 0.0;
  const auto breakdown = total_loss(lc, le, hyper.lambda);
  if (!std::isfinite(breakdown.l_cell) || !std::isfinite(breakdown.l_env) || !std::isfinite(breakdown.total)) {
    char msg[160];
    std::snprintf(msg, sizeof msg, "non-finite loss: L_cell=%g L_env=%g total=%g", breakdown.l_cell,
                  breakdown.l_env, breakdown.total);
    throw NumericalFailure(msg);
  }
  losses.total.backward();
  optimizer.step();
  model->momentum_update(hyper.momentum);
  queue.push(losses.keys);
  return breakdown;
}

torch::optim::Adam make_optimizer(nets::ModelBundle& model, const HyperParams& hyper) {
  return torch::optim::Adam(model->trainable_parameters(),
                            torch::optim::AdamOptions(hyper.lr).weight_decay(hyper.weight_decay));
}

void set_learning_rate(torch::optim::Optimizer& optimizer, double lr) {
  for (auto& group : optimizer.param_groups()) group.options().set_lr(lr);
}

void write_loss_csv(const std::vector<LossRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,step,L_cell,L_env,total,lr\n";
  char line[192];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%d,%d,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.step, r.loss.l_cell, r.loss.l_env,
                  r.loss.total, r.lr);
    out << line;
  }
  if (!out) throw DataError("cannot write " + path.string());
}

namespace {

void dump_diagnostics(const std::filesystem::path& path, const nets::ModelBundle& model, int epoch, int step,
                      double lr, const std::string& message) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& p : model->named_parameters(true)) {
    const auto t = p.value().detach();
    params[p.key()] = {{"norm", t.norm().item<double>()},
                       {"finite", t.isfinite().all().item<bool>()},
                       {"grad_norm", p.value().grad().defined() ? p.value().grad().norm().item<double>() : 0.0}};
  }
  const nlohmann::json doc = {
      {"error", message}, {"epoch", epoch}, {"step", step}, {"lr", lr}, {"parameters", params}};
  std::ofstream out(path);
  out << doc.dump(2) << "\n";
}

}  // namespace

TrainResult train(const ingest::RecordStore& store, const TrainOptions& options) {
  options.hyper.validate();
  options.augment.validate();
  options.model.validate();
  const auto& hyper = options.hyper;
  const auto train_rows = store.rows(ingest::Split::train);
  if (train_rows.empty()) throw DataError("record store has no train-split cells");
  if (store.crop_size != options.model.cell.input_size) {
    throw ConfigError("crop size " + std::to_string(store.crop_size) + " differs from the cell encoder input size " +
                      std::to_string(options.model.cell.input_size));
  }
  if (options.model.with_env && store.env_size != options.model.env.input_size) {
    throw ConfigError("environment patch size " + std::to_string(store.env_size) +
                      " differs from the environment encoder input size " +
                      std::to_string(options.model.env.input_size));
  }
  const bool write = !options.output_dir.empty();
  if (write) std::filesystem::create_directories(options.output_dir);

  torch::manual_seed(derive_seed(options.seed, {kInitTag}));
  TrainResult result;
  result.model = nets::ModelBundle(options.model);
  auto& model = result.model;
  model->train();
  NegativeQueue queue(hyper.queue_size, options.model.proj_dim);
  auto optimizer = make_optimizer(model, hyper);

  const auto n = train_rows.size();
  const auto bs = static_cast<std::size_t>(hyper.batch_size);
  const int steps = static_cast<int>((n + bs - 1) / bs);
  std::int64_t global_step = 0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    auto order = train_rows;
    Rng shuffle_rng(derive_seed(options.seed, {kShuffleTag, static_cast<std::uint64_t>(epoch)}));
    shuffle(order, shuffle_rng);
    double epoch_sum = 0.0;
    for (int step = 0; step < steps; ++step) {
      const auto begin = static_cast<std::size_t>(step) * bs;
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                          order.begin() + static_cast<std::ptrdiff_t>(std::min(n, begin + bs)));
      const double lr = lr_at(hyper, epoch, step, steps);
      set_learning_rate(optimizer, lr);
      const auto batch = build_batch(store, rows, options.augment, options.model.with_env, options.seed, epoch, step,
                                     options.workers);
      LossRow row{epoch, step, {}, lr};
      try {
        row.loss = training_step(model, batch, queue, hyper, optimizer);
      } catch (const NumericalFailure& e) {
        if (write) {
          dump_diagnostics(options.output_dir / "diagnostics.json", model, epoch, step, lr, e.what());
          write_loss_csv(result.losses, options.output_dir / "losses.csv");
        }
        throw;
      }
      ++global_step;
      epoch_sum += row.loss.total;
      result.losses.push_back(row);
      if (options.on_step) options.on_step(row);
    }
    result.epoch_means.push_back(epoch_sum / steps);
    char msg[128];
    std::snprintf(msg, sizeof msg, "epoch %d/%d mean loss %.4f lr %.3g", epoch + 1, hyper.epochs,
                  result.epoch_means.back(), result.losses.back().lr);
    log::info(msg);
    if (write) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_e%04d.pt", epoch + 1);
      const auto path = options.output_dir / name;
      nets::CheckpointMeta meta{global_step, epoch + 1, options.config_hash, options.model_hash,
                                nets::spec_to_json(options.model)};
      nets::save_checkpoint(model, meta, path);
      if (!options.keep_all_checkpoints && !result.checkpoints.empty()) {
        std::filesystem::remove(result.checkpoints.back());
        result.checkpoints.pop_back();
      }
      result.checkpoints.push_back(path);
      write_loss_csv(result.losses, options.output_dir / "losses.csv");
    }
  }
  return result;
}

}  // namespace volta::contrastive
