// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails. Usage: volta_acceptance [--cli PATH] [--work DIR] [--only 1,2,...]
#include <torch/torch.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support/loss_oracle.hpp"
#include "support/metrics_oracle.hpp"
#include "support/toy_model.hpp"
#include "support/toy_store.hpp"
#include "volta/app/config.hpp"
#include "volta/app/pipeline.hpp"
#include "volta/cluster/kmeans.hpp"
#include "volta/cluster/metrics.hpp"
#include "volta/common/log.hpp"
#include "volta/contrastive/contrastive.hpp"
#include "volta/embed/embed.hpp"
#include "volta/finetune/finetune.hpp"
#include "volta/ingest/dataset.hpp"
#include "volta/ingest/extract.hpp"
#include "volta/ingest/io.hpp"
#include "volta/synthetic/synthetic.hpp"

namespace fs = std::filesystem;
using namespace volta;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  fs::path cli;
  fs::path configs = fs::path(VOLTA_SOURCE_DIR) / "tools" / "configs";
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- criterion 1

Outcome loss_oracle() {
  using testing::Rows;
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> g;
  auto rows = [&](std::size_t n, std::size_t d) {
    Rows out(n, std::vector<double>(d));
    for (auto& r : out) {
      for (auto& v : r) v = g(gen);
      r = testing::unit(r);
    }
    return out;
  };
  auto tensor = [](const Rows& r, std::size_t d) {
    auto t = torch::zeros({static_cast<long>(r.size()), static_cast<long>(d)}, torch::kFloat64);
    for (std::size_t i = 0; i < r.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) t[static_cast<long>(i)][static_cast<long>(j)] = r[i][j];
    return t;
  };
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + gen() % 4, d = 2 + gen() % 7, qn = gen() % 9;
    const double tau = 0.05 + 0.5 * std::uniform_real_distribution<double>()(gen);
    const auto z = rows(n, d), k = rows(n, d), neg = rows(qn, d), c = rows(n, d), e = rows(n, d);
    contrastive::NegativeQueue queue(8, static_cast<int>(d));
    if (qn > 0) queue.push(tensor(neg, d));
    const double lc = contrastive::info_nce_cell(tensor(z, d), tensor(k, d), queue, tau).item<double>();
    const double le = contrastive::info_nce_env(tensor(c, d), tensor(e, d), tau).item<double>();
    const double oc = testing::scalar_info_nce(z, k, neg, tau);
    const double oe = testing::scalar_info_nce(c, e, {}, tau);
    worst = std::max({worst, std::abs(lc - oc) / std::abs(oc), std::abs(le - oe) / std::max(std::abs(oe), 1e-300)});
  }
  // Uniform candidates: queries orthogonal to every candidate, M = 1 + queue.
  bool uniform_ok = true;
  for (int q = 0; q <= 6; ++q) {
    const auto eye = torch::eye(8, torch::kFloat64);
    contrastive::NegativeQueue queue(8, 8);
    if (q > 0) queue.push(eye.slice(0, 2, 2 + q));
    const double l = contrastive::info_nce_cell(eye.slice(0, 0, 1), eye.slice(0, 1, 2), queue, 0.07).item<double>();
    uniform_ok = uniform_ok && l == std::log(static_cast<double>(1 + q));
  }
  {
    // Every query identical, every environment identical: N equal logits.
    const auto row = torch::full({4, 2}, std::sqrt(0.5), torch::kFloat64);
    const double l = contrastive::info_nce_env(row, row, 0.1).item<double>();
    uniform_ok = uniform_ok && std::abs(l - std::log(4.0)) <= 4 * std::numeric_limits<double>::epsilon();
  }
  return {worst <= 1e-10 && uniform_ok,
          "max rel err " + fmt("%.2e", worst) + (uniform_ok ? ", ln(M) exact" : ", ln(M) MISMATCH")};
}

// ---------------------------------------------------------------- criterion 2

Outcome gradient_check() {
  const double h = 1e-6;
  double worst = 0.0;
  std::size_t checked = 0;
  for (double lambda : {0.0, 0.5, 1.0}) {
    torch::manual_seed(17);
    nets::ModelBundle model(testing::mlp_spec());
    model->to(torch::kFloat64);
    contrastive::HyperParams hyper;
    hyper.lambda = lambda;
    hyper.tau = 0.07;
    contrastive::StepBatch batch;
    batch.query_views = torch::randn({2, 2, 2, 2}, torch::kFloat64);
    batch.key_views = torch::randn({2, 2, 2, 2}, torch::kFloat64);
    batch.env_views = torch::randn({2, 2, 2, 2}, torch::kFloat64);
    batch.rows = {0, 1};
    contrastive::NegativeQueue queue(4, 4);
    queue.push(torch::nn::functional::normalize(torch::randn({3, 4}, torch::kFloat64),
                                                torch::nn::functional::NormalizeFuncOptions().dim(1)));
    auto params = model->trainable_parameters();
    for (auto& p : params) p.mutable_grad() = torch::Tensor();
    auto losses = contrastive::compute_losses(model, batch, queue, hyper);
    losses.total.backward();
    auto loss_value = [&] {
      torch::NoGradGuard g;
      return contrastive::compute_losses(model, batch, queue, hyper).total.item<double>();
    };
    for (auto& p : params) {
      const auto analytic = p.grad().defined() ? p.grad().clone() : torch::zeros_like(p);
      auto flat = p.detach().view(-1);
      auto grad = analytic.view(-1);
      for (long i = 0; i < flat.numel(); ++i) {
        const double x0 = flat[i].item<double>();
        flat[i] = x0 + h;
        const double up = loss_value();
        flat[i] = x0 - h;
        const double down = loss_value();
        flat[i] = x0;
        const double numeric = (up - down) / (2 * h);
        const double a = grad[i].item<double>();
        // Relative error with an absolute floor at the finite-difference noise level.
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4});
        worst = std::max(worst, rel);
        ++checked;
      }
    }
  }
  return {worst <= 1e-4, std::to_string(checked) + " partials, max rel err " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------- criterion 3

Outcome momentum_exactness() {
  const auto store = testing::toy_store(16, 16, 16, 3);
  contrastive::HyperParams hyper;
  hyper.momentum = 0.99;
  hyper.queue_size = 16;
  hyper.lr = 1e-2;
  torch::manual_seed(3);
  nets::ModelBundle model(testing::small_conv_spec());
  bool copy_ok = true;
  for (const auto& [name, pair] : model->momentum_pairs()) copy_ok = copy_ok && torch::equal(pair.first, pair.second);
  contrastive::NegativeQueue queue(hyper.queue_size, 8);
  auto opt = contrastive::make_optimizer(model, hyper);
  double worst = 0.0;  // error in units of the float rounding bound
  std::vector<std::size_t> rows(8);
  for (int step = 0; step < 10; ++step) {
    std::iota(rows.begin(), rows.end(), static_cast<std::size_t>(step % 2) * 8);
    std::vector<torch::Tensor> k_prev;
    for (const auto& [name, pair] : model->momentum_pairs()) k_prev.push_back(pair.second.detach().clone());
    contrastive::training_step(model, contrastive::build_batch(store, rows, {}, true, 1, 0, step, 1), queue, hyper,
                               opt);
    std::size_t i = 0;
    for (const auto& [name, pair] : model->momentum_pairs()) {
      const auto q = pair.first.detach().to(torch::kFloat64);
      const auto kp = k_prev[i++].to(torch::kFloat64);
      const auto oracle = hyper.momentum * kp + (1.0 - hyper.momentum) * q;
      const auto bound = 2.0 * std::numeric_limits<float>::epsilon() *
                             (hyper.momentum * kp.abs() + (1.0 - hyper.momentum) * q.abs()) +
                         std::numeric_limits<float>::denorm_min();
      const auto err = (pair.second.detach().to(torch::kFloat64) - oracle).abs() / bound;
      worst = std::max(worst, err.max().item<double>());
    }
  }
  return {copy_ok && worst <= 1.0,
          std::string(copy_ok ? "step-0 copy exact" : "step-0 copy DIFFERS") + ", max error " + fmt("%.3f", worst) +
              " of the 2-ulp float bound"};
}

// ---------------------------------------------------------------- criterion 4

Outcome queue_contract() {
  const int n = 8, q = 32;
  const auto store = testing::toy_store(n, 16, 16, 4);
  contrastive::HyperParams hyper;
  hyper.queue_size = q;
  hyper.momentum = 0.9;
  torch::manual_seed(4);
  nets::ModelBundle model(testing::small_conv_spec());
  contrastive::NegativeQueue queue(q, 8);
  auto opt = contrastive::make_optimizer(model, hyper);
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<torch::Tensor> history;
  bool ok = true;
  for (int step = 0; step < 10; ++step) {
    const auto batch = contrastive::build_batch(store, rows, {}, true, 2, 0, step, 1);
    history.push_back(torch::nn::functional::normalize(model->forward_key(batch.key_views),
                                                       torch::nn::functional::NormalizeFuncOptions().dim(1))
                          .to(torch::kFloat64));
    contrastive::training_step(model, batch, queue, hyper, opt);
    const auto all = torch::cat(history, 0);
    const long keep = std::min<long>(all.size(0), q);
    const auto expected = all.slice(0, all.size(0) - keep, all.size(0));
    ok = ok && queue.size() == keep && torch::equal(queue.contents(), expected);
  }
  return {ok && queue.size() == q, "10 steps of 8 keys, queue holds " + std::to_string(queue.size()) +
                                       (ok ? " newest keys in order" : " keys, MISMATCH")};
}

// ---------------------------------------------------------------- criterion 5

Outcome metrics_oracle() {
  std::vector<std::vector<int>> labelings;
  for (int code = 0; code < 729; ++code) {
    std::vector<int> l(6);
    for (int i = 0, c = code; i < 6; ++i, c /= 3) l[static_cast<std::size_t>(i)] = c % 3;
    labelings.push_back(l);
  }
  double worst = 0.0;
  for (const auto& a : labelings) {
    for (const auto& b : labelings) {
      worst = std::max({worst, std::abs(cluster::adjusted_mutual_info(a, b) - testing::oracle_ami(a, b)),
                        std::abs(cluster::adjusted_rand_index(a, b) - testing::oracle_ari(a, b)),
                        std::abs(cluster::purity(a, b) - testing::oracle_purity(a, b))});
    }
  }
  const std::vector<int> truth{0, 0, 1, 1, 2, 2}, same{2, 2, 0, 0, 1, 1}, single(6, 0);
  const bool identical = cluster::adjusted_mutual_info(same, truth) == 1.0 &&
                         cluster::adjusted_rand_index(same, truth) == 1.0 && cluster::purity(same, truth) == 1.0;
  const bool collapsed = cluster::adjusted_rand_index(single, truth) == 0.0;
  return {worst <= 1e-9 && identical && collapsed, "531441 pairs, max abs err " + fmt("%.2e", worst) +
                                                       (identical ? ", identical -> 1,1,1" : ", identical WRONG") +
                                                       (collapsed ? ", single cluster -> ARI 0" : ", single WRONG")};
}

// ------------------------------------------------------- synthetic benchmarks

struct Bench {
  app::RunConfig config;
  ingest::RecordStore store;
};

Bench prepare(const Context& ctx, const std::string& config_name, std::uint64_t seed) {
  Bench b{app::RunConfig::load(ctx.configs / config_name), {}};
  b.config.set_seed(seed);
  b.config.validate();
  const auto dir = ctx.work / (fs::path(config_name).stem().string() + "_seed" + std::to_string(seed));
  if (!fs::exists(dir / "manifest.json")) synthetic::generate(b.config.synthetic, dir);
  b.store = ingest::build_dataset(ingest::DatasetManifest::load(dir / "manifest.json"), b.config.ingest);
  return b;
}

nets::ModelBundle train_model(const Bench& b, double lambda) {
  contrastive::TrainOptions opt;
  opt.hyper = b.config.hyperparams;
  opt.hyper.lambda = lambda;
  opt.augment = b.config.augment;
  opt.model = b.config.model;
  opt.seed = b.config.seed;
  opt.workers = b.config.workers;
  return contrastive::train(b.store, opt).model;
}

double test_ami(nets::ModelBundle& model, const Bench& b) {
  const auto rows = b.store.rows(ingest::Split::test);
  const auto emb = embed::embed_cells(model, b.store, rows, cluster::EmbeddingSource::momentum_encoder);
  std::vector<std::string> labels;
  for (auto r : rows) labels.push_back(*b.store.cells[r].label);
  cluster::KMeansOptions km;
  km.k = 3;
  km.seed = b.config.seed;
  km.n_init = b.config.eval.n_init;
  km.max_iter = b.config.eval.max_iter;
  const auto assignment = cluster::kmeans(emb.values, emb.rows(), emb.dim, km);
  return cluster::adjusted_mutual_info(assignment.labels, cluster::encode_labels(labels));
}

std::map<std::uint64_t, std::pair<Bench, nets::ModelBundle>> g_trained;  // criterion 6 models, reused by 9

// ---------------------------------------------------------------- criterion 6

Outcome representation_benchmark(const Context& ctx) {
  int passed = 0;
  std::string detail;
  for (std::uint64_t seed : {0, 1, 2}) {
    auto bench = prepare(ctx, "synthetic_bench.toml", seed);
    torch::manual_seed(derive_seed(seed, {0x5eed}));
    nets::ModelBundle untrained(bench.config.model);
    const double before = test_ami(untrained, bench);
    auto model = train_model(bench, bench.config.hyperparams.lambda);
    const double after = test_ami(model, bench);
    const bool ok = after >= 0.5 && after - before >= 0.2;
    passed += ok ? 1 : 0;
    detail += "seed " + std::to_string(seed) + ": " + fmt("%.3f", before) + " -> " + fmt("%.3f", after) +
              (ok ? "" : " (miss)") + "; ";
    g_trained.emplace(seed, std::make_pair(std::move(bench), model));
  }
  return {passed >= 2, detail + std::to_string(passed) + "/3 seeds"};
}

// ---------------------------------------------------------------- criterion 7

Outcome environment_direction(const Context& ctx) {
  int passed = 0;
  std::string detail;
  for (std::uint64_t seed : {0, 1, 2}) {
    const auto bench = prepare(ctx, "synthetic_env.toml", seed);
    auto plain = train_model(bench, 0.0);
    auto env = train_model(bench, 1.0);
    const double a0 = test_ami(plain, bench), a1 = test_ami(env, bench);
    passed += a1 >= a0 ? 1 : 0;
    detail += "seed " + std::to_string(seed) + ": lambda0 " + fmt("%.3f", a0) + " lambda1 " + fmt("%.3f", a1) + "; ";
  }
  return {passed >= 2, detail + std::to_string(passed) + "/3 seeds"};
}

// ---------------------------------------------------------------- criterion 8

Outcome masking(const Context& ctx) {
  synthetic::SyntheticConfig cfg;
  cfg.variant = synthetic::Variant::environment;
  cfg.n_train = 20;
  cfg.n_test = 20;
  cfg.seed = 8;
  const auto dir = ctx.work / "masking";
  const auto summary = synthetic::generate(cfg, dir);
  const auto manifest = ingest::DatasetManifest::load(summary.manifest);
  const cv::Vec3f fill(0.25F, 0.5F, 0.75F);
  std::size_t footprint_pixels = 0, leaks = 0, patches = 0;
  for (const auto& rec : manifest.records) {
    const ingest::SlideImage image{ingest::read_rgb(rec.image), "", rec.slide_id};
    const auto mask = ingest::read_mask(rec.mask, image.height(), image.width());
    const auto cells = ingest::instances_from_labels(mask.labels, rec.slide_id);
    for (const auto& cell : cells) {
      // Full-resolution patch: footprint read straight from the label image.
      const int side = 96;
      const auto w = ingest::centered_window(cell.centroid_row, cell.centroid_col, side, image.height(), image.width());
      if (w.height() == side && w.width() == side) {
        const auto p = ingest::extract_environment_patch(image, cell, cells, side, side, ingest::MaskPolicy::all_cells,
                                                         fill);
        for (int r = 0; r < side; ++r)
          for (int c = 0; c < side; ++c) {
            if (mask.labels.at<int>(w.row0 + r, w.col0 + c) == 0) continue;
            ++footprint_pixels;
            if (p.pixels.at<cv::Vec3f>(r, c) != fill) ++leaks;
          }
        ++patches;
      }
      // Resized patch: every pixel of the resized footprint.
      const auto small = ingest::extract_environment_patch(image, cell, cells, side, 48, ingest::MaskPolicy::all_cells,
                                                           fill);
      for (int r = 0; r < 48; ++r)
        for (int c = 0; c < 48; ++c) {
          if (small.footprint.at<uchar>(r, c) == 0) continue;
          ++footprint_pixels;
          if (small.pixels.at<cv::Vec3f>(r, c) != fill) ++leaks;
        }
    }
  }
  return {leaks == 0 && footprint_pixels > 0, std::to_string(patches) + " unclipped patches, " +
                                                  std::to_string(footprint_pixels) + " footprint pixels, " +
                                                  std::to_string(leaks) + " non-fill"};
}

// ---------------------------------------------------------------- criterion 9

Outcome finetune_contract(const Context& ctx) {
  if (g_trained.count(0) == 0) {
    auto bench = prepare(ctx, "synthetic_bench.toml", 0);
    auto model = train_model(bench, bench.config.hyperparams.lambda);
    g_trained.emplace(0, std::make_pair(std::move(bench), model));
  }
  auto& [bench, model] = g_trained.at(0);
  const auto digest_backbone = nets::parameter_digest(*model->backbone);
  const auto digest_momentum = nets::parameter_digest(*model->momentum_encoder);
  auto cfg = bench.config.finetune;
  const auto result = finetune::train_classifier(model, bench.store, bench.store.rows(ingest::Split::train), cfg);
  const double top1 = finetune::evaluate_top1(model, result, bench.store, bench.store.rows(ingest::Split::test),
                                              cfg.source);
  const bool frozen = nets::parameter_digest(*model->backbone) == digest_backbone &&
                      nets::parameter_digest(*model->momentum_encoder) == digest_momentum;
  return {frozen && top1 >= 0.9, std::string(frozen ? "encoders bitwise unchanged" : "encoders CHANGED") + ", " +
                                     std::to_string(result.n_train) + " labels, test top-1 " + fmt("%.3f", top1)};
}

// --------------------------------------------------------------- criterion 10

Outcome subtype_pipeline(const Context& ctx) {
  synthetic::SyntheticConfig cfg;
  cfg.variant = synthetic::Variant::slides;
  cfg.seed = 10;
  const auto s = synthetic::generate(cfg, ctx.work / "slides");
  const auto cells = app::read_assignments(s.assignments);
  const auto slides = app::read_slides(s.slides);
  app::SubtypeConfig sc;
  sc.patch_size = 400;
  sc.groups = 3;
  sc.n_flat = 3;
  const auto out = app::run_subtype(cells, slides, sc, cfg.seed);
  std::map<int, std::set<std::string>> families_of_cluster;
  std::set<int> clusters;
  for (std::size_t i = 0; i < out.slides.size(); ++i) {
    const auto& id = out.report.slide_ids[i];
    const auto it = std::find_if(slides.begin(), slides.end(), [&](const app::SlideRow& r) { return r.slide_id == id; });
    families_of_cluster[out.report.flat_labels[i]].insert(it->family);
    clusters.insert(out.report.flat_labels[i]);
  }
  bool pure = out.slides.size() == 9 && clusters.size() == 3;
  std::set<std::string> seen;
  for (const auto& [c, fams] : families_of_cluster) {
    pure = pure && fams.size() == 1 && seen.insert(*fams.begin()).second;
  }
  bool monotone = true;
  for (std::size_t i = 1; i < out.report.linkage.size(); ++i)
    monotone = monotone && out.report.linkage[i].height >= out.report.linkage[i - 1].height;
  return {pure && monotone, std::to_string(out.slides.size()) + " slides -> " + std::to_string(clusters.size()) +
                                " clusters, " + (pure ? "pure" : "MIXED") +
                                (monotone ? ", merge heights non-decreasing" : ", heights DECREASE")};
}

// --------------------------------------------------------------- criterion 11

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism(const Context& ctx) {
  if (ctx.cli.empty() || !fs::exists(ctx.cli)) return {false, "volta binary not found: " + ctx.cli.string()};
  const auto config = (ctx.configs / "synthetic_bench.toml").string();
  auto run = [&](const std::string& tag) -> std::optional<fs::path> {
    const auto dir = ctx.work / ("determinism_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string base = "\"" + ctx.cli.string() + "\" -c \"" + config + "\" --workers 1 --log-level warn ";
    const std::string d = "\"" + dir.string() + "\"";
    const std::vector<std::string> steps{
        base + "synthetic -o " + d + "/synthetic",
        base + "extract --manifest " + d + "/synthetic/manifest.json -o " + d + "/store",
        base + "train --store " + d + "/store -o " + d + "/train",
        base + "embed --checkpoint " + d + "/train --store " + d + "/store --split test -o " + d + "/embed",
        base + "cluster --embeddings " + d + "/embed --store " + d + "/store -o " + d + "/cluster",
    };
    for (const auto& cmd : steps) {
      if (std::system((cmd + " >> " + d + "/log.txt 2>&1").c_str()) != 0) return std::nullopt;
    }
    return dir;
  };
  const auto a = run("a");
  const auto b = run("b");
  if (!a || !b) return {false, "pipeline command failed"};
  const bool losses = slurp(*a / "train/losses.csv") == slurp(*b / "train/losses.csv") &&
                      !slurp(*a / "train/losses.csv").empty();
  const bool assignments = slurp(*a / "cluster/assignments.csv") == slurp(*b / "cluster/assignments.csv") &&
                           !slurp(*a / "cluster/assignments.csv").empty();
  return {losses && assignments, std::string("losses.csv ") + (losses ? "identical" : "DIFFER") +
                                     ", assignments.csv " + (assignments ? "identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--cli" && i + 1 < argc) {
      ctx.cli = argv[++i];
    } else if (arg == "--work" && i + 1 < argc) {
      ctx.work = argv[++i];
    } else if (arg == "--only" && i + 1 < argc) {
      std::stringstream s(argv[++i]);
      for (std::string tok; std::getline(s, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: %s [--cli PATH] [--work DIR] [--only 1,2,...]\n", argv[0]);
      return 2;
    }
  }
  if (ctx.work.empty()) ctx.work = fs::temp_directory_path() / "volta_acceptance";
  fs::create_directories(ctx.work);
  log::set_level("warn");
  torch::set_num_threads(1);

  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "loss-formula oracle", 1, loss_oracle},
      {2, "gradient check", 30, gradient_check},
      {3, "momentum-update exactness", 10, momentum_exactness},
      {4, "queue contract", 5, queue_contract},
      {5, "metrics oracle", 30, metrics_oracle},
      {6, "synthetic representation benchmark", 600, [&] { return representation_benchmark(ctx); }},
      {7, "environment-block direction", 900, [&] { return environment_direction(ctx); }},
      {8, "masking correctness", 1, [&] { return masking(ctx); }},
      {9, "fine-tune contract", 300, [&] { return finetune_contract(ctx); }},
      {10, "subtype pipeline", 120, [&] { return subtype_pipeline(ctx); }},
      {11, "determinism", 600, [&] { return determinism(ctx); }},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && only.count(c.id) == 0) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = seconds_since(t0);
    const bool in_time = elapsed <= c.limit_s;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    std::printf("criterion %2d %-36s %s  %.1f s (limit %.0f s%s)  %s\n", c.id, c.name, pass ? "PASS" : "FAIL", elapsed,
                c.limit_s, in_time ? "" : ", EXCEEDED", o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
