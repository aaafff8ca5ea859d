// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "volta/app/commands.hpp"
#include "volta/common/error.hpp"
#include "volta/common/log.hpp"

namespace fs = std::filesystem;
using namespace volta;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string log_level = "info";
};

app::RunConfig load_config(const Globals& g) {
  app::RunConfig c = g.config_path.empty() ? app::RunConfig{} : app::RunConfig::load(g.config_path);
  if (g.seed) c.set_seed(*g.seed);
  if (g.workers) c.set_workers(*g.workers);
  return c;
}

/// --out, else <output_dir>/<command>, else $VOLTA_CACHE/<command>, else ./volta_runs/<command>.
fs::path output_dir(const std::string& out, const app::RunConfig& config, const std::string& command) {
  if (!out.empty()) return out;
  if (!config.output_dir.empty()) return fs::path(config.output_dir) / command;
  if (const char* cache = std::getenv("VOLTA_CACHE"); cache != nullptr && *cache != '\0') {
    return fs::path(cache) / command;
  }
  return fs::path("volta_runs") / command;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Environment-aware contrastive cell representation toolkit"};
  cli.require_subcommand(1);
  Globals g;
  const app::Argv args(argv, argv + argc);
  cli.add_option("-c,--config", g.config_path, "TOML run configuration")->check(CLI::ExistingFile);
  cli.add_option("--seed", g.seed, "global seed (overrides the configuration)");
  cli.add_option("--workers", g.workers, "worker threads; 1 gives bit-reproducible runs")->check(CLI::PositiveNumber);
  cli.add_option("--log-level", g.log_level, "debug, info, warn, error or off");

  std::string out;
  std::function<void()> action;

  auto* extract = cli.add_subcommand("extract", "build a record store from a dataset manifest");
  std::string manifest, hook;
  extract->add_option("--manifest", manifest, "dataset manifest JSON")->required()->check(CLI::ExistingFile);
  extract->add_option("--preprocess-hook", hook, "executable run as <hook> <in> <out> on every image");
  extract->add_option("-o,--out", out, "record store directory");
  extract->callback([&] {
    action = [&] {
      auto c = load_config(g);
      if (!hook.empty()) c.ingest.preprocess_hook = hook;
      const auto dir = output_dir(out, c, "extract");
      const auto store = app::cmd_extract(manifest, c, dir, args);
      std::printf("%zu cells -> %s\n", store.size(), dir.string().c_str());
    };
  });

  auto* train = cli.add_subcommand("train", "contrastive pre-training");
  std::string store;
  std::optional<int> epochs, batch, queue;
  std::optional<double> lambda;
  train->add_option("--store", store, "record store directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--epochs", epochs, "training epochs");
  train->add_option("--batch-size", batch, "cells per step");
  train->add_option("--queue-size", queue, "negative queue capacity (0 disables it)");
  train->add_option("--lambda", lambda, "environment loss weight");
  train->add_option("-o,--out", out, "checkpoint directory");
  train->callback([&] {
    action = [&] {
      auto c = load_config(g);
      if (epochs) c.hyperparams.epochs = *epochs;
      if (batch) c.hyperparams.batch_size = *batch;
      if (queue) c.hyperparams.queue_size = *queue;
      if (lambda) c.hyperparams.lambda = *lambda;
      const auto dir = output_dir(out, c, "train");
      const auto summary = app::cmd_train(store, c, dir, args);
      std::printf("final checkpoint %s\n", summary.checkpoints.back().string().c_str());
    };
  });

  auto* embed = cli.add_subcommand("embed", "embed cells with a trained checkpoint");
  std::string checkpoint, split = "all", source, layer;
  embed->add_option("--checkpoint", checkpoint, "checkpoint file or training directory")->required();
  embed->add_option("--store", store, "record store directory")->required()->check(CLI::ExistingDirectory);
  embed->add_option("--split", split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));
  embed->add_option("--source", source, "momentum_encoder or backbone")
      ->check(CLI::IsMember({"momentum_encoder", "backbone"}));
  embed->add_option("--layer", layer, "features or projection")->check(CLI::IsMember({"features", "projection"}));
  embed->add_option("-o,--out", out, "embedding directory");
  embed->callback([&] {
    action = [&] {
      const auto c = load_config(g);
      const auto src = source.empty() ? c.eval.source : cluster::parse_embedding_source(source);
      const auto dir = output_dir(out, c, "embed");
      std::optional<ingest::Split> s;
      if (split != "all") s = ingest::parse_split(split);
      const auto emb = app::cmd_embed(checkpoint, store, s, src, layer.empty() ? c.eval.layer : layer,
                                      g.config_path.empty() ? nullptr : &c, dir, args);
      std::printf("%zu x %zu embeddings -> %s\n", emb.rows(), emb.dim, dir.string().c_str());
    };
  });

  auto* clus = cli.add_subcommand("cluster", "K-means on embeddings");
  std::string embeddings;
  std::optional<int> k;
  clus->add_option("--embeddings", embeddings, "embedding directory")->required()->check(CLI::ExistingDirectory);
  clus->add_option("--store", store, "record store directory")->required()->check(CLI::ExistingDirectory);
  clus->add_option("--k", k, "cluster count (0: number of label classes)");
  clus->add_option("-o,--out", out, "assignment directory");
  clus->callback([&] {
    action = [&] {
      const auto c = load_config(g);
      const auto dir = output_dir(out, c, "cluster");
      const auto a = app::cmd_cluster(embeddings, store, k.value_or(c.eval.k), c, dir, args);
      std::printf("k=%d inertia=%.6g -> %s\n", a.k, a.inertia, dir.string().c_str());
    };
  });

  auto* eval = cli.add_subcommand("eval", "AMI, ARI and purity of assignments against labels");
  std::string assignments;
  eval->add_option("--assignments", assignments, "assignments.csv")->required()->check(CLI::ExistingFile);
  eval->add_option("--store", store, "record store directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("-o,--out", out, "report directory");
  eval->callback([&] {
    action = [&] {
      const auto c = load_config(g);
      const auto dir = output_dir(out, c, "eval");
      const auto r = app::cmd_eval(assignments, store, dir, args);
      std::printf("AMI %.4f  ARI %.4f  Purity %.4f  (n=%zu, k=%zu)\n", r.ami, r.ari, r.purity, r.n, r.k);
    };
  });

  auto* ft = cli.add_subcommand("finetune", "train a classifier head on a label fraction");
  std::optional<double> fraction;
  std::optional<int> depth;
  std::optional<bool> freeze;
  ft->add_option("--checkpoint", checkpoint, "checkpoint file or training directory")->required();
  ft->add_option("--store", store, "record store directory")->required()->check(CLI::ExistingDirectory);
  ft->add_option("--fraction", fraction, "label fraction in (0, 1]");
  ft->add_option("--head-depth", depth, "1 or 2")->check(CLI::IsMember({1, 2}));
  ft->add_flag("--freeze,!--no-freeze", freeze, "freeze the encoder");
  ft->add_option("-o,--out", out, "report directory");
  ft->callback([&] {
    action = [&] {
      auto c = load_config(g);
      if (fraction) c.finetune.label_fraction = *fraction;
      if (depth) c.finetune.head_depth = *depth;
      if (freeze) c.finetune.freeze_backbone = *freeze;
      const auto dir = output_dir(out, c, "finetune");
      const auto r = app::cmd_finetune(checkpoint, store, c, dir, args);
      std::printf("Top-1 test %.4f  train %.4f  (%zu labelled cells)\n", r.top1_test, r.top1_train, r.n_train);
    };
  });

  auto* sub = cli.add_subcommand("subtype", "slide-level subtype discovery");
  std::string slides;
  std::optional<int> n_flat, groups;
  sub->add_option("--assignments", assignments, "assignments.csv")->required()->check(CLI::ExistingFile);
  sub->add_option("--slides", slides, "slides.csv")->required()->check(CLI::ExistingFile);
  sub->add_option("--n-flat", n_flat, "flat subtype count");
  sub->add_option("--groups", groups, "patch groups G");
  sub->add_option("-o,--out", out, "report directory");
  sub->callback([&] {
    action = [&] {
      auto c = load_config(g);
      if (n_flat) c.subtype.n_flat = *n_flat;
      if (groups) c.subtype.groups = *groups;
      const auto dir = output_dir(out, c, "subtype");
      const auto r = app::cmd_subtype(assignments, slides, c, dir, args);
      for (std::size_t i = 0; i < r.report.slide_ids.size(); ++i) {
        std::printf("%s\t%d\n", r.report.slide_ids[i].c_str(), r.report.flat_labels[i]);
      }
    };
  });

  auto* syn = cli.add_subcommand("synthetic", "generate a synthetic benchmark");
  std::string variant;
  std::optional<int> n_train, n_test;
  syn->add_option("--variant", variant, "cells, environment or slides")
      ->check(CLI::IsMember({"cells", "environment", "slides"}));
  syn->add_option("--n-train", n_train, "train cells");
  syn->add_option("--n-test", n_test, "test cells");
  syn->add_option("-o,--out", out, "dataset directory");
  syn->callback([&] {
    action = [&] {
      auto c = load_config(g);
      if (!variant.empty()) c.synthetic.variant = synthetic::parse_variant(variant);
      if (n_train) c.synthetic.n_train = *n_train;
      if (n_test) c.synthetic.n_test = *n_test;
      const auto dir = output_dir(out, c, "synthetic");
      const auto s = app::cmd_synthetic(c, dir, args);
      std::printf("%d cells -> %s\n", s.n_cells, dir.string().c_str());
    };
  });

  auto* ov = cli.add_subcommand("overlay", "draw cluster-coloured outlines over a slide");
  std::string slide_id;
  double alpha = 1.0;
  ov->add_option("--store", store, "record store directory")->required()->check(CLI::ExistingDirectory);
  ov->add_option("--assignments", assignments, "assignments.csv")->required()->check(CLI::ExistingFile);
  ov->add_option("--slide", slide_id, "slide id")->required();
  ov->add_option("--alpha", alpha, "outline opacity in [0, 1]")->check(CLI::Range(0.0, 1.0));
  ov->add_option("-o,--out", out, "output directory");
  ov->callback([&] {
    action = [&] {
      const auto c = load_config(g);
      const auto dir = output_dir(out, c, "overlay");
      std::printf("%s\n", app::cmd_overlay(store, assignments, slide_id, alpha, dir, args).string().c_str());
    };
  });

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::config);
  }
  try {
    log::set_level(g.log_level);
    action();
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return static_cast<int>(ExitCode::internal);
  }
}
