// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "volta/augment/augment.hpp"
#include "volta/cluster/embedding.hpp"
#include "volta/contrastive/hyper.hpp"
#include "volta/finetune/config.hpp"
#include "volta/ingest/dataset.hpp"
#include "volta/nets/spec.hpp"
#include "volta/subtype/profiles.hpp"
#include "volta/synthetic/synthetic.hpp"

namespace volta::app {

struct EvalConfig {
  int k = 0;  // 0: number of ground-truth classes
  int n_init = 10;
  int max_iter = 300;
  cluster::EmbeddingSource source = cluster::EmbeddingSource::momentum_encoder;
  std::string layer = "features";
  int batch_size = 256;
};

struct SubtypeConfig {
  int patch_size = 400;
  int groups = 5;       // G, patch groups
  int per_group = 100;  // patches sampled per group
  int k = 10;           // cell clusters in discovery mode
  double pca_variance = 0.95;
  int n_flat = 4;
  subtype::SlideAggregation aggregation = subtype::SlideAggregation::sum_counts;
  std::map<int, std::string> cluster_names;  // merge map; empty keeps ids
};

/// Every setting of a run. Loaded from TOML (or the JSON written by
/// to_json); command-line flags override afterwards.
///
/// TOML layout: top-level seed, output_dir, workers; tables [ingest],
/// [ingest.ihc] with [[ingest.ihc.biomarkers]], [ingest.label_map],
/// [augment], [augment.jitter], [model], [model.cell], [model.env],
/// [hyperparams], [eval], [finetune], [subtype], [subtype.cluster_names],
/// [synthetic]. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir;  // not hashed
  int workers = 1;         // not hashed
  ingest::IngestConfig ingest;
  augment::AugmentationConfig augment;
  nets::ModelSpec model;
  contrastive::HyperParams hyperparams;
  EvalConfig eval;
  finetune::FinetuneConfig finetune;
  SubtypeConfig subtype;
  synthetic::SyntheticConfig synthetic;

  static RunConfig load(const std::filesystem::path& path);
  static RunConfig from_toml(const std::string& text);
  static RunConfig from_json(const nlohmann::json& doc);
  [[nodiscard]] nlohmann::json to_json() const;

  /// SHA-256 of the canonical JSON without output_dir and workers.
  [[nodiscard]] std::string hash() const;
  /// SHA-256 of the model section alone; checkpoints carry it.
  [[nodiscard]] std::string model_hash() const;

  /// Seed and worker count are mirrored into the sections that use them.
  void set_seed(std::uint64_t value);
  void set_workers(int value);

  /// Throws ConfigError when any section is invalid.
  void validate() const;
};

}  // namespace volta::app
