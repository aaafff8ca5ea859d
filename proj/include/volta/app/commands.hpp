// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "volta/app/config.hpp"
#include "volta/app/pipeline.hpp"
#include "volta/cluster/embedding.hpp"
#include "volta/cluster/kmeans.hpp"
#include "volta/cluster/metrics.hpp"
#include "volta/ingest/record_store.hpp"
#include "volta/synthetic/synthetic.hpp"

// Every command writes its artifacts plus a RunManifest into out_dir.
namespace volta::app {

using Argv = std::vector<std::string>;

ingest::RecordStore cmd_extract(const std::filesystem::path& manifest, const RunConfig& config,
                                const std::filesystem::path& out_dir, const Argv& argv = {});

struct TrainSummary {
  std::vector<std::filesystem::path> checkpoints;
  std::vector<double> epoch_means;
};
/// Trains on the record store; the last checkpoint is checkpoints.back().
TrainSummary cmd_train(const std::filesystem::path& store_dir, const RunConfig& config,
                       const std::filesystem::path& out_dir, const Argv& argv = {});

/// A checkpoint file, or a training directory (its latest checkpoint).
std::filesystem::path resolve_checkpoint(const std::filesystem::path& path);

/// Embeds the unaugmented crops of `split` (all cells when empty). When
/// expected is given, a checkpoint trained with another model configuration
/// is refused.
cluster::EmbeddingMatrix cmd_embed(const std::filesystem::path& checkpoint, const std::filesystem::path& store_dir,
                                   std::optional<ingest::Split> split, cluster::EmbeddingSource source,
                                   const std::string& layer, const RunConfig* expected,
                                   const std::filesystem::path& out_dir, const Argv& argv = {});

/// K-means on saved embeddings. k = 0 picks the number of label classes
/// among the embedded cells (subtype.k when unlabelled). Writes
/// assignments.csv, slides.csv, cluster.json and morphometrics.csv.
cluster::ClusterAssignment cmd_cluster(const std::filesystem::path& embeddings_dir,
                                       const std::filesystem::path& store_dir, int k, const RunConfig& config,
                                       const std::filesystem::path& out_dir, const Argv& argv = {});

/// Scores assignments against the store's labels (unlabelled cells are
/// skipped). Writes metrics.json.
cluster::MetricsReport cmd_eval(const std::filesystem::path& assignments, const std::filesystem::path& store_dir,
                                const std::filesystem::path& out_dir, const Argv& argv = {});

struct FinetuneReport {
  double top1_test = 0.0;
  double top1_train = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::string backbone_digest_before;
  std::string backbone_digest_after;
};
FinetuneReport cmd_finetune(const std::filesystem::path& checkpoint, const std::filesystem::path& store_dir,
                            const RunConfig& config, const std::filesystem::path& out_dir, const Argv& argv = {});

SubtypeOutcome cmd_subtype(const std::filesystem::path& assignments, const std::filesystem::path& slides,
                           const RunConfig& config, const std::filesystem::path& out_dir, const Argv& argv = {});

synthetic::SyntheticSummary cmd_synthetic(const RunConfig& config, const std::filesystem::path& out_dir,
                                          const Argv& argv = {});

/// Cluster-coloured outlines over one slide of the store; writes
/// overlay_<slide_id>.png into out_dir and returns its path.
std::filesystem::path cmd_overlay(const std::filesystem::path& store_dir, const std::filesystem::path& assignments,
                                  const std::string& slide_id, double alpha, const std::filesystem::path& out_dir,
                                  const Argv& argv = {});

}  // namespace volta::app
