// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace volta::subtype {

struct PatchOrigin {
  int row = 0;
  int col = 0;
  bool operator==(const PatchOrigin&) const = default;
};

/// Non-overlapping patch grid in row-major order; ragged edges are dropped.
std::vector<PatchOrigin> tile_slide(int height, int width, int patch_size = 400);

/// A cell reduced to what slide profiling needs.
struct CellPoint {
  double row = 0.0;  // centroid
  double col = 0.0;
  int cluster = 0;
};

struct PatchProfile {
  std::string slide_id;
  PatchOrigin origin;
  std::vector<std::int64_t> counts;  // per cell cluster
  std::int64_t total = 0;
};

/// Counts cells whose centroid lies in [row, row + size) x [col, col + size).
PatchProfile profile_patch(const std::string& slide_id, PatchOrigin origin, int patch_size,
                           std::span<const CellPoint> cells, int k);

/// Profiles of every tile of a slide (same counts as profile_patch per tile).
std::vector<PatchProfile> profile_slide(const std::string& slide_id, int height, int width,
                                        int patch_size, std::span<const CellPoint> cells, int k);

struct PatchGroups {
  std::vector<int> group_of;  // per profile; -1 for empty profiles (not grouped)
  int groups = 0;
};

/// K-means with k = G on L1-normalised count vectors of non-empty profiles.
/// G shrinks (with a warning) when fewer non-empty profiles exist.
PatchGroups group_patches(std::span<const PatchProfile> profiles, int groups, std::uint64_t seed,
                          int n_init = 10);

/// Uniform sample without replacement of up to per_group profiles from each
/// group; returns sorted profile indices.
std::vector<std::size_t> sample_patches(const PatchGroups& groups, int per_group, std::uint64_t seed);

enum class SlideAggregation { sum_counts, mean_distribution };

SlideAggregation parse_slide_aggregation(const std::string& name);

struct SlideProfile {
  std::string slide_id;
  std::vector<double> feature;  // L1-normalised distribution over cell clusters
  std::size_t n_patches_used = 0;
};

/// Aggregates selected patch profiles of one slide. sum_counts sums the count
/// vectors then normalises; mean_distribution averages per-patch
/// distributions. Returns nullopt (with a warning) when the slide has no cells.
std::optional<SlideProfile> slide_feature(const std::string& slide_id,
                                          std::span<const PatchProfile> selected,
                                          SlideAggregation aggregation = SlideAggregation::sum_counts);

struct MergedClusters {
  std::vector<int> labels;          // per cell, index into names
  std::vector<std::string> names;   // sorted distinct merged labels
  std::vector<int> cluster_to_merged;  // original cluster id -> merged index
};

/// Merges clusters that share a label. Every cluster id in `labels` must be
/// mapped.
MergedClusters merge_clusters(std::span<const int> labels, const std::map<int, std::string>& label_map);

/// Count vector re-expressed over merged clusters.
std::vector<std::int64_t> merge_counts(std::span<const std::int64_t> counts, const MergedClusters& merged);

}  // namespace volta::subtype
