// SPDX-License-Identifier: Apache-2.0
#include "volta/subtype/profiles.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "volta/cluster/kmeans.hpp"
#include "volta/common/error.hpp"
#include "volta/common/random.hpp"

namespace volta::subtype {

std::vector<PatchOrigin> tile_slide(int height, int width, int patch_size) {
  require(patch_size > 0, "patch size must be positive");
  std::vector<PatchOrigin> grid;
  for (int r = 0; r + patch_size <= height; r += patch_size) {
    for (int c = 0; c + patch_size <= width; c += patch_size) grid.push_back({r, c});
  }
  return grid;
}

PatchProfile profile_patch(const std::string& slide_id, PatchOrigin origin, int patch_size,
                           std::span<const CellPoint> cells, int k) {
  require(k > 0, "cluster count must be positive");
  PatchProfile p{slide_id, origin, std::vector<std::int64_t>(static_cast<std::size_t>(k), 0), 0};
  for (const auto& cell : cells) {
    if (cell.row >= origin.row && cell.row < origin.row + patch_size && cell.col >= origin.col &&
        cell.col < origin.col + patch_size) {
      require(cell.cluster >= 0 && cell.cluster < k, "cell cluster id outside [0, k)");
      ++p.counts[static_cast<std::size_t>(cell.cluster)];
      ++p.total;
    }
  }
  return p;
}

std::vector<PatchProfile> profile_slide(const std::string& slide_id, int height, int width,
                                        int patch_size, std::span<const CellPoint> cells, int k) {
  require(k > 0, "cluster count must be positive");
  const auto grid = tile_slide(height, width, patch_size);
  const int cols = width / patch_size;
  const int rows = height / patch_size;
  std::vector<PatchProfile> out;
  out.reserve(grid.size());
  for (const auto& o : grid) {
    out.push_back({slide_id, o, std::vector<std::int64_t>(static_cast<std::size_t>(k), 0), 0});
  }
  for (const auto& cell : cells) {
    if (cell.row < 0 || cell.col < 0) continue;
    const auto r = static_cast<int>(std::floor(cell.row / patch_size));
    const auto c = static_cast<int>(std::floor(cell.col / patch_size));
    if (r >= rows || c >= cols) continue;  // in the dropped ragged edge
    require(cell.cluster >= 0 && cell.cluster < k, "cell cluster id outside [0, k)");
    auto& p = out[static_cast<std::size_t>(r * cols + c)];
    ++p.counts[static_cast<std::size_t>(cell.cluster)];
    ++p.total;
  }
  return out;
}

PatchGroups group_patches(std::span<const PatchProfile> profiles, int groups, std::uint64_t seed,
                          int n_init) {
  require(groups >= 1, "group count must be >= 1");
  PatchGroups out;
  out.group_of.assign(profiles.size(), -1);
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (profiles[i].total > 0) used.push_back(i);
  }
  if (used.empty()) return out;
  if (static_cast<std::size_t>(groups) > used.size()) {
    spdlog::warn("only {} non-empty patches; reducing patch groups from {} to {}", used.size(),
                 groups, used.size());
    groups = static_cast<int>(used.size());
  }
  const std::size_t k = profiles[used.front()].counts.size();
  std::vector<float> data(used.size() * k);
  for (std::size_t r = 0; r < used.size(); ++r) {
    const auto& p = profiles[used[r]];
    require(p.counts.size() == k, "patch profiles disagree on cluster count");
    for (std::size_t j = 0; j < k; ++j) {
      data[r * k + j] = static_cast<float>(static_cast<double>(p.counts[j]) / static_cast<double>(p.total));
    }
  }
  cluster::KMeansOptions opt;
  opt.k = groups;
  opt.seed = seed;
  opt.n_init = n_init;
  const auto assignment = cluster::kmeans(data, used.size(), k, opt);
  for (std::size_t r = 0; r < used.size(); ++r) out.group_of[used[r]] = assignment.labels[r];
  out.groups = groups;
  return out;
}

std::vector<std::size_t> sample_patches(const PatchGroups& groups, int per_group, std::uint64_t seed) {
  require(per_group >= 0, "per_group must be non-negative");
  std::vector<std::size_t> selected;
  for (int g = 0; g < groups.groups; ++g) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < groups.group_of.size(); ++i) {
      if (groups.group_of[i] == g) members.push_back(i);
    }
    if (members.size() > static_cast<std::size_t>(per_group)) {
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(g)}));
      // Partial Fisher-Yates: the first per_group entries are a uniform sample.
      for (std::size_t i = 0; i < static_cast<std::size_t>(per_group); ++i) {
        const std::size_t j = i + uniform_index(rng, members.size() - i);
        std::swap(members[i], members[j]);
      }
      members.resize(static_cast<std::size_t>(per_group));
    }
    selected.insert(selected.end(), members.begin(), members.end());
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

SlideAggregation parse_slide_aggregation(const std::string& name) {
  if (name == "sum_counts") return SlideAggregation::sum_counts;
  if (name == "mean_distribution") return SlideAggregation::mean_distribution;
  throw ConfigError("unknown slide aggregation '" + name + "'");
}

std::optional<SlideProfile> slide_feature(const std::string& slide_id,
                                          std::span<const PatchProfile> selected,
                                          SlideAggregation aggregation) {
  require(!selected.empty(), "slide " + slide_id + " has no selected patches");
  const std::size_t k = selected.front().counts.size();
  std::vector<double> feature(k, 0.0);
  std::int64_t cells = 0;
  std::size_t non_empty = 0;
  for (const auto& p : selected) {
    require(p.counts.size() == k, "patch profiles disagree on cluster count");
    cells += p.total;
    if (aggregation == SlideAggregation::sum_counts) {
      for (std::size_t j = 0; j < k; ++j) feature[j] += static_cast<double>(p.counts[j]);
    } else if (p.total > 0) {
      ++non_empty;
      for (std::size_t j = 0; j < k; ++j) {
        feature[j] += static_cast<double>(p.counts[j]) / static_cast<double>(p.total);
      }
    }
  }
  if (cells == 0) {
    spdlog::warn("slide {} has no cells in its selected patches; excluded", slide_id);
    return std::nullopt;
  }
  const double sum = std::accumulate(feature.begin(), feature.end(), 0.0);
  for (auto& v : feature) v /= sum;
  return SlideProfile{slide_id, std::move(feature),
                      aggregation == SlideAggregation::sum_counts ? selected.size() : non_empty};
}

MergedClusters merge_clusters(std::span<const int> labels, const std::map<int, std::string>& label_map) {
  MergedClusters out;
  for (const auto& [id, name] : label_map) {
    require(id >= 0, "label map holds a negative cluster id");
    out.names.push_back(name);
  }
  std::sort(out.names.begin(), out.names.end());
  out.names.erase(std::unique(out.names.begin(), out.names.end()), out.names.end());
  const int max_id = label_map.empty() ? -1 : label_map.rbegin()->first;
  out.cluster_to_merged.assign(static_cast<std::size_t>(max_id + 1), -1);
  for (const auto& [id, name] : label_map) {
    out.cluster_to_merged[static_cast<std::size_t>(id)] = static_cast<int>(
        std::lower_bound(out.names.begin(), out.names.end(), name) - out.names.begin());
  }
  out.labels.reserve(labels.size());
  for (int l : labels) {
    require(l >= 0 && l <= max_id && out.cluster_to_merged[static_cast<std::size_t>(l)] >= 0,
            "cluster id " + std::to_string(l) + " is not covered by the label map");
    out.labels.push_back(out.cluster_to_merged[static_cast<std::size_t>(l)]);
  }
  return out;
}

std::vector<std::int64_t> merge_counts(std::span<const std::int64_t> counts, const MergedClusters& merged) {
  std::vector<std::int64_t> out(merged.names.size(), 0);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) continue;
    require(c < merged.cluster_to_merged.size() && merged.cluster_to_merged[c] >= 0,
            "cluster id " + std::to_string(c) + " is not covered by the label map");
    out[static_cast<std::size_t>(merged.cluster_to_merged[c])] += counts[c];
  }
  return out;
}

}  // namespace volta::subtype
