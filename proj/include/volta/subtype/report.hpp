// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "volta/subtype/hierarchy.hpp"
#include "volta/subtype/profiles.hpp"

namespace volta::subtype {

/// Mean and sd (population) across patches of per-patch cluster proportions,
/// one row per flat slide cluster.
struct DistributionTable {
  std::vector<std::string> columns;  // merged cluster names
  std::vector<int> subtypes;         // flat cluster ids
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> sd;
};

DistributionTable distribution_table(std::span<const PatchProfile> patches,
                                     std::span<const int> patch_subtype, const MergedClusters& merged);

void write_distribution_csv(const std::filesystem::path& path, const DistributionTable& table);
void write_linkage_json(const std::filesystem::path& path, const SubtypeReport& report);
std::string dendrogram_svg(const SubtypeReport& report);

}  // namespace volta::subtype
