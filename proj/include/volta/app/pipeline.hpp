// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "volta/app/config.hpp"
#include "volta/subtype/hierarchy.hpp"
#include "volta/subtype/profiles.hpp"
#include "volta/subtype/report.hpp"

namespace volta::app {

/// One row of assignments.csv: cell_id,slide_id,row,col,cluster.
struct AssignmentRow {
  std::string cell_id;
  std::string slide_id;
  double row = 0.0;
  double col = 0.0;
  int cluster = 0;
};

/// One row of slides.csv: slide_id,height,width[,family].
struct SlideRow {
  std::string slide_id;
  int height = 0;
  int width = 0;
  std::string family;
};

/// Reads assignments in either column order written by this tool
/// (slide_id first from the synthetic generator, cell_id first from cluster).
std::vector<AssignmentRow> read_assignments(const std::filesystem::path& path);
void write_assignments(const std::filesystem::path& path, const std::vector<AssignmentRow>& rows);
std::vector<SlideRow> read_slides(const std::filesystem::path& path);
void write_slides(const std::filesystem::path& path, const std::vector<SlideRow>& rows);

struct SubtypeOutcome {
  std::vector<subtype::PatchProfile> profiles;  // every tile of every slide
  subtype::PatchGroups groups;
  std::vector<std::size_t> selected;            // indices into profiles
  std::vector<subtype::SlideProfile> slides;    // slides with cells, in input order
  subtype::SubtypeReport report;
  subtype::MergedClusters merged;
  subtype::DistributionTable table;
  int k = 0;
};

/// tile -> profile -> group -> sample -> slide features -> PCA + Ward.
SubtypeOutcome run_subtype(const std::vector<AssignmentRow>& cells, const std::vector<SlideRow>& slides,
                           const SubtypeConfig& config, std::uint64_t seed);

/// linkage.json, dendrogram.svg, slide_clusters.csv, slide_features.csv,
/// distribution.csv.
void write_subtype_outputs(const SubtypeOutcome& outcome, const std::filesystem::path& dir);

}  // namespace volta::app
