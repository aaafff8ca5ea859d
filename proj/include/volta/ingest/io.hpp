// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <opencv2/core.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "volta/ingest/types.hpp"

namespace volta::ingest {

/// Reads an 8-bit colour image as RGB. Throws DataError naming the path.
cv::Mat read_rgb(const std::filesystem::path& path);

/// Writes an RGB image (PNG/TIFF by extension).
void write_rgb(const std::filesystem::path& path, const cv::Mat& rgb);

/// Reads an instance label image (0 = background) as CV_32S.
cv::Mat read_label_image(const std::filesystem::path& path);

struct InstanceMask {
  cv::Mat labels;                 // CV_32S, 0 = background
  std::vector<int> declared_ids;  // ids named by the source (polygon masks only)
};

/// Rasterises per-instance polygon JSON:
/// {"instances": [{"id": 7, "polygon": [[x, y], ...]}, ...]} with x = column.
InstanceMask rasterize_polygons(const std::filesystem::path& path, int height, int width);

/// Reads a mask file; `.json` is treated as polygons, anything else as a
/// label image.
InstanceMask read_mask(const std::filesystem::path& path, int height, int width);

/// Instances of a label image sorted by instance id.
std::vector<CellInstance> instances_from_labels(const cv::Mat& labels, const std::string& slide_id);

std::string make_cell_id(const std::string& slide_id, int instance_id);

/// Per-instance labels from `{"<id>": "label"}` JSON or `id,label` CSV.
std::map<int, std::string> read_instance_labels(const std::filesystem::path& path);

}  // namespace volta::ingest
