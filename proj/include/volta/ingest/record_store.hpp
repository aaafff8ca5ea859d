// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "volta/ingest/types.hpp"

namespace volta::ingest {

inline constexpr int kRecordStoreFormatVersion = 1;

struct CellMeta {
  std::string cell_id;
  std::string slide_id;
  int instance_id = 0;
  Split split = Split::train;
  std::optional<std::string> label;
  double centroid_row = 0.0;
  double centroid_col = 0.0;
  BBox bbox;
  int area = 0;
};

struct SkippedCell {
  std::string slide_id;
  int instance_id = 0;
  std::string reason;  // reason code, e.g. "empty_mask"
};

struct SlideMeta {
  std::string slide_id;
  int height = 0;
  int width = 0;
  std::string image_path;
  std::string mask_path;
  Split split = Split::train;
};

/// In-memory form of the persisted record store. Row i of the pixel arrays
/// belongs to cells[i]; rows are ordered by (slide_id, cell_id).
///
/// On disk: crops.bin (float32, n x crop x crop x 3, row-major), envs.bin
/// (float32, n x env x env x 3) and index.json (cells, labels,
/// normalisation, skipped cells, slides).
class RecordStore {
 public:
  int crop_size = 32;
  int env_size = 64;  // side of the stored environment patches
  MaskPolicy mask_policy = MaskPolicy::all_cells;
  Normalization normalization;
  std::vector<CellMeta> cells;
  std::vector<float> crops;
  std::vector<float> envs;
  std::vector<SkippedCell> skipped;
  std::vector<SlideMeta> slides;

  [[nodiscard]] std::size_t size() const { return cells.size(); }
  [[nodiscard]] std::size_t crop_floats() const {
    return static_cast<std::size_t>(crop_size) * crop_size * 3;
  }
  [[nodiscard]] std::size_t env_floats() const {
    return static_cast<std::size_t>(env_size) * env_size * 3;
  }
  [[nodiscard]] std::span<const float> crop(std::size_t row) const;
  [[nodiscard]] std::span<const float> env(std::size_t row) const;

  /// Normalised crop as an owning CV_32FC3 image.
  [[nodiscard]] CellCrop cell_crop(std::size_t row) const;
  [[nodiscard]] EnvironmentPatch environment(std::size_t row) const;

  [[nodiscard]] std::vector<std::size_t> rows(Split split) const;
  /// Sorted distinct labels over all cells.
  [[nodiscard]] std::vector<std::string> label_table() const;
  [[nodiscard]] std::optional<std::size_t> find(const std::string& cell_id) const;

  void save(const std::filesystem::path& dir) const;
  static RecordStore load(const std::filesystem::path& dir);
};

}  // namespace volta::ingest
