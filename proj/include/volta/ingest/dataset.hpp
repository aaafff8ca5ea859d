// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "volta/ingest/extract.hpp"
#include "volta/ingest/record_store.hpp"

namespace volta::ingest {

inline constexpr int kManifestFormatVersion = 1;

struct ManifestRecord {
  std::filesystem::path image;
  std::filesystem::path mask;
  std::optional<std::filesystem::path> labels;
  std::optional<std::filesystem::path> ihc;
  Split split = Split::train;
  std::string slide_id;  // defaults to the image file stem
  std::string magnification;
};

struct DatasetManifest {
  int format_version = kManifestFormatVersion;
  std::vector<ManifestRecord> records;

  /// Parses and validates a manifest; relative paths resolve against the
  /// manifest's directory. Missing files raise DataError.
  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct IhcConfig {
  double window_factor = 5.0;  // IHC window relative to the H&E crop window
  double dominance_threshold = 0.7;
  IhcDecoder decoder;
};

enum class FillMode { dataset_mean, zero };

struct IngestConfig {
  double window_scale = 2.0;
  int crop_size = 32;
  int env_size = 128;        // environment window in source pixels
  int env_input_size = 64;   // stored patch side, the environment encoder input
  MaskPolicy mask_policy = MaskPolicy::all_cells;
  FillMode fill = FillMode::dataset_mean;
  std::map<std::string, std::string> label_map;  // empty keeps labels as-is
  std::optional<IhcConfig> ihc;
  std::optional<Normalization> normalization;    // overrides train statistics
  std::string preprocess_hook;                   // executable: hook <in> <out>
  int workers = 1;
};

/// Extracts every accepted cell of the manifest into a record store.
/// Normalisation statistics come from train-split crops only.
RecordStore build_dataset(const DatasetManifest& manifest, const IngestConfig& config);

/// Per-channel mean / population std of [0,1] crops (float32 HWC rows).
Normalization channel_statistics(const std::vector<const float*>& crops, std::size_t floats_per_crop);

}  // namespace volta::ingest
