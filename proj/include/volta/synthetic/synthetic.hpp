// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace volta::synthetic {

/// cells        three cell classes separated by shape, textured backgrounds
///              weakly tied to class
/// environment  near-identical cells; class lives in the surrounding texture
/// slides       cluster assignments for slides from three distribution
///              families (no images)
enum class Variant { cells, environment, slides };

Variant parse_variant(const std::string& name);
std::string to_string(Variant variant);

struct SyntheticConfig {
  Variant variant = Variant::cells;
  std::uint64_t seed = 0;
  int n_train = 600;  // cells
  int n_test = 300;
  int image_size = 256;
  int cells_per_image = 20;
  double texture_match = -1.0;  // P(cell sits on its class texture); < 0 picks the variant default
  // slides variant
  int n_slides = 9;
  int slide_size = 1200;
  int cells_per_slide = 900;
  int clusters = 6;

  void validate() const;
  [[nodiscard]] double effective_texture_match() const;
};

inline const std::vector<std::string> kClassNames{"round", "spindle", "vesicular"};

struct SyntheticSummary {
  std::filesystem::path manifest;     // cells / environment variants
  std::filesystem::path assignments;  // slides variant
  std::filesystem::path slides;       // slides variant
  int n_images = 0;
  int n_cells = 0;
};

/// Writes images/, masks/ (16-bit instance labels), labels/ (id,label CSV)
/// and manifest.json, or for the slides variant assignments.csv
/// (slide_id,cell_id,row,col,cluster) and slides.csv
/// (slide_id,height,width,family).
SyntheticSummary generate(const SyntheticConfig& config, const std::filesystem::path& out_dir);

}  // namespace volta::synthetic
