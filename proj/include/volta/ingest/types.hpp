// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <opencv2/core.hpp>

#include <array>
#include <optional>
#include <string>

namespace volta::ingest {

struct BBox {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  [[nodiscard]] int bottom() const { return top + height; }
  [[nodiscard]] int right() const { return left + width; }
  [[nodiscard]] bool contains(double row, double col) const {
    return row >= top && row < bottom() && col >= left && col < right();
  }
  bool operator==(const BBox&) const = default;
};

/// Half-open pixel window [row0, row1) x [col0, col1).
struct Window {
  int row0 = 0;
  int col0 = 0;
  int row1 = 0;
  int col1 = 0;

  [[nodiscard]] int height() const { return row1 - row0; }
  [[nodiscard]] int width() const { return col1 - col0; }
  [[nodiscard]] bool empty() const { return height() <= 0 || width() <= 0; }
  [[nodiscard]] cv::Rect rect() const { return {col0, row0, width(), height()}; }
  bool operator==(const Window&) const = default;
};

/// An H&E (or IHC) image, RGB order, 8 bits per channel.
struct SlideImage {
  cv::Mat pixels;  // CV_8UC3, RGB
  std::string magnification;
  std::string slide_id;

  [[nodiscard]] int height() const { return pixels.rows; }
  [[nodiscard]] int width() const { return pixels.cols; }
};

struct CellInstance {
  std::string cell_id;
  std::string slide_id;
  int instance_id = 0;
  double centroid_row = 0.0;  // mean row index of the mask pixels
  double centroid_col = 0.0;
  BBox bbox;
  cv::Mat mask;  // CV_8U, bbox-sized, 1 inside the cell
  std::optional<std::string> label;

  [[nodiscard]] int area() const { return mask.empty() ? 0 : cv::countNonZero(mask); }
};

/// Per-channel statistics used to standardise pixels in [0,1] RGB space.
struct Normalization {
  std::array<float, 3> mean{0.0F, 0.0F, 0.0F};
  std::array<float, 3> std{1.0F, 1.0F, 1.0F};
  bool defined = false;

  /// In-place (x - mean) / std on a CV_32FC3 image.
  void apply(cv::Mat& image) const;
  /// In-place x * std + mean on a CV_32FC3 image.
  void invert(cv::Mat& image) const;
};

struct CellCrop {
  cv::Mat pixels;  // crop_size x crop_size CV_32FC3, normalised
  std::string cell_id;
  Normalization normalization;
};

enum class MaskPolicy { all_cells, target_only, none };

MaskPolicy parse_mask_policy(const std::string& name);
std::string to_string(MaskPolicy policy);

struct EnvironmentPatch {
  cv::Mat pixels;     // CV_32FC3 square patch
  cv::Mat footprint;  // CV_8U, same size, 1 where a mask was filled
  std::string cell_id;
  MaskPolicy mask_policy = MaskPolicy::all_cells;
};

enum class Split { train, test };

Split parse_split(const std::string& name);
std::string to_string(Split split);

}  // namespace volta::ingest
