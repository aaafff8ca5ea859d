// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <opencv2/core.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "volta/ingest/types.hpp"

namespace volta::ingest {

/// Square window of `side` pixels centred on a pixel-index centroid, clipped
/// to an image of the given size. Pixel r covers [r, r+1), so its centre is
/// r + 0.5.
Window centered_window(double centroid_row, double centroid_col, int side, int image_height,
                       int image_width);

/// Adaptive window side for a cell: window_scale * max(bbox height, bbox width).
int adaptive_window_side(const CellInstance& inst, double window_scale);

/// Resizes a float image to size x size (area filter when shrinking,
/// bilinear when enlarging, copy when equal).
cv::Mat resize_square(const cv::Mat& image, int size);

/// RGB uint8 window -> CV_32FC3 in [0, 1].
cv::Mat to_unit_float(const cv::Mat& rgb8);

/// Clipped adaptive window around the cell, resized to crop_size, in [0, 1].
cv::Mat extract_crop_window(const SlideImage& image, const CellInstance& inst, double window_scale,
                            int crop_size = 32);

/// Crop window normalised with the dataset statistics.
CellCrop extract_cell_crop(const SlideImage& image, const CellInstance& inst, double window_scale,
                           const Normalization& normalization, int crop_size = 32);

/// env_size window around the cell (clipped at the border), masked per policy
/// with `fill` ([0, 1] RGB), resized to output_size. Pixels are in [0, 1].
/// The footprint is resized with nearest-neighbour sampling and the fill is
/// re-applied after the image resize, so masked pixels are exactly `fill`.
EnvironmentPatch extract_environment_patch(const SlideImage& image, const CellInstance& inst,
                                           std::span<const CellInstance> all_instances,
                                           int env_size, int output_size, MaskPolicy policy,
                                           const cv::Vec3f& fill);

/// One IHC biomarker: score at a pixel is the channel intensity in [0, 1]
/// (optionally inverted) when it reaches the positivity threshold, else 0.
struct BiomarkerChannel {
  std::string name;
  int channel = 0;  // 0 = R, 1 = G, 2 = B
  double positive_threshold = 0.5;
  bool invert = false;
};

struct IhcDecoder {
  std::vector<BiomarkerChannel> biomarkers;

  /// Per-biomarker expression scores summed over a window of an RGB image.
  [[nodiscard]] std::vector<double> window_scores(const cv::Mat& rgb8, const Window& window) const;
};

/// Most expressed biomarker in a window of window_scale * cell size, provided
/// its share of the summed scores reaches dominance_threshold.
std::optional<std::string> derive_label_from_ihc(const CellInstance& inst, const SlideImage& ihc,
                                                 double window_scale, double dominance_threshold,
                                                 const IhcDecoder& decoder);

/// Label rule on a score vector: argmax index iff its share >= threshold.
std::optional<std::size_t> dominant_share(std::span<const double> scores, double threshold);

}  // namespace volta::ingest
