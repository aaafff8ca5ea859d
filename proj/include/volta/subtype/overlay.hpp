// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <opencv2/core.hpp>

#include <span>
#include <vector>

#include "volta/ingest/types.hpp"

namespace volta::subtype {

using Palette = std::vector<cv::Vec3b>;  // RGB

Palette default_palette();

/// Mask pixels with at least one 8-neighbour outside the mask (pixels beyond
/// the mask bitmap count as outside): mask minus its 3x3 erosion.
cv::Mat mask_boundary(const cv::Mat& mask);

/// Draws one-pixel outlines of every instance coloured by cluster id
/// (palette[id % size]), alpha-composited over a copy of the RGB image.
cv::Mat render_overlay(const cv::Mat& rgb, std::span<const ingest::CellInstance> instances,
                       std::span<const int> clusters, const Palette& palette, double alpha = 1.0);

}  // namespace volta::subtype
