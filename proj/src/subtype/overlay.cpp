// SPDX-License-Identifier: Apache-2.0
#include "volta/subtype/overlay.hpp"

#include <opencv2/imgproc.hpp>

#include "volta/common/error.hpp"

namespace volta::subtype {

Palette default_palette() {
  return {
      {230, 25, 75},  {60, 180, 75},   {255, 225, 25}, {0, 130, 200},  {245, 130, 48},
      {145, 30, 180}, {70, 240, 240},  {240, 50, 230}, {210, 245, 60}, {250, 190, 212},
      {0, 128, 128},  {220, 190, 255}, {170, 110, 40}, {255, 250, 200}, {128, 0, 0},
      {170, 255, 195}, {128, 128, 0},  {255, 215, 180}, {0, 0, 128},   {128, 128, 128},
  };
}

cv::Mat mask_boundary(const cv::Mat& mask) {
  require(mask.type() == CV_8U, "mask must be CV_8U");
  cv::Mat binary = mask != 0;
  cv::Mat eroded;
  cv::erode(binary, eroded, cv::Mat::ones(3, 3, CV_8U), {-1, -1}, 1, cv::BORDER_CONSTANT, cv::Scalar(0));
  cv::Mat boundary = binary & ~eroded;
  return boundary / 255;
}

cv::Mat render_overlay(const cv::Mat& rgb, std::span<const ingest::CellInstance> instances,
                       std::span<const int> clusters, const Palette& palette, double alpha) {
  require(rgb.type() == CV_8UC3, "overlay source must be 8-bit RGB");
  require(instances.size() == clusters.size(), "one cluster id per instance required");
  require(!palette.empty(), "palette is empty");
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must be in [0, 1]");
  cv::Mat out = rgb.clone();
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    require(clusters[i] >= 0, "cluster ids must be non-negative");
    const cv::Vec3b colour = palette[static_cast<std::size_t>(clusters[i]) % palette.size()];
    const cv::Mat edge = mask_boundary(inst.mask);
    for (int r = 0; r < edge.rows; ++r) {
      for (int c = 0; c < edge.cols; ++c) {
        if (edge.at<std::uint8_t>(r, c) == 0) continue;
        const int y = inst.bbox.top + r;
        const int x = inst.bbox.left + c;
        if (y < 0 || x < 0 || y >= out.rows || x >= out.cols) continue;
        auto& px = out.at<cv::Vec3b>(y, x);
        for (int ch = 0; ch < 3; ++ch) {
          px[ch] = cv::saturate_cast<std::uint8_t>(alpha * colour[ch] + (1.0 - alpha) * px[ch]);
        }
      }
    }
  }
  return out;
}

}  // namespace volta::subtype
