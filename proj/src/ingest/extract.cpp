// SPDX-License-Identifier: Apache-2.0
#include "volta/ingest/extract.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "volta/common/error.hpp"

namespace volta::ingest {

void Normalization::apply(cv::Mat& image) const {
  CV_Assert(image.type() == CV_32FC3);
  for (int r = 0; r < image.rows; ++r) {
    auto* row = image.ptr<cv::Vec3f>(r);
    for (int c = 0; c < image.cols; ++c) {
      for (int k = 0; k < 3; ++k) row[c][k] = (row[c][k] - mean[k]) / std[k];
    }
  }
}

void Normalization::invert(cv::Mat& image) const {
  CV_Assert(image.type() == CV_32FC3);
  for (int r = 0; r < image.rows; ++r) {
    auto* row = image.ptr<cv::Vec3f>(r);
    for (int c = 0; c < image.cols; ++c) {
      for (int k = 0; k < 3; ++k) row[c][k] = row[c][k] * std[k] + mean[k];
    }
  }
}

MaskPolicy parse_mask_policy(const std::string& name) {
  if (name == "all_cells") return MaskPolicy::all_cells;
  if (name == "target_only") return MaskPolicy::target_only;
  if (name == "none") return MaskPolicy::none;
  throw ConfigError("unknown mask policy '" + name + "' (expected all_cells, target_only, none)");
}

std::string to_string(MaskPolicy policy) {
  switch (policy) {
    case MaskPolicy::all_cells: return "all_cells";
    case MaskPolicy::target_only: return "target_only";
    case MaskPolicy::none: return "none";
  }
  return "none";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split tag '" + name + "' (expected train or test)");
}

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

Window centered_window(double centroid_row, double centroid_col, int side, int image_height,
                       int image_width) {
  require(side > 0, "window side must be positive");
  const int row0 = static_cast<int>(std::floor(centroid_row + 0.5 - side / 2.0 + 0.5));
  const int col0 = static_cast<int>(std::floor(centroid_col + 0.5 - side / 2.0 + 0.5));
  Window w{row0, col0, row0 + side, col0 + side};
  w.row0 = std::clamp(w.row0, 0, image_height);
  w.row1 = std::clamp(w.row1, 0, image_height);
  w.col0 = std::clamp(w.col0, 0, image_width);
  w.col1 = std::clamp(w.col1, 0, image_width);
  return w;
}

int adaptive_window_side(const CellInstance& inst, double window_scale) {
  require(window_scale > 0.0, "window_scale must be positive");
  const int size = std::max(inst.bbox.height, inst.bbox.width);
  return std::max(1, static_cast<int>(std::lround(window_scale * size)));
}

cv::Mat resize_square(const cv::Mat& image, int size) {
  if (image.rows == size && image.cols == size) return image.clone();
  cv::Mat out;
  const bool shrinking = image.rows > size && image.cols > size;
  cv::resize(image, out, cv::Size(size, size), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  return out;
}

cv::Mat to_unit_float(const cv::Mat& rgb8) {
  cv::Mat out;
  rgb8.convertTo(out, CV_32FC3, 1.0 / 255.0);
  return out;
}

cv::Mat extract_crop_window(const SlideImage& image, const CellInstance& inst, double window_scale,
                            int crop_size) {
  require(inst.area() > 0, "cell " + inst.cell_id + " has an empty mask");
  const int side = adaptive_window_side(inst, window_scale);
  const Window w = centered_window(inst.centroid_row, inst.centroid_col, side, image.height(),
                                   image.width());
  require(!w.empty(), "cell " + inst.cell_id + " lies outside its image");
  return resize_square(to_unit_float(image.pixels(w.rect())), crop_size);
}

CellCrop extract_cell_crop(const SlideImage& image, const CellInstance& inst, double window_scale,
                           const Normalization& normalization, int crop_size) {
  CellCrop crop{extract_crop_window(image, inst, window_scale, crop_size), inst.cell_id,
                normalization};
  normalization.apply(crop.pixels);
  return crop;
}

namespace {

void stamp_footprint(cv::Mat& footprint, const Window& w, const CellInstance& inst) {
  const BBox& b = inst.bbox;
  const int r0 = std::max(b.top, w.row0);
  const int r1 = std::min(b.bottom(), w.row1);
  const int c0 = std::max(b.left, w.col0);
  const int c1 = std::min(b.right(), w.col1);
  for (int r = r0; r < r1; ++r) {
    const auto* m = inst.mask.ptr<std::uint8_t>(r - b.top);
    auto* f = footprint.ptr<std::uint8_t>(r - w.row0);
    for (int c = c0; c < c1; ++c) {
      if (m[c - b.left]) f[c - w.col0] = 1;
    }
  }
}

void apply_fill(cv::Mat& pixels, const cv::Mat& footprint, const cv::Vec3f& fill) {
  for (int r = 0; r < pixels.rows; ++r) {
    auto* p = pixels.ptr<cv::Vec3f>(r);
    const auto* f = footprint.ptr<std::uint8_t>(r);
    for (int c = 0; c < pixels.cols; ++c) {
      if (f[c]) p[c] = fill;
    }
  }
}

}  // namespace

EnvironmentPatch extract_environment_patch(const SlideImage& image, const CellInstance& inst,
                                           std::span<const CellInstance> all_instances,
                                           int env_size, int output_size, MaskPolicy policy,
                                           const cv::Vec3f& fill) {
  require(env_size > 0 && output_size > 0, "environment sizes must be positive");
  const Window w = centered_window(inst.centroid_row, inst.centroid_col, env_size, image.height(),
                                   image.width());
  require(!w.empty(), "cell " + inst.cell_id + " lies outside its image");

  cv::Mat window = to_unit_float(image.pixels(w.rect()));
  cv::Mat footprint = cv::Mat::zeros(w.height(), w.width(), CV_8U);
  if (policy == MaskPolicy::target_only) {
    stamp_footprint(footprint, w, inst);
  } else if (policy == MaskPolicy::all_cells) {
    for (const auto& other : all_instances) {
      const BBox& b = other.bbox;
      if (b.bottom() <= w.row0 || b.top >= w.row1 || b.right() <= w.col0 || b.left >= w.col1) {
        continue;
      }
      stamp_footprint(footprint, w, other);
    }
    // The target may be absent from all_instances; it is always masked.
    stamp_footprint(footprint, w, inst);
  }
  apply_fill(window, footprint, fill);

  EnvironmentPatch patch;
  patch.cell_id = inst.cell_id;
  patch.mask_policy = policy;
  patch.pixels = resize_square(window, output_size);
  if (footprint.rows == output_size && footprint.cols == output_size) {
    patch.footprint = footprint;
  } else {
    cv::resize(footprint, patch.footprint, cv::Size(output_size, output_size), 0, 0,
               cv::INTER_NEAREST);
  }
  apply_fill(patch.pixels, patch.footprint, fill);
  return patch;
}

std::vector<double> IhcDecoder::window_scores(const cv::Mat& rgb8, const Window& window) const {
  CV_Assert(rgb8.type() == CV_8UC3);
  std::vector<double> scores(biomarkers.size(), 0.0);
  for (int r = window.row0; r < window.row1; ++r) {
    const auto* row = rgb8.ptr<cv::Vec3b>(r);
    for (int c = window.col0; c < window.col1; ++c) {
      for (std::size_t b = 0; b < biomarkers.size(); ++b) {
        const auto& bm = biomarkers[b];
        double v = row[c][bm.channel] / 255.0;
        if (bm.invert) v = 1.0 - v;
        if (v >= bm.positive_threshold) scores[b] += v;
      }
    }
  }
  return scores;
}

std::optional<std::size_t> dominant_share(std::span<const double> scores, double threshold) {
  const double total = std::accumulate(scores.begin(), scores.end(), 0.0);
  if (scores.empty() || !(total > 0.0)) return std::nullopt;
  const auto best = static_cast<std::size_t>(
      std::distance(scores.begin(), std::max_element(scores.begin(), scores.end())));
  if (scores[best] / total >= threshold) return best;
  return std::nullopt;
}

std::optional<std::string> derive_label_from_ihc(const CellInstance& inst, const SlideImage& ihc,
                                                 double window_scale, double dominance_threshold,
                                                 const IhcDecoder& decoder) {
  if (inst.bbox.bottom() > ihc.height() || inst.bbox.right() > ihc.width()) {
    throw ConfigError("IHC image for slide " + inst.slide_id +
                      " is not registered with its H&E image (cell outside IHC bounds)");
  }
  for (const auto& bm : decoder.biomarkers) {
    if (bm.channel < 0 || bm.channel > 2) {
      throw ConfigError("biomarker " + bm.name + " uses channel outside 0..2");
    }
  }
  const int side = adaptive_window_side(inst, window_scale);
  const Window w =
      centered_window(inst.centroid_row, inst.centroid_col, side, ihc.height(), ihc.width());
  const auto scores = decoder.window_scores(ihc.pixels, w);
  const auto best = dominant_share(scores, dominance_threshold);
  if (!best) return std::nullopt;
  return decoder.biomarkers[*best].name;
}

}  // namespace volta::ingest
