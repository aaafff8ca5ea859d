// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <opencv2/core.hpp>

#include <string>
#include <utility>

#include "volta/common/random.hpp"
#include "volta/ingest/types.hpp"

namespace volta::augment {

using Range = std::pair<double, double>;

struct JitterConfig {
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;
};

/// Stochastic view pipeline. Operation order is fixed:
/// crop -> colour jitter -> grayscale -> blur -> flips -> rotation.
struct AugmentationConfig {
  JitterConfig jitter;
  Range blur_sigma{0.1, 2.0};
  double blur_kernel_fraction = 0.1;  // kernel side relative to the image side
  Range rotation_degrees{0.0, 180.0};
  Range crop_scale{0.2, 1.0};  // fraction of the image area
  Range crop_ratio{3.0 / 4.0, 4.0 / 3.0};
  double p_jitter = 0.8;
  double p_grayscale = 0.2;
  double p_blur = 0.5;
  double p_hflip = 0.5;
  double p_vflip = 0.5;
  double p_rotation = 1.0;
  bool multi_crop = true;  // false: both cell pipelines crop (local-local)

  /// Throws ConfigError on empty ranges or probabilities outside [0, 1].
  void validate() const;
  /// Every probability 0 and a full-image crop: all views are identities.
  static AugmentationConfig identity();
};

struct CropBox {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
};

/// Random-resized-crop box: area fraction from `scale`, log-uniform aspect
/// ratio from `ratio`, ten attempts then a centred fallback.
CropBox sample_crop_box(int height, int width, const Range& scale, const Range& ratio, Rng& rng);

/// Crops `box` from a CV_32FC3 image and resizes it to out_size x out_size.
cv::Mat resized_crop(const cv::Mat& image, const CropBox& box, int out_size);

// Colour operations act in place on CV_32FC3 images in [0, 1] RGB and clamp
// their results to [0, 1].
void adjust_brightness(cv::Mat& image, double factor);
void adjust_contrast(cv::Mat& image, double factor);
void adjust_saturation(cv::Mat& image, double factor);
void adjust_hue(cv::Mat& image, double shift);  // shift in hue units, [-0.5, 0.5]
void to_grayscale(cv::Mat& image);
void color_jitter(cv::Mat& image, const JitterConfig& jitter, Rng& rng);

/// RGB in [0,1] -> (h, s, v) with h in [0, 1).
cv::Vec3f rgb_to_hsv(const cv::Vec3f& rgb);
cv::Vec3f hsv_to_rgb(const cv::Vec3f& hsv);

cv::Mat gaussian_blur(const cv::Mat& image, double sigma, double kernel_fraction);
/// Rotation about the image centre; exposed corners replicate the edge.
cv::Mat rotate(const cv::Mat& image, double degrees);

/// Runs the pipeline on a [0, 1] RGB image; `with_crop` selects the local
/// (cropping) or global (no crop) variant. `touched` reports whether any
/// operation changed the image.
cv::Mat run_pipeline(const cv::Mat& unit_rgb, const AugmentationConfig& config, bool with_crop,
                     Rng& rng, bool* touched = nullptr);

/// Local view of a normalised cell crop (with cropping). Returns a
/// normalised view of the same size.
cv::Mat augment_local(const ingest::CellCrop& crop, const AugmentationConfig& config, Rng& rng);
/// Global view: the same pipeline without the crop operation.
cv::Mat augment_global(const ingest::CellCrop& crop, const AugmentationConfig& config, Rng& rng);
/// Environment view: global pipeline applied to a normalised environment patch.
cv::Mat augment_environment(const ingest::EnvironmentPatch& patch,
                            const ingest::Normalization& normalization,
                            const AugmentationConfig& config, Rng& rng);

struct ViewPair {
  cv::Mat query_view;  // local
  cv::Mat key_view;    // global, or local when multi_crop is off
  std::string cell_id;
};

ViewPair make_view_pair(const ingest::CellCrop& crop, const AugmentationConfig& config, Rng& rng);

}  // namespace volta::augment
