// SPDX-License-Identifier: Apache-2.0
#include "volta/augment/augment.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <array>
#include <cmath>

#include "volta/common/error.hpp"

namespace volta::augment {

namespace {

void check_range(const Range& r, const char* name, double lo, double hi) {
  if (!(r.first <= r.second) || r.first < lo || r.second > hi) {
    throw ConfigError(std::string("augment: invalid range for ") + name);
  }
}

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("augment: ") + name + " outside [0, 1]");
}

inline float clamp01(float v) { return std::min(1.0F, std::max(0.0F, v)); }

inline float gray_of(const cv::Vec3f& p) { return 0.2989F * p[0] + 0.587F * p[1] + 0.114F * p[2]; }

template <typename Fn>
void for_each_pixel(cv::Mat& image, Fn&& fn) {
  CV_Assert(image.type() == CV_32FC3);
  for (int r = 0; r < image.rows; ++r) {
    auto* row = image.ptr<cv::Vec3f>(r);
    for (int c = 0; c < image.cols; ++c) fn(row[c]);
  }
}

}  // namespace

void AugmentationConfig::validate() const {
  if (jitter.brightness < 0 || jitter.contrast < 0 || jitter.saturation < 0 || jitter.hue < 0 ||
      jitter.hue > 0.5) {
    throw ConfigError("augment: jitter magnitudes must be >= 0 and hue <= 0.5");
  }
  check_range(blur_sigma, "blur_sigma", 1e-6, 1e6);
  check_range(rotation_degrees, "rotation_degrees", -360.0, 360.0);
  check_range(crop_scale, "crop_scale", 1e-6, 1.0);
  check_range(crop_ratio, "crop_ratio", 1e-6, 1e6);
  if (!(blur_kernel_fraction > 0.0 && blur_kernel_fraction <= 1.0)) {
    throw ConfigError("augment: blur_kernel_fraction must be in (0, 1]");
  }
  check_probability(p_jitter, "p_jitter");
  check_probability(p_grayscale, "p_grayscale");
  check_probability(p_blur, "p_blur");
  check_probability(p_hflip, "p_hflip");
  check_probability(p_vflip, "p_vflip");
  check_probability(p_rotation, "p_rotation");
}

AugmentationConfig AugmentationConfig::identity() {
  AugmentationConfig c;
  c.crop_scale = {1.0, 1.0};
  c.p_jitter = c.p_grayscale = c.p_blur = c.p_hflip = c.p_vflip = c.p_rotation = 0.0;
  return c;
}

CropBox sample_crop_box(int height, int width, const Range& scale, const Range& ratio, Rng& rng) {
  const double area = static_cast<double>(height) * width;
  const double log_r0 = std::log(ratio.first);
  const double log_r1 = std::log(ratio.second);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * uniform(rng, scale.first, scale.second);
    const double aspect = std::exp(uniform(rng, log_r0, log_r1));
    const int w = static_cast<int>(std::lround(std::sqrt(target * aspect)));
    const int h = static_cast<int>(std::lround(std::sqrt(target / aspect)));
    if (w > 0 && w <= width && h > 0 && h <= height) {
      const int top = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(height - h + 1)));
      const int left = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(width - w + 1)));
      return {top, left, h, w};
    }
  }
  const double in_ratio = static_cast<double>(width) / height;
  int w = width;
  int h = height;
  if (in_ratio < ratio.first) {
    h = static_cast<int>(std::lround(w / ratio.first));
  } else if (in_ratio > ratio.second) {
    w = static_cast<int>(std::lround(h * ratio.second));
  }
  return {(height - h) / 2, (width - w) / 2, h, w};
}

cv::Mat resized_crop(const cv::Mat& image, const CropBox& box, int out_size) {
  const cv::Mat region = image(cv::Rect(box.left, box.top, box.width, box.height));
  if (box.height == out_size && box.width == out_size) return region.clone();
  cv::Mat out;
  const bool shrinking = box.height > out_size && box.width > out_size;
  cv::resize(region, out, cv::Size(out_size, out_size), 0, 0,
             shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  return out;
}

void adjust_brightness(cv::Mat& image, double factor) {
  const auto f = static_cast<float>(factor);
  for_each_pixel(image, [f](cv::Vec3f& p) {
    for (int k = 0; k < 3; ++k) p[k] = clamp01(p[k] * f);
  });
}

void adjust_contrast(cv::Mat& image, double factor) {
  double sum = 0.0;
  for_each_pixel(image, [&sum](cv::Vec3f& p) { sum += gray_of(p); });
  const auto mean = static_cast<float>(sum / (static_cast<double>(image.rows) * image.cols));
  const auto f = static_cast<float>(factor);
  for_each_pixel(image, [f, mean](cv::Vec3f& p) {
    for (int k = 0; k < 3; ++k) p[k] = clamp01(f * p[k] + (1.0F - f) * mean);
  });
}

void adjust_saturation(cv::Mat& image, double factor) {
  const auto f = static_cast<float>(factor);
  for_each_pixel(image, [f](cv::Vec3f& p) {
    const float g = gray_of(p);
    for (int k = 0; k < 3; ++k) p[k] = clamp01(f * p[k] + (1.0F - f) * g);
  });
}

cv::Vec3f rgb_to_hsv(const cv::Vec3f& rgb) {
  const float r = rgb[0], g = rgb[1], b = rgb[2];
  const float maxc = std::max({r, g, b});
  const float minc = std::min({r, g, b});
  const float cr = maxc - minc;
  if (cr <= 0.0F) return {0.0F, 0.0F, maxc};
  const float s = cr / maxc;
  const float rc = (maxc - r) / cr;
  const float gc = (maxc - g) / cr;
  const float bc = (maxc - b) / cr;
  float h;
  if (maxc == r) {
    h = bc - gc;
  } else if (maxc == g) {
    h = 2.0F + rc - bc;
  } else {
    h = 4.0F + gc - rc;
  }
  h = std::fmod(h / 6.0F + 1.0F, 1.0F);
  return {h, s, maxc};
}

cv::Vec3f hsv_to_rgb(const cv::Vec3f& hsv) {
  const float h = hsv[0], s = hsv[1], v = hsv[2];
  const float h6 = h * 6.0F;
  const float fl = std::floor(h6);
  const float f = h6 - fl;
  const int i = static_cast<int>(fl) % 6;
  const float p = clamp01(v * (1.0F - s));
  const float q = clamp01(v * (1.0F - s * f));
  const float t = clamp01(v * (1.0F - s * (1.0F - f)));
  switch ((i + 6) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

void adjust_hue(cv::Mat& image, double shift) {
  const auto s = static_cast<float>(shift);
  for_each_pixel(image, [s](cv::Vec3f& p) {
    cv::Vec3f hsv = rgb_to_hsv(p);
    float h = std::fmod(hsv[0] + s, 1.0F);
    if (h < 0.0F) h += 1.0F;
    hsv[0] = h;
    p = hsv_to_rgb(hsv);
  });
}

void to_grayscale(cv::Mat& image) {
  for_each_pixel(image, [](cv::Vec3f& p) {
    const float g = gray_of(p);
    p = {g, g, g};
  });
}

void color_jitter(cv::Mat& image, const JitterConfig& jitter, Rng& rng) {
  std::array<int, 4> order{0, 1, 2, 3};
  shuffle(std::span<int>(order), rng);
  for (int op : order) {
    switch (op) {
      case 0:
        if (jitter.brightness > 0) {
          adjust_brightness(image, uniform(rng, std::max(0.0, 1.0 - jitter.brightness), 1.0 + jitter.brightness));
        }
        break;
      case 1:
        if (jitter.contrast > 0) {
          adjust_contrast(image, uniform(rng, std::max(0.0, 1.0 - jitter.contrast), 1.0 + jitter.contrast));
        }
        break;
      case 2:
        if (jitter.saturation > 0) {
          adjust_saturation(image, uniform(rng, std::max(0.0, 1.0 - jitter.saturation), 1.0 + jitter.saturation));
        }
        break;
      default:
        if (jitter.hue > 0) adjust_hue(image, uniform(rng, -jitter.hue, jitter.hue));
        break;
    }
  }
}

cv::Mat gaussian_blur(const cv::Mat& image, double sigma, double kernel_fraction) {
  int k = static_cast<int>(std::lround(kernel_fraction * std::min(image.rows, image.cols)));
  if (k % 2 == 0) k -= 1;
  k = std::max(k, 3);
  cv::Mat out;
  cv::GaussianBlur(image, out, cv::Size(k, k), sigma, sigma, cv::BORDER_REFLECT_101);
  return out;
}

cv::Mat rotate(const cv::Mat& image, double degrees) {
  const cv::Point2f centre((image.cols - 1) / 2.0F, (image.rows - 1) / 2.0F);
  const cv::Mat m = cv::getRotationMatrix2D(centre, degrees, 1.0);
  cv::Mat out;
  cv::warpAffine(image, out, m, image.size(), cv::INTER_LINEAR, cv::BORDER_REPLICATE);
  return out;
}

cv::Mat run_pipeline(const cv::Mat& unit_rgb, const AugmentationConfig& config, bool with_crop,
                     Rng& rng, bool* touched) {
  cv::Mat view = unit_rgb.clone();
  bool any = false;
  if (with_crop) {
    const CropBox box = sample_crop_box(view.rows, view.cols, config.crop_scale, config.crop_ratio, rng);
    any = box.top != 0 || box.left != 0 || box.height != view.rows || box.width != view.cols;
    view = resized_crop(view, box, view.rows);
  }
  if (bernoulli(rng, config.p_jitter)) {
    color_jitter(view, config.jitter, rng);
    any = true;
  }
  if (bernoulli(rng, config.p_grayscale)) {
    to_grayscale(view);
    any = true;
  }
  if (bernoulli(rng, config.p_blur)) {
    view = gaussian_blur(view, uniform(rng, config.blur_sigma.first, config.blur_sigma.second),
                         config.blur_kernel_fraction);
    any = true;
  }
  if (bernoulli(rng, config.p_hflip)) {
    cv::flip(view, view, 1);
    any = true;
  }
  if (bernoulli(rng, config.p_vflip)) {
    cv::flip(view, view, 0);
    any = true;
  }
  if (bernoulli(rng, config.p_rotation)) {
    view = rotate(view, uniform(rng, config.rotation_degrees.first, config.rotation_degrees.second));
    any = true;
  }
  if (touched != nullptr) *touched = any;
  return view;
}

namespace {

cv::Mat augment_normalized(const cv::Mat& pixels, const ingest::Normalization& norm,
                           const AugmentationConfig& config, bool with_crop, Rng& rng) {
  cv::Mat unit = pixels.clone();
  norm.invert(unit);
  bool touched = false;
  cv::Mat view = run_pipeline(unit, config, with_crop, rng, &touched);
  // Skip the float round trip when no operation fired so identities are exact.
  if (!touched) return pixels.clone();
  norm.apply(view);
  return view;
}

}  // namespace

cv::Mat augment_local(const ingest::CellCrop& crop, const AugmentationConfig& config, Rng& rng) {
  return augment_normalized(crop.pixels, crop.normalization, config, true, rng);
}

cv::Mat augment_global(const ingest::CellCrop& crop, const AugmentationConfig& config, Rng& rng) {
  return augment_normalized(crop.pixels, crop.normalization, config, false, rng);
}

cv::Mat augment_environment(const ingest::EnvironmentPatch& patch,
                            const ingest::Normalization& normalization,
                            const AugmentationConfig& config, Rng& rng) {
  return augment_normalized(patch.pixels, normalization, config, false, rng);
}

ViewPair make_view_pair(const ingest::CellCrop& crop, const AugmentationConfig& config, Rng& rng) {
  ViewPair pair;
  pair.cell_id = crop.cell_id;
  pair.query_view = augment_local(crop, config, rng);
  pair.key_view = config.multi_crop ? augment_global(crop, config, rng) : augment_local(crop, config, rng);
  return pair;
}

}  // namespace volta::augment
