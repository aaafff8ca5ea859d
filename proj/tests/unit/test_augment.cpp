// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "volta/augment/augment.hpp"
#include "volta/common/error.hpp"

using namespace volta;
using namespace volta::augment;

namespace {

cv::Mat gradient_image(int size) {
  cv::Mat img(size, size, CV_32FC3);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      img.at<cv::Vec3f>(r, c) = {static_cast<float>(c) / (size - 1), static_cast<float>(r) / (size - 1), 0.5F};
  return img;
}

cv::Mat colourful_image(int size, std::uint64_t seed) {
  Rng rng(seed);
  cv::Mat img(size, size, CV_32FC3);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      img.at<cv::Vec3f>(r, c) = {static_cast<float>(uniform01(rng)), static_cast<float>(uniform01(rng)),
                                 static_cast<float>(uniform01(rng))};
  return img;
}

ingest::CellCrop crop_of(const cv::Mat& unit) {
  ingest::CellCrop crop;
  crop.normalization.mean = {0.6F, 0.4F, 0.7F};
  crop.normalization.std = {0.2F, 0.25F, 0.15F};
  crop.normalization.defined = true;
  crop.pixels = unit.clone();
  crop.normalization.apply(crop.pixels);
  crop.cell_id = "s:00000001";
  return crop;
}

double circular_delta(double a, double b) {
  const double d = std::fabs(a - b);
  return std::min(d, 1.0 - d);
}

}  // namespace

TEST_CASE("identity configuration returns the input exactly") {
  const auto crop = crop_of(colourful_image(32, 1));
  const auto cfg = AugmentationConfig::identity();
  Rng rng(3);
  CHECK(cv::norm(augment_local(crop, cfg, rng), crop.pixels, cv::NORM_INF) == 0.0);
  CHECK(cv::norm(augment_global(crop, cfg, rng), crop.pixels, cv::NORM_INF) == 0.0);
  ingest::EnvironmentPatch env;
  env.pixels = crop_of(colourful_image(48, 2)).pixels;
  CHECK(cv::norm(augment_environment(env, crop.normalization, cfg, rng), env.pixels, cv::NORM_INF) == 0.0);
}

TEST_CASE("fixed seed gives identical views") {
  const auto crop = crop_of(colourful_image(32, 4));
  const AugmentationConfig cfg;
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
    Rng a(seed), b(seed);
    const auto va = make_view_pair(crop, cfg, a);
    const auto vb = make_view_pair(crop, cfg, b);
    CHECK(cv::norm(va.query_view, vb.query_view, cv::NORM_INF) == 0.0);
    CHECK(cv::norm(va.key_view, vb.key_view, cv::NORM_INF) == 0.0);
    CHECK(va.query_view.size() == cv::Size(32, 32));
    CHECK(va.key_view.size() == cv::Size(32, 32));
  }
}

TEST_CASE("quarter-area crop covers a quarter sub-window") {
  const int n = 32;
  const cv::Mat img = gradient_image(n);
  auto cfg = AugmentationConfig::identity();
  cfg.crop_scale = {0.25, 0.25};
  cfg.crop_ratio = {1.0, 1.0};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const cv::Mat view = run_pipeline(img, cfg, true, rng);
    REQUIRE(view.size() == cv::Size(n, n));
    cv::Mat ch[3];
    cv::split(view, ch);
    double c0, c1, r0, r1;
    cv::minMaxLoc(ch[0], &c0, &c1);
    cv::minMaxLoc(ch[1], &r0, &r1);
    // Columns/rows spanned by the source window, recovered from the gradient.
    const double width = (c1 - c0) * (n - 1) + 1;
    const double height = (r1 - r0) * (n - 1) + 1;
    CHECK(width == doctest::Approx(16.0).epsilon(1e-4));
    CHECK(height == doctest::Approx(16.0).epsilon(1e-4));
    CHECK(width * height / (n * n) == doctest::Approx(0.25).epsilon(1e-4));
  }
}

TEST_CASE("global pipeline never crops") {
  const cv::Mat img = gradient_image(32);
  auto cfg = AugmentationConfig::identity();
  cfg.crop_scale = {0.2, 0.2};
  cfg.p_hflip = 1.0;
  Rng rng(5);
  const cv::Mat view = run_pipeline(img, cfg, false, rng);
  cv::Mat flipped;
  cv::flip(img, flipped, 1);
  CHECK(cv::norm(view, flipped, cv::NORM_INF) == 0.0);
}

TEST_CASE("hue jitter moves hue by at most its maximum") {
  auto cfg = AugmentationConfig::identity();
  cfg.p_jitter = 1.0;
  cfg.jitter = {0.0, 0.0, 0.0, 0.1};
  for (int size : {32, 64}) {
    const cv::Mat img = colourful_image(size, 11 + size);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      const cv::Mat view = run_pipeline(img, cfg, false, rng);
      double worst = 0.0;
      for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
          const auto a = rgb_to_hsv(img.at<cv::Vec3f>(r, c));
          const auto b = rgb_to_hsv(view.at<cv::Vec3f>(r, c));
          if (a[1] < 0.05F || a[2] < 0.05F) continue;  // hue is ill-defined near grey
          worst = std::max(worst, circular_delta(a[0], b[0]));
        }
      }
      CHECK(worst <= 0.1 + 1e-4);
    }
  }
}

TEST_CASE("hsv round trip") {
  const cv::Mat img = colourful_image(16, 8);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) {
      const auto p = img.at<cv::Vec3f>(r, c);
      const auto q = hsv_to_rgb(rgb_to_hsv(p));
      for (int k = 0; k < 3; ++k) CHECK(q[k] == doctest::Approx(p[k]).epsilon(1e-5));
    }
}

TEST_CASE("views stay finite and bounded under the default pipeline") {
  const auto crop = crop_of(colourful_image(32, 21));
  const AugmentationConfig cfg;
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto pair = make_view_pair(crop, cfg, rng);
    CHECK(cv::checkRange(pair.query_view));
    CHECK(cv::checkRange(pair.key_view));
    cv::Mat unit = pair.query_view.clone();
    crop.normalization.invert(unit);
    double lo, hi;
    cv::minMaxLoc(unit.reshape(1), &lo, &hi);
    CHECK(lo >= -1e-5);
    CHECK(hi <= 1.0 + 1e-5);
  }
}

TEST_CASE("multi_crop off makes both views local") {
  const auto crop = crop_of(gradient_image(32));
  auto cfg = AugmentationConfig::identity();
  cfg.crop_scale = {0.25, 0.25};
  cfg.crop_ratio = {1.0, 1.0};
  cfg.multi_crop = true;
  Rng a(7);
  auto pair = make_view_pair(crop, cfg, a);
  CHECK(cv::norm(pair.key_view, crop.pixels, cv::NORM_INF) == 0.0);
  CHECK(cv::norm(pair.query_view, crop.pixels, cv::NORM_INF) > 0.0);
  cfg.multi_crop = false;
  Rng b(7);
  pair = make_view_pair(crop, cfg, b);
  CHECK(cv::norm(pair.key_view, crop.pixels, cv::NORM_INF) > 0.0);
}

TEST_CASE("invalid configurations are rejected") {
  AugmentationConfig cfg;
  cfg.p_blur = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AugmentationConfig{};
  cfg.crop_scale = {0.8, 0.2};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AugmentationConfig{};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("gaussian blur preserves constants and smooths an impulse") {
  cv::Mat flat(32, 32, CV_32FC3, cv::Scalar(0.3, 0.6, 0.9));
  const cv::Mat b = gaussian_blur(flat, 1.5, 0.1);
  CHECK(cv::norm(b, flat, cv::NORM_INF) < 1e-6);
  cv::Mat impulse = cv::Mat::zeros(32, 32, CV_32FC3);
  impulse.at<cv::Vec3f>(16, 16) = {1, 1, 1};
  const cv::Mat s = gaussian_blur(impulse, 1.0, 0.1);
  CHECK(s.at<cv::Vec3f>(16, 16)[0] < 1.0F);
  CHECK(s.at<cv::Vec3f>(16, 17)[0] > 0.0F);
  CHECK(cv::sum(s)[0] == doctest::Approx(1.0).epsilon(1e-5));
}
