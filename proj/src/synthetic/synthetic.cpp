// SPDX-License-Identifier: Apache-2.0
#include "volta/synthetic/synthetic.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "volta/common/error.hpp"
#include "volta/common/random.hpp"
#include "volta/ingest/dataset.hpp"
#include "volta/ingest/io.hpp"
#include "volta/ingest/extract.hpp"

namespace volta::synthetic {

namespace fs = std::filesystem;

namespace {

constexpr int kRegionsPerSide = 2;
const cv::Vec3f kEosin{0.93F, 0.72F, 0.84F};
const cv::Vec3f kHematoxylin{0.36F, 0.22F, 0.55F};

enum Texture { stripes = 0, dots = 1, blotches = 2 };

cv::Mat texture_region(int side, int texture, Rng& rng) {
  const cv::Vec3f base = kEosin * static_cast<float>(uniform(rng, 0.92, 1.03));
  cv::Mat out(side, side, CV_32FC3);
  switch (texture) {
    case stripes: {
      const double theta = uniform(rng, 0.0, std::numbers::pi);
      const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
          const double v = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (c * std::cos(theta) + r * std::sin(theta)) / 10.0 + phase);
          out.at<cv::Vec3f>(r, c) = base * static_cast<float>(1.0 - 0.3 * v);
        }
      break;
    }
    case dots: {
      out.setTo(cv::Scalar(base[0], base[1], base[2]));
      const int off_r = static_cast<int>(uniform_index(rng, 10));
      const int off_c = static_cast<int>(uniform_index(rng, 10));
      const cv::Vec3f dark = base * 0.62F;
      for (int r = off_r; r < side; r += 10)
        for (int c = off_c; c < side; c += 10) cv::circle(out, {c, r}, 2, cv::Scalar(dark[0], dark[1], dark[2]), cv::FILLED);
      break;
    }
    default: {
      cv::Mat low(6, 6, CV_32F);
      for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) low.at<float>(r, c) = static_cast<float>(uniform01(rng));
      cv::Mat smooth;
      cv::resize(low, smooth, {side, side}, 0, 0, cv::INTER_CUBIC);
      for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
          const float n = std::clamp(smooth.at<float>(r, c), 0.0F, 1.0F);
          out.at<cv::Vec3f>(r, c) = base * (1.0F - 0.35F * n);
        }
      break;
    }
  }
  return out;
}

struct CellShape {
  cv::Point center;
  cv::Size axes;
  double angle = 0.0;
  int cls = 0;
};

cv::Scalar scalar(const cv::Vec3f& v) { return {v[0], v[1], v[2]}; }

void draw_cell(cv::Mat& canvas, cv::Mat& labels, const CellShape& s, int id, Variant variant, Rng& rng) {
  const float brightness = static_cast<float>(uniform(rng, 0.6, 1.4));
  cv::Vec3f colour = kHematoxylin * brightness;
  for (int k = 0; k < 3; ++k) colour[k] *= static_cast<float>(uniform(rng, 0.85, 1.15));
  if (variant == Variant::environment) colour[0] += 0.02F * static_cast<float>(s.cls - 1);
  cv::ellipse(labels, s.center, s.axes, s.angle, 0, 360, cv::Scalar(id), cv::FILLED, cv::LINE_8);
  cv::ellipse(canvas, s.center, s.axes, s.angle, 0, 360, scalar(colour), cv::FILLED, cv::LINE_8);
  if (variant == Variant::cells && s.cls == 2) {
    const cv::Vec3f pale = colour * 0.4F + kEosin * 0.6F;
    cv::ellipse(canvas, s.center, {s.axes.width - 2, s.axes.height - 2}, s.angle, 0, 360, scalar(pale), cv::FILLED,
                cv::LINE_8);
    cv::circle(canvas, s.center, 1, scalar(colour * 0.8F), cv::FILLED, cv::LINE_8);
  }
}

CellShape sample_shape(int cls, Variant variant, Rng& rng) {
  CellShape s;
  s.cls = cls;
  s.angle = uniform(rng, 0.0, 180.0);
  if (variant == Variant::environment) {
    const int r = 5 + static_cast<int>(uniform_index(rng, 3));
    s.axes = {r, r};
    return s;
  }
  switch (cls) {
    case 0: {
      const int r = 5 + static_cast<int>(uniform_index(rng, 2));
      s.axes = {r, r};
      break;
    }
    case 1:
      s.axes = {9 + static_cast<int>(uniform_index(rng, 3)), 3 + static_cast<int>(uniform_index(rng, 2))};
      break;
    default: {
      const int r = 6 + static_cast<int>(uniform_index(rng, 2));
      s.axes = {r, r};
      break;
    }
  }
  return s;
}

int pick_region(int cls, const std::array<int, 4>& textures, double match, Rng& rng) {
  std::vector<int> same, other;
  for (int i = 0; i < 4; ++i) (textures[i] == cls ? same : other).push_back(i);
  const auto& pool = (bernoulli(rng, match) && !same.empty()) || other.empty() ? same : other;
  return pool[uniform_index(rng, pool.size())];
}

void write_image_set(const SyntheticConfig& config, const fs::path& out, SyntheticSummary& summary) {
  const int side = config.image_size;
  const int region = side / kRegionsPerSide;
  const int per_image = config.cells_per_image;
  const int n_images = (config.n_train + config.n_test) / per_image;
  const int n_train_images = config.n_train / per_image;
  const double match = config.effective_texture_match();
  fs::create_directories(out / "images");
  fs::create_directories(out / "masks");
  fs::create_directories(out / "labels");
  ingest::DatasetManifest manifest;
  int cell_index = 0;
  for (int img = 0; img < n_images; ++img) {
    Rng rng(derive_seed(config.seed, {0x5A, static_cast<std::uint64_t>(img)}));
    std::array<int, 4> textures{0, 1, 2, static_cast<int>(uniform_index(rng, 3))};
    shuffle(std::span<int>(textures), rng);
    cv::Mat canvas(side, side, CV_32FC3);
    for (int q = 0; q < 4; ++q) {
      const cv::Rect rect((q % 2) * region, (q / 2) * region, region, region);
      texture_region(region, textures[q], rng).copyTo(canvas(rect));
    }
    cv::Mat labels = cv::Mat::zeros(side, side, CV_16U);
    std::vector<CellShape> placed;
    char name[32];
    std::snprintf(name, sizeof name, "img_%03d", img);
    std::ofstream csv(out / "labels" / (std::string(name) + ".csv"));
    csv << "id,label\n";
    for (int i = 0; i < per_image; ++i, ++cell_index) {
      const int cls = cell_index % 3;
      auto shape = sample_shape(cls, config.variant, rng);
      const int q = pick_region(cls, textures, match, rng);
      const int extent = std::max(shape.axes.width, shape.axes.height);
      bool ok = false;
      for (int attempt = 0; attempt < 500 && !ok; ++attempt) {
        const int lo = extent + 2;
        const int hi = region - extent - 2;
        shape.center = {(q % 2) * region + lo + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo))),
                        (q / 2) * region + lo + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo)))};
        ok = true;
        for (const auto& p : placed) {
          const double d = cv::norm(p.center - shape.center);
          if (d < extent + std::max(p.axes.width, p.axes.height) + 3) {
            ok = false;
            break;
          }
        }
      }
      if (!ok) throw Error("synthetic generator could not place a cell; lower cells_per_image");
      placed.push_back(shape);
      draw_cell(canvas, labels, shape, i + 1, config.variant, rng);
      csv << (i + 1) << ',' << kClassNames[static_cast<std::size_t>(cls)] << '\n';
    }
    cv::Vec3f stain;
    for (int k = 0; k < 3; ++k) stain[k] = static_cast<float>(uniform(rng, 0.9, 1.1));
    cv::Mat rgb8(side, side, CV_8UC3);
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c) {
        const auto v = canvas.at<cv::Vec3f>(r, c);
        cv::Vec3b px;
        for (int k = 0; k < 3; ++k) {
          const double x = v[k] * stain[k] + normal(rng, 0.0, 0.02);
          px[k] = static_cast<unsigned char>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0));
        }
        rgb8.at<cv::Vec3b>(r, c) = px;
      }
    const fs::path image_rel = fs::path("images") / (std::string(name) + ".png");
    const fs::path mask_rel = fs::path("masks") / (std::string(name) + ".png");
    ingest::write_rgb(out / image_rel, rgb8);
    if (!cv::imwrite((out / mask_rel).string(), labels)) throw DataError("cannot write " + (out / mask_rel).string());
    ingest::ManifestRecord rec;
    rec.image = image_rel;
    rec.mask = mask_rel;
    rec.labels = fs::path("labels") / (std::string(name) + ".csv");
    rec.split = img < n_train_images ? ingest::Split::train : ingest::Split::test;
    rec.slide_id = name;
    rec.magnification = "40x";
    manifest.records.push_back(std::move(rec));
  }
  summary.manifest = out / "manifest.json";
  manifest.save(summary.manifest);
  summary.n_images = n_images;
  summary.n_cells = cell_index;
}

void write_slides(const SyntheticConfig& config, const fs::path& out, SyntheticSummary& summary) {
  fs::create_directories(out);
  const int k = config.clusters;
  const int patch = 400;
  const int tiles = config.slide_size / patch;
  summary.assignments = out / "assignments.csv";
  summary.slides = out / "slides.csv";
  std::ofstream assign(summary.assignments);
  std::ofstream slides(summary.slides);
  if (!assign || !slides) throw DataError("cannot write into " + out.string());
  assign << "slide_id,cell_id,row,col,cluster\n";
  slides << "slide_id,height,width,family\n";
  for (int s = 0; s < config.n_slides; ++s) {
    const int family = s % 3;
    char slide_id[32];
    std::snprintf(slide_id, sizeof slide_id, "slide_%02d", s);
    slides << slide_id << ',' << config.slide_size << ',' << config.slide_size << ",family_" << family << '\n';
    Rng rng(derive_seed(config.seed, {0x5B, static_cast<std::uint64_t>(s)}));
    std::vector<double> base(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) base[static_cast<std::size_t>(c)] = (c % 3 == family) ? 7.0 : 1.0;
    std::vector<std::vector<double>> patch_weights;
    for (int t = 0; t < tiles * tiles; ++t) {
      std::vector<double> w(base);
      double sum = 0.0;
      for (auto& x : w) sum += (x *= std::exp(0.25 * normal(rng)));
      for (auto& x : w) x /= sum;
      patch_weights.push_back(std::move(w));
    }
    for (int i = 0; i < config.cells_per_slide; ++i) {
      const double row = uniform(rng, 0.0, tiles * patch);
      const double col = uniform(rng, 0.0, tiles * patch);
      const auto& w = patch_weights[static_cast<std::size_t>(static_cast<int>(row) / patch * tiles +
                                                             static_cast<int>(col) / patch)];
      double u = uniform01(rng);
      int cluster = k - 1;
      for (int c = 0; c < k; ++c) {
        if (u < w[static_cast<std::size_t>(c)]) {
          cluster = c;
          break;
        }
        u -= w[static_cast<std::size_t>(c)];
      }
      char line[128];
      std::snprintf(line, sizeof line, "%s,%s,%.3f,%.3f,%d\n", slide_id, ingest::make_cell_id(slide_id, i + 1).c_str(),
                    row, col, cluster);
      assign << line;
    }
  }
  summary.n_cells = config.n_slides * config.cells_per_slide;
}

}  // namespace

Variant parse_variant(const std::string& name) {
  if (name == "cells") return Variant::cells;
  if (name == "environment") return Variant::environment;
  if (name == "slides") return Variant::slides;
  throw ConfigError("unknown synthetic variant '" + name + "' (cells, environment, slides)");
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::cells: return "cells";
    case Variant::environment: return "environment";
    default: return "slides";
  }
}

void SyntheticConfig::validate() const {
  if (variant == Variant::slides) {
    if (n_slides < 2 || slide_size < 400 || cells_per_slide < 1 || clusters < 1) {
      throw ConfigError("slides variant needs >= 2 slides of >= 400 px, cells and clusters");
    }
    return;
  }
  if (cells_per_image < 1 || cells_per_image > 40) throw ConfigError("cells_per_image must be in [1, 40]");
  if (n_train < cells_per_image || n_train % cells_per_image != 0 || n_test % cells_per_image != 0) {
    throw ConfigError("n_train and n_test must be positive multiples of cells_per_image");
  }
  if (image_size < 128 || image_size % 2 != 0) throw ConfigError("image_size must be an even number >= 128");
  if (texture_match > 1.0) throw ConfigError("texture_match must be <= 1");
}

double SyntheticConfig::effective_texture_match() const {
  if (texture_match >= 0.0) return texture_match;
  return variant == Variant::environment ? 0.9 : 0.7;
}

SyntheticSummary generate(const SyntheticConfig& config, const fs::path& out_dir) {
  config.validate();
  SyntheticSummary summary;
  if (config.variant == Variant::slides) {
    write_slides(config, out_dir, summary);
  } else {
    write_image_set(config, out_dir, summary);
  }
  return summary;
}

}  // namespace volta::synthetic
