// SPDX-License-Identifier: Apache-2.0
#include "volta/ingest/dataset.hpp"

#include <spdlog/spdlog.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

#include "volta/common/digest.hpp"
#include "volta/common/error.hpp"
#include "volta/common/parallel.hpp"
#include "volta/ingest/io.hpp"

namespace volta::ingest {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw DataError(what + " not found: " + p.string());
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

cv::Mat load_image(const fs::path& path, const std::string& hook) {
  if (hook.empty()) return read_rgb(path);
  const fs::path out = fs::temp_directory_path() /
                       ("volta_hook_" + std::to_string(::getpid()) + "_" +
                        sha256_hex(path.string()).substr(0, 16) + ".png");
  const std::string cmd = shell_quote(hook) + " " + shell_quote(path.string()) + " " +
                          shell_quote(out.string());
  const int rc = std::system(cmd.c_str());
  if (rc != 0) {
    throw DataError("preprocess hook failed (" + std::to_string(rc) + ") on " + path.string());
  }
  cv::Mat image = read_rgb(out);
  fs::remove(out);
  return image;
}

struct SlideCells {
  const ManifestRecord* record = nullptr;
  int height = 0;
  int width = 0;
  std::vector<CellInstance> instances;  // every instance, used for masking
  std::vector<std::size_t> accepted;    // indices into instances
};

}  // namespace

DatasetManifest DatasetManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest not found: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("cannot parse manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.format_version = doc.at("format_version").get<int>();
    if (m.format_version != kManifestFormatVersion) {
      throw ConfigError("unsupported manifest format_version " + std::to_string(m.format_version));
    }
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    for (const auto& r : doc.at("records")) {
      ManifestRecord rec;
      rec.image = resolve(base, r.at("image").get<std::string>());
      rec.mask = resolve(base, r.at("mask").get<std::string>());
      if (r.contains("labels") && !r["labels"].is_null()) {
        rec.labels = resolve(base, r["labels"].get<std::string>());
      }
      if (r.contains("ihc") && !r["ihc"].is_null()) rec.ihc = resolve(base, r["ihc"].get<std::string>());
      rec.split = parse_split(r.at("split").get<std::string>());
      rec.slide_id = r.value("slide_id", rec.image.stem().string());
      rec.magnification = r.value("magnification", std::string{});
      require_file(rec.image, "image");
      require_file(rec.mask, "mask");
      if (rec.labels) require_file(*rec.labels, "label file");
      if (rec.ihc) require_file(*rec.ihc, "IHC image");
      m.records.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw DataError("invalid manifest " + path.string() + ": " + e.what());
  }
  return m;
}

void DatasetManifest::save(const fs::path& path) const {
  json doc;
  doc["format_version"] = format_version;
  doc["records"] = json::array();
  for (const auto& r : records) {
    json j{{"image", r.image.string()},
           {"mask", r.mask.string()},
           {"split", to_string(r.split)},
           {"slide_id", r.slide_id}};
    if (r.labels) j["labels"] = r.labels->string();
    if (r.ihc) j["ihc"] = r.ihc->string();
    if (!r.magnification.empty()) j["magnification"] = r.magnification;
    doc["records"].push_back(std::move(j));
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << doc.dump(1) << '\n';
}

Normalization channel_statistics(const std::vector<const float*>& crops,
                                 std::size_t floats_per_crop) {
  Normalization n;
  if (crops.empty()) return n;
  std::array<double, 3> sum{}, sum_sq{};
  std::size_t count = 0;
  for (const float* crop : crops) {
    for (std::size_t i = 0; i < floats_per_crop; i += 3) {
      for (int k = 0; k < 3; ++k) {
        const double v = crop[i + k];
        sum[k] += v;
        sum_sq[k] += v * v;
      }
    }
    count += floats_per_crop / 3;
  }
  for (int k = 0; k < 3; ++k) {
    const double mean = sum[k] / static_cast<double>(count);
    const double var = std::max(0.0, sum_sq[k] / static_cast<double>(count) - mean * mean);
    n.mean[k] = static_cast<float>(mean);
    n.std[k] = static_cast<float>(std::max(std::sqrt(var), 1e-6));
  }
  n.defined = true;
  return n;
}

RecordStore build_dataset(const DatasetManifest& manifest, const IngestConfig& config) {
  require(config.window_scale > 0.0, "window_scale must be positive");
  require(config.crop_size > 0 && config.env_size > 0 && config.env_input_size > 0,
          "crop and environment sizes must be positive");

  std::vector<const ManifestRecord*> ordered;
  for (const auto& r : manifest.records) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->slide_id < b->slide_id; });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i]->slide_id == ordered[i - 1]->slide_id) {
      throw DataError("duplicate slide_id '" + ordered[i]->slide_id + "' in manifest");
    }
  }

  RecordStore store;
  store.crop_size = config.crop_size;
  store.env_size = config.env_input_size;
  store.mask_policy = config.mask_policy;

  // Pass 1: instances, labels and raw crops, one slide at a time.
  std::vector<SlideCells> slides;
  std::vector<cv::Mat> raw_crops;
  for (const auto* rec : ordered) {
    const cv::Mat image = load_image(rec->image, config.preprocess_hook);
    SlideCells sc;
    sc.record = rec;
    sc.height = image.rows;
    sc.width = image.cols;
    InstanceMask mask = read_mask(rec->mask, image.rows, image.cols);
    if (mask.labels.rows != image.rows || mask.labels.cols != image.cols) {
      throw DataError("mask/image size mismatch: " + rec->mask.string() + " is " +
                      std::to_string(mask.labels.cols) + "x" + std::to_string(mask.labels.rows) +
                      ", image " + rec->image.string() + " is " + std::to_string(image.cols) +
                      "x" + std::to_string(image.rows));
    }
    sc.instances = instances_from_labels(mask.labels, rec->slide_id);

    std::set<int> present;
    for (const auto& inst : sc.instances) present.insert(inst.instance_id);
    for (int id : std::set<int>(mask.declared_ids.begin(), mask.declared_ids.end())) {
      if (!present.count(id)) {
        spdlog::warn("skipping cell {} of slide {}: empty_mask", id, rec->slide_id);
        store.skipped.push_back({rec->slide_id, id, "empty_mask"});
      }
    }

    std::map<int, std::string> file_labels;
    if (rec->labels) file_labels = read_instance_labels(*rec->labels);
    std::optional<SlideImage> ihc;
    if (config.ihc && rec->ihc) {
      ihc = SlideImage{read_rgb(*rec->ihc), rec->magnification, rec->slide_id};
      if (ihc->height() != image.rows || ihc->width() != image.cols) {
        throw ConfigError("IHC image " + rec->ihc->string() +
                          " is not registered with its H&E image (size differs)");
      }
    }

    for (std::size_t i = 0; i < sc.instances.size(); ++i) {
      auto& inst = sc.instances[i];
      if (auto it = file_labels.find(inst.instance_id); it != file_labels.end()) {
        inst.label = it->second;
      } else if (ihc) {
        inst.label = derive_label_from_ihc(inst, *ihc,
                                           config.window_scale * config.ihc->window_factor,
                                           config.ihc->dominance_threshold, config.ihc->decoder);
      }
      if (inst.label && !config.label_map.empty()) {
        auto it = config.label_map.find(*inst.label);
        inst.label = it == config.label_map.end() ? std::nullopt : std::optional(it->second);
      }
      if (adaptive_window_side(inst, config.window_scale) > config.env_size) {
        spdlog::warn("skipping cell {}: crop_exceeds_environment", inst.cell_id);
        store.skipped.push_back({rec->slide_id, inst.instance_id, "crop_exceeds_environment"});
        continue;
      }
      sc.accepted.push_back(i);
    }

    const SlideImage slide{image, rec->magnification, rec->slide_id};
    const std::size_t first = raw_crops.size();
    raw_crops.resize(first + sc.accepted.size());
    parallel_for(sc.accepted.size(), config.workers, [&](std::size_t j) {
      raw_crops[first + j] =
          extract_crop_window(slide, sc.instances[sc.accepted[j]], config.window_scale,
                              config.crop_size);
    });
    for (std::size_t idx : sc.accepted) {
      const auto& inst = sc.instances[idx];
      store.cells.push_back({inst.cell_id, inst.slide_id, inst.instance_id, rec->split, inst.label,
                             inst.centroid_row, inst.centroid_col, inst.bbox, inst.area()});
    }
    store.slides.push_back({rec->slide_id, image.rows, image.cols, rec->image.string(),
                            rec->mask.string(), rec->split});
    slides.push_back(std::move(sc));
  }

  // Normalisation statistics from the train split only.
  if (config.normalization) {
    store.normalization = *config.normalization;
  } else {
    std::vector<const float*> train;
    for (std::size_t i = 0; i < store.cells.size(); ++i) {
      if (store.cells[i].split == Split::train) train.push_back(raw_crops[i].ptr<float>());
    }
    if (train.empty() && !store.cells.empty()) {
      throw ConfigError("no train-split cells to compute normalisation statistics from");
    }
    store.normalization = channel_statistics(train, store.crop_floats());
    if (!store.normalization.defined) spdlog::warn("empty dataset: normalisation statistics undefined");
  }
  const auto& norm = store.normalization;
  const cv::Vec3f fill = config.fill == FillMode::dataset_mean && norm.defined
                             ? cv::Vec3f(norm.mean[0], norm.mean[1], norm.mean[2])
                             : cv::Vec3f(0.0F, 0.0F, 0.0F);

  // Pass 2: environment patches (needs the fill colour), then normalise.
  store.crops.resize(store.size() * store.crop_floats());
  store.envs.resize(store.size() * store.env_floats());
  std::size_t row = 0;
  for (const auto& sc : slides) {
    const SlideImage slide{load_image(sc.record->image, config.preprocess_hook),
                           sc.record->magnification, sc.record->slide_id};
    parallel_for(sc.accepted.size(), config.workers, [&](std::size_t j) {
      const std::size_t r = row + j;
      EnvironmentPatch patch = extract_environment_patch(
          slide, sc.instances[sc.accepted[j]], sc.instances, config.env_size,
          config.env_input_size, config.mask_policy, fill);
      norm.apply(patch.pixels);
      std::copy_n(patch.pixels.ptr<float>(), store.env_floats(),
                  store.envs.begin() + static_cast<std::ptrdiff_t>(r * store.env_floats()));
      cv::Mat crop = raw_crops[r];
      norm.apply(crop);
      std::copy_n(crop.ptr<float>(), store.crop_floats(),
                  store.crops.begin() + static_cast<std::ptrdiff_t>(r * store.crop_floats()));
    });
    row += sc.accepted.size();
  }
  return store;
}

}  // namespace volta::ingest
