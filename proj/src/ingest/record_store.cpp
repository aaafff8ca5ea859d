// SPDX-License-Identifier: Apache-2.0
#include "volta/ingest/record_store.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <fstream>
#include <set>

#include "volta/common/error.hpp"

namespace volta::ingest {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "record store is little-endian float32");

std::span<const float> RecordStore::crop(std::size_t row) const {
  require(row < size(), "crop row out of range");
  return {crops.data() + row * crop_floats(), crop_floats()};
}

std::span<const float> RecordStore::env(std::size_t row) const {
  require(row < size(), "environment row out of range");
  return {envs.data() + row * env_floats(), env_floats()};
}

CellCrop RecordStore::cell_crop(std::size_t row) const {
  auto data = crop(row);
  cv::Mat view(crop_size, crop_size, CV_32FC3, const_cast<float*>(data.data()));
  return {view.clone(), cells[row].cell_id, normalization};
}

EnvironmentPatch RecordStore::environment(std::size_t row) const {
  auto data = env(row);
  cv::Mat view(env_size, env_size, CV_32FC3, const_cast<float*>(data.data()));
  EnvironmentPatch patch;
  patch.pixels = view.clone();
  patch.cell_id = cells[row].cell_id;
  patch.mask_policy = mask_policy;
  return patch;
}

std::vector<std::size_t> RecordStore::rows(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<std::string> RecordStore::label_table() const {
  std::set<std::string> labels;
  for (const auto& c : cells) {
    if (c.label) labels.insert(*c.label);
  }
  return {labels.begin(), labels.end()};
}

std::optional<std::size_t> RecordStore::find(const std::string& cell_id) const {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].cell_id == cell_id) return i;
  }
  return std::nullopt;
}

namespace {

void write_floats(const fs::path& path, const std::vector<float>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) throw DataError("short write to " + path.string());
}

std::vector<float> read_floats(const fs::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != count * sizeof(float)) {
    throw DataError(path.string() + " holds " + std::to_string(bytes) + " bytes, expected " +
                    std::to_string(count * sizeof(float)));
  }
  in.seekg(0);
  std::vector<float> values(count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  return values;
}

json bbox_json(const BBox& b) { return json::array({b.top, b.left, b.height, b.width}); }

BBox bbox_from(const json& j) {
  return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

}  // namespace

void RecordStore::save(const fs::path& dir) const {
  fs::create_directories(dir);
  write_floats(dir / "crops.bin", crops);
  write_floats(dir / "envs.bin", envs);

  json index;
  index["format_version"] = kRecordStoreFormatVersion;
  index["n"] = size();
  index["crop_size"] = crop_size;
  index["env_size"] = env_size;
  index["mask_policy"] = to_string(mask_policy);
  index["normalization"] = {{"defined", normalization.defined},
                            {"mean", normalization.mean},
                            {"std", normalization.std}};
  index["labels"] = label_table();
  json cells_json = json::array();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    cells_json.push_back({{"row", i},
                          {"cell_id", c.cell_id},
                          {"slide_id", c.slide_id},
                          {"instance_id", c.instance_id},
                          {"split", to_string(c.split)},
                          {"label", c.label ? json(*c.label) : json(nullptr)},
                          {"centroid", {c.centroid_row, c.centroid_col}},
                          {"bbox", bbox_json(c.bbox)},
                          {"area", c.area}});
  }
  index["cells"] = std::move(cells_json);
  json skipped_json = json::array();
  for (const auto& s : skipped) {
    skipped_json.push_back(
        {{"slide_id", s.slide_id}, {"instance_id", s.instance_id}, {"reason", s.reason}});
  }
  index["skipped"] = std::move(skipped_json);
  json slides_json = json::array();
  for (const auto& s : slides) {
    slides_json.push_back({{"slide_id", s.slide_id},
                           {"height", s.height},
                           {"width", s.width},
                           {"image", s.image_path},
                           {"mask", s.mask_path},
                           {"split", to_string(s.split)}});
  }
  index["slides"] = std::move(slides_json);

  std::ofstream out(dir / "index.json");
  if (!out) throw DataError("cannot write " + (dir / "index.json").string());
  out << index.dump(1) << '\n';
}

RecordStore RecordStore::load(const fs::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw DataError("record store index not found: " + (dir / "index.json").string());
  json index;
  try {
    in >> index;
  } catch (const json::exception& e) {
    throw DataError("cannot parse " + (dir / "index.json").string() + ": " + e.what());
  }
  if (index.value("format_version", 0) != kRecordStoreFormatVersion) {
    throw DataError("unsupported record store format in " + dir.string());
  }
  RecordStore store;
  store.crop_size = index.at("crop_size").get<int>();
  store.env_size = index.at("env_size").get<int>();
  store.mask_policy = parse_mask_policy(index.at("mask_policy").get<std::string>());
  const auto& norm = index.at("normalization");
  store.normalization.defined = norm.at("defined").get<bool>();
  store.normalization.mean = norm.at("mean").get<std::array<float, 3>>();
  store.normalization.std = norm.at("std").get<std::array<float, 3>>();
  for (const auto& c : index.at("cells")) {
    CellMeta m;
    m.cell_id = c.at("cell_id").get<std::string>();
    m.slide_id = c.at("slide_id").get<std::string>();
    m.instance_id = c.at("instance_id").get<int>();
    m.split = parse_split(c.at("split").get<std::string>());
    if (!c.at("label").is_null()) m.label = c.at("label").get<std::string>();
    m.centroid_row = c.at("centroid").at(0).get<double>();
    m.centroid_col = c.at("centroid").at(1).get<double>();
    m.bbox = bbox_from(c.at("bbox"));
    m.area = c.at("area").get<int>();
    store.cells.push_back(std::move(m));
  }
  for (const auto& s : index.at("skipped")) {
    store.skipped.push_back({s.at("slide_id").get<std::string>(), s.at("instance_id").get<int>(),
                             s.at("reason").get<std::string>()});
  }
  for (const auto& s : index.at("slides")) {
    store.slides.push_back({s.at("slide_id").get<std::string>(), s.at("height").get<int>(),
                            s.at("width").get<int>(), s.at("image").get<std::string>(),
                            s.at("mask").get<std::string>(),
                            parse_split(s.at("split").get<std::string>())});
  }
  const std::size_t n = index.at("n").get<std::size_t>();
  if (n != store.cells.size()) throw DataError("index.json row count mismatch in " + dir.string());
  store.crops = read_floats(dir / "crops.bin", n * store.crop_floats());
  store.envs = read_floats(dir / "envs.bin", n * store.env_floats());
  return store;
}

}  // namespace volta::ingest
