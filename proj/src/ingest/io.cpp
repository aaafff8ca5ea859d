// SPDX-License-Identifier: Apache-2.0
#include "volta/ingest/io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "volta/common/error.hpp"

namespace volta::ingest {

namespace fs = std::filesystem;
using nlohmann::json;

cv::Mat read_rgb(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("image not found: " + path.string());
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot decode image: " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

void write_rgb(const fs::path& path, const cv::Mat& rgb) {
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) throw DataError("cannot write image: " + path.string());
}

cv::Mat read_label_image(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("mask not found: " + path.string());
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw DataError("cannot decode mask: " + path.string());
  if (raw.channels() != 1) throw DataError("mask must be single-channel: " + path.string());
  cv::Mat labels;
  raw.convertTo(labels, CV_32S);
  return labels;
}

InstanceMask rasterize_polygons(const fs::path& path, int height, int width) {
  std::ifstream in(path);
  if (!in) throw DataError("mask not found: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("cannot parse polygon mask " + path.string() + ": " + e.what());
  }
  InstanceMask out{cv::Mat::zeros(height, width, CV_32S), {}};
  for (const auto& inst : doc.at("instances")) {
    const int id = inst.at("id").get<int>();
    if (id <= 0) throw DataError("polygon instance ids must be positive in " + path.string());
    out.declared_ids.push_back(id);
    std::vector<cv::Point> pts;
    for (const auto& p : inst.at("polygon")) {
      pts.emplace_back(static_cast<int>(std::lround(p.at(0).get<double>())),
                       static_cast<int>(std::lround(p.at(1).get<double>())));
    }
    if (pts.size() < 3) continue;  // no area; reported as an empty mask downstream
    cv::fillPoly(out.labels, std::vector<std::vector<cv::Point>>{pts}, cv::Scalar(id));
  }
  return out;
}

InstanceMask read_mask(const fs::path& path, int height, int width) {
  if (path.extension() == ".json") return rasterize_polygons(path, height, width);
  return {read_label_image(path), {}};
}

std::string make_cell_id(const std::string& slide_id, int instance_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%08d", instance_id);
  return slide_id + ":" + buf;
}

std::vector<CellInstance> instances_from_labels(const cv::Mat& labels, const std::string& slide_id) {
  CV_Assert(labels.type() == CV_32S);
  struct Acc {
    int top = INT32_MAX, left = INT32_MAX, bottom = -1, right = -1;
    double sum_r = 0, sum_c = 0;
    long count = 0;
  };
  std::map<int, Acc> acc;
  for (int r = 0; r < labels.rows; ++r) {
    const auto* row = labels.ptr<std::int32_t>(r);
    for (int c = 0; c < labels.cols; ++c) {
      const int id = row[c];
      if (id <= 0) continue;
      auto& a = acc[id];
      a.top = std::min(a.top, r);
      a.left = std::min(a.left, c);
      a.bottom = std::max(a.bottom, r + 1);
      a.right = std::max(a.right, c + 1);
      a.sum_r += r;
      a.sum_c += c;
      ++a.count;
    }
  }
  std::vector<CellInstance> out;
  out.reserve(acc.size());
  for (const auto& [id, a] : acc) {
    CellInstance inst;
    inst.instance_id = id;
    inst.slide_id = slide_id;
    inst.cell_id = make_cell_id(slide_id, id);
    inst.bbox = {a.top, a.left, a.bottom - a.top, a.right - a.left};
    inst.centroid_row = a.sum_r / static_cast<double>(a.count);
    inst.centroid_col = a.sum_c / static_cast<double>(a.count);
    inst.mask = (labels(cv::Rect(a.left, a.top, inst.bbox.width, inst.bbox.height)) == id) / 255;
    out.push_back(std::move(inst));
  }
  return out;
}

std::map<int, std::string> read_instance_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("label file not found: " + path.string());
  std::map<int, std::string> out;
  if (path.extension() == ".json") {
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw DataError("cannot parse labels " + path.string() + ": " + e.what());
    }
    for (const auto& [key, value] : doc.items()) out[std::stoi(key)] = value.get<std::string>();
    return out;
  }
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw DataError("malformed label line " + std::to_string(lineno) + " in " + path.string());
    }
    const std::string id = line.substr(0, comma);
    if (lineno == 1 && !std::all_of(id.begin(), id.end(), ::isdigit)) continue;  // header
    std::string label = line.substr(comma + 1);
    if (!label.empty() && label.back() == '\r') label.pop_back();
    out[std::stoi(id)] = label;
  }
  return out;
}

}  // namespace volta::ingest
