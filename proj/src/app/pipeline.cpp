// SPDX-License-Identifier: Apache-2.0
#include "volta/app/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "volta/common/error.hpp"
#include "volta/common/log.hpp"

namespace volta::app {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct CsvTable {
  std::map<std::string, std::size_t> column;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const fs::path& path, const std::vector<std::string>& required) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  for (std::size_t i = 0; i < header.size(); ++i) t.column[header[i]] = i;
  for (const auto& r : required) {
    if (!t.column.contains(r)) throw DataError(path.string() + " lacks column '" + r + "'");
  }
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != header.size()) throw DataError(path.string() + ": ragged row '" + line + "'");
    t.rows.push_back(std::move(fields));
  }
  return t;
}

template <typename T>
T parse_number(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    T v;
    if constexpr (std::is_same_v<T, int>) {
      v = std::stoi(s, &used);
    } else {
      v = std::stod(s, &used);
    }
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(path.string() + ": '" + s + "' is not a number");
  }
}

}  // namespace

std::vector<AssignmentRow> read_assignments(const fs::path& path) {
  const auto t = read_csv(path, {"cell_id", "slide_id", "row", "col", "cluster"});
  std::vector<AssignmentRow> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    AssignmentRow a;
    a.cell_id = r[t.column.at("cell_id")];
    a.slide_id = r[t.column.at("slide_id")];
    a.row = parse_number<double>(r[t.column.at("row")], path);
    a.col = parse_number<double>(r[t.column.at("col")], path);
    a.cluster = parse_number<int>(r[t.column.at("cluster")], path);
    if (a.cluster < 0) throw DataError(path.string() + ": negative cluster id");
    out.push_back(std::move(a));
  }
  return out;
}

void write_assignments(const fs::path& path, const std::vector<AssignmentRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "cell_id,slide_id,row,col,cluster\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.3f,%.3f,%d\n", r.row, r.col, r.cluster);
    out << r.cell_id << ',' << r.slide_id << buf;
  }
}

std::vector<SlideRow> read_slides(const fs::path& path) {
  const auto t = read_csv(path, {"slide_id", "height", "width"});
  std::vector<SlideRow> out;
  for (const auto& r : t.rows) {
    SlideRow s;
    s.slide_id = r[t.column.at("slide_id")];
    s.height = parse_number<int>(r[t.column.at("height")], path);
    s.width = parse_number<int>(r[t.column.at("width")], path);
    if (t.column.contains("family")) s.family = r[t.column.at("family")];
    out.push_back(std::move(s));
  }
  return out;
}

void write_slides(const fs::path& path, const std::vector<SlideRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "slide_id,height,width,family\n";
  for (const auto& s : rows) out << s.slide_id << ',' << s.height << ',' << s.width << ',' << s.family << '\n';
}

SubtypeOutcome run_subtype(const std::vector<AssignmentRow>& cells, const std::vector<SlideRow>& slides,
                           const SubtypeConfig& config, std::uint64_t seed) {
  SubtypeOutcome out;
  for (const auto& c : cells) out.k = std::max(out.k, c.cluster + 1);
  if (out.k == 0) throw DataError("no cell assignments");
  std::map<std::string, std::vector<subtype::CellPoint>> by_slide;
  for (const auto& c : cells) by_slide[c.slide_id].push_back({c.row, c.col, c.cluster});
  for (const auto& [id, pts] : by_slide) {
    if (std::none_of(slides.begin(), slides.end(), [&](const SlideRow& s) { return s.slide_id == id; })) {
      throw DataError("assignments reference unknown slide '" + id + "'");
    }
  }

  std::vector<std::size_t> profile_slide;  // index into slides
  for (std::size_t s = 0; s < slides.size(); ++s) {
    const auto it = by_slide.find(slides[s].slide_id);
    const std::vector<subtype::CellPoint> none;
    const auto& pts = it == by_slide.end() ? none : it->second;
    auto tiles = subtype::profile_slide(slides[s].slide_id, slides[s].height, slides[s].width, config.patch_size, pts,
                                        out.k);
    for (auto& t : tiles) {
      out.profiles.push_back(std::move(t));
      profile_slide.push_back(s);
    }
  }
  out.groups = subtype::group_patches(out.profiles, config.groups, seed);
  out.selected = subtype::sample_patches(out.groups, config.per_group, seed);

  std::vector<std::vector<subtype::PatchProfile>> chosen(slides.size());
  for (auto i : out.selected) chosen[profile_slide[i]].push_back(out.profiles[i]);
  std::vector<std::size_t> kept_slide;
  for (std::size_t s = 0; s < slides.size(); ++s) {
    if (chosen[s].empty()) {
      log::warn("slide " + slides[s].slide_id + " has no sampled patches; excluded");
      continue;
    }
    if (auto f = subtype::slide_feature(slides[s].slide_id, chosen[s], config.aggregation)) {
      out.slides.push_back(std::move(*f));
      kept_slide.push_back(s);
    }
  }
  if (static_cast<int>(out.slides.size()) < config.n_flat) {
    throw ContractViolation("n_flat " + std::to_string(config.n_flat) + " exceeds the " +
                            std::to_string(out.slides.size()) + " slides with cells");
  }
  out.report = subtype::cluster_slides(out.slides, config.pca_variance, config.n_flat);

  std::map<int, std::string> names;
  for (int c = 0; c < out.k; ++c) {
    const auto it = config.cluster_names.find(c);
    char buf[16];
    std::snprintf(buf, sizeof buf, "c%02d", c);
    names[c] = it == config.cluster_names.end() ? buf : it->second;
  }
  std::vector<int> ids(static_cast<std::size_t>(out.k));
  for (int c = 0; c < out.k; ++c) ids[static_cast<std::size_t>(c)] = c;
  out.merged = subtype::merge_clusters(ids, names);

  std::vector<int> flat_of_slide(slides.size(), -1);
  for (std::size_t j = 0; j < kept_slide.size(); ++j) flat_of_slide[kept_slide[j]] = out.report.flat_labels[j];
  std::vector<subtype::PatchProfile> table_patches;
  std::vector<int> table_subtypes;
  for (std::size_t i = 0; i < out.profiles.size(); ++i) {
    if (flat_of_slide[profile_slide[i]] < 0) continue;
    table_patches.push_back(out.profiles[i]);
    table_subtypes.push_back(flat_of_slide[profile_slide[i]]);
  }
  out.table = subtype::distribution_table(table_patches, table_subtypes, out.merged);
  return out;
}

void write_subtype_outputs(const SubtypeOutcome& outcome, const fs::path& dir) {
  fs::create_directories(dir);
  subtype::write_linkage_json(dir / "linkage.json", outcome.report);
  {
    std::ofstream svg(dir / "dendrogram.svg");
    svg << subtype::dendrogram_svg(outcome.report);
  }
  subtype::write_distribution_csv(dir / "distribution.csv", outcome.table);
  std::ofstream clusters(dir / "slide_clusters.csv");
  clusters << "slide_id,subtype\n";
  for (std::size_t i = 0; i < outcome.report.slide_ids.size(); ++i) {
    clusters << outcome.report.slide_ids[i] << ',' << outcome.report.flat_labels[i] << '\n';
  }
  std::ofstream features(dir / "slide_features.csv");
  features << "slide_id,n_patches";
  for (int c = 0; c < outcome.k; ++c) features << ",c" << c;
  features << '\n';
  char buf[32];
  for (const auto& s : outcome.slides) {
    features << s.slide_id << ',' << s.n_patches_used;
    for (double v : s.feature) {
      std::snprintf(buf, sizeof buf, ",%.9g", v);
      features << buf;
    }
    features << '\n';
  }
}

}  // namespace volta::app
