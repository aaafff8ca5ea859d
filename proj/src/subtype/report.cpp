// SPDX-License-Identifier: Apache-2.0
#include "volta/subtype/report.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "volta/common/error.hpp"

namespace volta::subtype {

DistributionTable distribution_table(std::span<const PatchProfile> patches,
                                     std::span<const int> patch_subtype, const MergedClusters& merged) {
  require(patches.size() == patch_subtype.size(), "one subtype per patch required");
  DistributionTable table;
  table.columns = merged.names;
  const std::size_t m = merged.names.size();
  std::map<int, std::vector<std::vector<double>>> rows;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (patches[i].total == 0) continue;
    const auto counts = merge_counts(patches[i].counts, merged);
    std::vector<double> share(m);
    for (std::size_t j = 0; j < m; ++j) {
      share[j] = static_cast<double>(counts[j]) / static_cast<double>(patches[i].total);
    }
    rows[patch_subtype[i]].push_back(std::move(share));
  }
  for (const auto& [subtype, shares] : rows) {
    std::vector<double> mean(m, 0.0), sd(m, 0.0);
    const double n = static_cast<double>(shares.size());
    for (const auto& s : shares) {
      for (std::size_t j = 0; j < m; ++j) mean[j] += s[j] / n;
    }
    for (const auto& s : shares) {
      for (std::size_t j = 0; j < m; ++j) sd[j] += (s[j] - mean[j]) * (s[j] - mean[j]) / n;
    }
    for (auto& v : sd) v = std::sqrt(v);
    table.subtypes.push_back(subtype);
    table.mean.push_back(std::move(mean));
    table.sd.push_back(std::move(sd));
  }
  return table;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_distribution_csv(const std::filesystem::path& path, const DistributionTable& table) {
  auto out = open_out(path);
  out << "subtype";
  for (const auto& c : table.columns) out << ',' << csv_field(c);
  out << '\n';
  char buf[64];
  for (std::size_t r = 0; r < table.subtypes.size(); ++r) {
    out << table.subtypes[r];
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.2f%% \xC2\xB1 %.2f%%", 100.0 * table.mean[r][j], 100.0 * table.sd[r][j]);
      out << ',' << buf;
    }
    out << '\n';
  }
}

void write_linkage_json(const std::filesystem::path& path, const SubtypeReport& report) {
  nlohmann::json j;
  j["slides"] = report.slide_ids;
  j["n_flat"] = report.n_flat;
  j["flat_labels"] = report.flat_labels;
  auto& steps = j["linkage"] = nlohmann::json::array();
  for (const auto& s : report.linkage) {
    steps.push_back({{"a", s.a}, {"b", s.b}, {"height", s.height}, {"size", s.size}});
  }
  j["pca"] = {{"components", report.pca.components.rows()},
              {"explained_variance_ratio", report.pca.explained_variance_ratio}};
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

std::string dendrogram_svg(const SubtypeReport& report) {
  const int n = static_cast<int>(report.slide_ids.size());
  // Leaf order: depth-first walk from the root so merged subtrees stay adjacent.
  std::vector<std::pair<int, int>> children(report.linkage.size());
  for (std::size_t i = 0; i < report.linkage.size(); ++i) children[i] = {report.linkage[i].a, report.linkage[i].b};
  std::vector<int> order;
  std::vector<int> stack;
  if (n == 1) order.push_back(0);
  else stack.push_back(2 * n - 2);
  while (!stack.empty()) {
    const int node = stack.back();
    stack.pop_back();
    if (node < n) {
      order.push_back(node);
      continue;
    }
    const auto& [a, b] = children[static_cast<std::size_t>(node - n)];
    stack.push_back(b);
    stack.push_back(a);
  }
  const double spacing = 40.0, margin = 40.0, plot_h = 300.0, label_h = 120.0;
  const double width = 2 * margin + spacing * std::max(n - 1, 1);
  const double top = report.linkage.empty() ? 1.0 : std::max(report.linkage.back().height, 1e-12);
  std::vector<double> x(static_cast<std::size_t>(2 * n - 1)), y(x.size());
  for (int i = 0; i < n; ++i) {
    x[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = margin + spacing * i;
    y[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = margin + plot_h;
  }
  std::ostringstream svg;
  svg.setf(std::ios::fixed);
  svg.precision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << (2 * margin + plot_h + label_h) << "\">\n";
  svg << "<g stroke=\"black\" fill=\"none\" stroke-width=\"1.5\">\n";
  for (std::size_t s = 0; s < report.linkage.size(); ++s) {
    const auto& st = report.linkage[s];
    const auto id = static_cast<std::size_t>(n) + s;
    const double h = margin + plot_h * (1.0 - st.height / top);
    const auto a = static_cast<std::size_t>(st.a);
    const auto b = static_cast<std::size_t>(st.b);
    svg << "<polyline points=\"" << x[a] << ',' << y[a] << ' ' << x[a] << ',' << h << ' ' << x[b] << ',' << h
        << ' ' << x[b] << ',' << y[b] << "\"/>\n";
    x[id] = 0.5 * (x[a] + x[b]);
    y[id] = h;
  }
  svg << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i < n; ++i) {
    const auto leaf = static_cast<std::size_t>(order[static_cast<std::size_t>(i)]);
    std::string name = report.slide_ids[leaf];
    std::string escaped;
    for (char c : name) {
      switch (c) {
        case '<': escaped += "&lt;"; break;
        case '>': escaped += "&gt;"; break;
        case '&': escaped += "&amp;"; break;
        case '"': escaped += "&quot;"; break;
        default: escaped += c;
      }
    }
    const int flat = leaf < report.flat_labels.size() ? report.flat_labels[leaf] : 0;
    svg << "<text transform=\"translate(" << x[leaf] << ',' << (margin + plot_h + 8)
        << ") rotate(90)\">" << escaped << " [" << flat << "]</text>\n";
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

}  // namespace volta::subtype
