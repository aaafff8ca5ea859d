// SPDX-License-Identifier: Apache-2.0
#include "volta/cluster/morphometrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "volta/common/error.hpp"

namespace volta::cluster {

double quantile_sorted(std::span<const double> sorted, double q) {
  require(!sorted.empty(), "quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<AreaSummary> cluster_morphometrics(std::span<const int> labels, std::span<const int> areas) {
  require(labels.size() == areas.size(), "labels and areas differ in length");
  std::map<int, std::vector<double>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(areas[i]);
  std::vector<AreaSummary> out;
  for (auto& [cluster, values] : groups) {
    std::sort(values.begin(), values.end());
    AreaSummary s;
    s.cluster = cluster;
    s.count = values.size();
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    s.min = values.front();
    s.max = values.back();
    s.q1 = quantile_sorted(values, 0.25);
    s.median = quantile_sorted(values, 0.5);
    s.q3 = quantile_sorted(values, 0.75);
    out.push_back(s);
  }
  return out;
}

}  // namespace volta::cluster
