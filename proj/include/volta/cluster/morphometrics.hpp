// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace volta::cluster {

struct AreaSummary {
  int cluster = 0;
  std::size_t count = 0;
  double mean = 0.0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

/// Linear-interpolation quantile of sorted values (q in [0, 1]).
double quantile_sorted(std::span<const double> sorted, double q);

/// Cell-area summary per cluster id present in `labels`, ascending by id.
/// areas[i] is the mask pixel count of cell i.
std::vector<AreaSummary> cluster_morphometrics(std::span<const int> labels,
                                               std::span<const int> areas);

}  // namespace volta::cluster
