// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace volta::testing {

using Rows = std::vector<std::vector<double>>;

/// Mean over i of -log(exp(q_i . c_i / tau) / sum_j exp(q_i . c_j / tau)),
/// candidates c = positives followed by extra negatives. Plain loops.
inline double scalar_info_nce(const Rows& q, const Rows& positives, const Rows& negatives, double tau) {
  Rows cand = positives;
  cand.insert(cand.end(), negatives.begin(), negatives.end());
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<double> logits;
    for (const auto& c : cand) {
      double dot = 0.0;
      for (std::size_t d = 0; d < c.size(); ++d) dot += q[i][d] * c[d];
      logits.push_back(dot / tau);
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - top);
    total += top + std::log(sum) - logits[i];
  }
  return total / static_cast<double>(q.size());
}

inline std::vector<double> unit(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace volta::testing
