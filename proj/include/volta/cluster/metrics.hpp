// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace volta::cluster {

/// Counts n_ij of rows labelled (a_ids[i], b_ids[j]); ids are sorted.
struct Contingency {
  std::vector<int> a_ids;
  std::vector<int> b_ids;
  std::vector<std::vector<std::int64_t>> counts;
  std::int64_t n = 0;

  [[nodiscard]] std::vector<std::int64_t> row_sums() const;
  [[nodiscard]] std::vector<std::int64_t> col_sums() const;
};

Contingency contingency(std::span<const int> a, std::span<const int> b);

/// Adjusted mutual information, max(H(a), H(b)) normalisation, expected MI
/// under the hypergeometric permutation model.
double adjusted_mutual_info(std::span<const int> a, std::span<const int> b);

/// Hubert-Arabie adjusted Rand index.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

/// (1/n) * sum over predicted clusters of the largest true-class overlap.
double purity(std::span<const int> predicted, std::span<const int> truth);

struct MetricsReport {
  double ami = 0.0;
  double ari = 0.0;
  double purity = 0.0;
  std::size_t n = 0;
  std::size_t k = 0;  // distinct predicted clusters
  Contingency table;  // rows: predicted clusters, columns: classes
};

MetricsReport evaluate_clustering(std::span<const int> predicted, std::span<const int> truth);

/// Maps string labels to dense ids in order of the sorted distinct labels.
std::vector<int> encode_labels(std::span<const std::string> labels);

}  // namespace volta::cluster
