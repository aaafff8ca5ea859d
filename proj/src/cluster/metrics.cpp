// SPDX-License-Identifier: Apache-2.0
#include "volta/cluster/metrics.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <map>

#include "volta/common/error.hpp"

namespace volta::cluster {

namespace {

std::vector<int> sorted_unique(std::span<const int> v) {
  std::vector<int> ids(v.begin(), v.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

void check_pair(std::span<const int> a, std::span<const int> b) {
  require(a.size() == b.size(), "label vectors differ in length");
  require(!a.empty(), "label vectors must be non-empty");
}

double comb2(std::int64_t x) { return 0.5 * static_cast<double>(x) * static_cast<double>(x - 1); }

double entropy(const std::vector<std::int64_t>& sums, std::int64_t n) {
  double h = 0.0;
  for (auto s : sums) {
    if (s == 0) continue;
    const double p = static_cast<double>(s) / static_cast<double>(n);
    h -= p * std::log(p);
  }
  return h;
}

// E[MI] under the hypergeometric model for fixed marginals.
double expected_mutual_info(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b,
                            std::int64_t n) {
  const double N = static_cast<double>(n);
  const double lg_n = std::lgamma(N + 1.0);
  double emi = 0.0;
  for (auto ai : a) {
    for (auto bj : b) {
      const std::int64_t lo = std::max<std::int64_t>(1, ai + bj - n);
      const std::int64_t hi = std::min(ai, bj);
      const double fixed = std::lgamma(ai + 1.0) + std::lgamma(bj + 1.0) + std::lgamma(N - ai + 1.0) +
                           std::lgamma(N - bj + 1.0) - lg_n;
      for (std::int64_t nij = lo; nij <= hi; ++nij) {
        const double x = static_cast<double>(nij);
        const double term = (x / N) * std::log(N * x / (static_cast<double>(ai) * static_cast<double>(bj)));
        const double log_p = fixed - std::lgamma(x + 1.0) - std::lgamma(ai - x + 1.0) -
                             std::lgamma(bj - x + 1.0) - std::lgamma(N - ai - bj + x + 1.0);
        emi += term * std::exp(log_p);
      }
    }
  }
  return emi;
}

}  // namespace

std::vector<std::int64_t> Contingency::row_sums() const {
  std::vector<std::int64_t> s(a_ids.size(), 0);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    for (auto v : counts[i]) s[i] += v;
  }
  return s;
}

std::vector<std::int64_t> Contingency::col_sums() const {
  std::vector<std::int64_t> s(b_ids.size(), 0);
  for (const auto& row : counts) {
    for (std::size_t j = 0; j < row.size(); ++j) s[j] += row[j];
  }
  return s;
}

Contingency contingency(std::span<const int> a, std::span<const int> b) {
  check_pair(a, b);
  Contingency c;
  c.a_ids = sorted_unique(a);
  c.b_ids = sorted_unique(b);
  c.n = static_cast<std::int64_t>(a.size());
  c.counts.assign(c.a_ids.size(), std::vector<std::int64_t>(c.b_ids.size(), 0));
  auto index_of = [](const std::vector<int>& ids, int v) {
    return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), v) - ids.begin());
  };
  for (std::size_t i = 0; i < a.size(); ++i) ++c.counts[index_of(c.a_ids, a[i])][index_of(c.b_ids, b[i])];
  return c;
}

double adjusted_mutual_info(std::span<const int> a, std::span<const int> b) {
  const Contingency c = contingency(a, b);
  if (c.a_ids.size() == 1 && c.b_ids.size() == 1) return 1.0;
  const auto ra = c.row_sums();
  const auto cb = c.col_sums();
  const double N = static_cast<double>(c.n);
  double mi = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    for (std::size_t j = 0; j < cb.size(); ++j) {
      const auto nij = c.counts[i][j];
      if (nij == 0) continue;
      const double x = static_cast<double>(nij);
      mi += (x / N) * std::log(N * x / (static_cast<double>(ra[i]) * static_cast<double>(cb[j])));
    }
  }
  const double emi = expected_mutual_info(ra, cb, c.n);
  const double normalizer = std::max(entropy(ra, c.n), entropy(cb, c.n));
  double denominator = normalizer - emi;
  // Guard a vanishing denominator while keeping its sign.
  denominator = denominator < 0 ? std::min(denominator, -DBL_EPSILON) : std::max(denominator, DBL_EPSILON);
  return (mi - emi) / denominator;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  const Contingency c = contingency(a, b);
  double sum_cells = 0.0;
  for (const auto& row : c.counts) {
    for (auto v : row) sum_cells += comb2(v);
  }
  double sum_a = 0.0, sum_b = 0.0;
  for (auto s : c.row_sums()) sum_a += comb2(s);
  for (auto s : c.col_sums()) sum_b += comb2(s);
  const double total = comb2(c.n);
  const double expected = total > 0 ? sum_a * sum_b / total : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions trivial and identical
  return (sum_cells - expected) / (max_index - expected);
}

double purity(std::span<const int> predicted, std::span<const int> truth) {
  const Contingency c = contingency(predicted, truth);
  std::int64_t hit = 0;
  for (const auto& row : c.counts) hit += *std::max_element(row.begin(), row.end());
  return static_cast<double>(hit) / static_cast<double>(c.n);
}

MetricsReport evaluate_clustering(std::span<const int> predicted, std::span<const int> truth) {
  MetricsReport r;
  r.ami = adjusted_mutual_info(truth, predicted);
  r.ari = adjusted_rand_index(truth, predicted);
  r.purity = purity(predicted, truth);
  r.table = contingency(predicted, truth);
  r.n = predicted.size();
  r.k = r.table.a_ids.size();
  return r;
}

std::vector<int> encode_labels(std::span<const std::string> labels) {
  std::map<std::string, int> ids;
  for (const auto& l : labels) ids.emplace(l, 0);
  int next = 0;
  for (auto& [_, id] : ids) id = next++;
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(ids.at(l));
  return out;
}

}  // namespace volta::cluster
