// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "support/metrics_oracle.hpp"
#include "support/temp_dir.hpp"
#include "volta/cluster/embedding.hpp"
#include "volta/cluster/kmeans.hpp"
#include "volta/cluster/metrics.hpp"
#include "volta/cluster/morphometrics.hpp"
#include "volta/common/error.hpp"
#include "volta/common/random.hpp"

using namespace volta;
using namespace volta::cluster;
using volta::testing::oracle_ami;
using volta::testing::oracle_ari;
using volta::testing::oracle_purity;

namespace {

// Restricted-growth strings: every set partition of n elements into at most
// `blocks` blocks exactly once.
std::vector<std::vector<int>> set_partitions(int n, int blocks) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(n), 0);
  std::function<void(int, int)> rec = [&](int i, int used) {
    if (i == n) {
      out.push_back(cur);
      return;
    }
    for (int b = 0; b <= std::min(used, blocks - 1); ++b) {
      cur[static_cast<std::size_t>(i)] = b;
      rec(i + 1, std::max(used, b + 1));
    }
  };
  rec(0, 0);
  return out;
}

}  // namespace

TEST_CASE("metric examples") {
  const std::vector<int> pred{0, 0, 1, 1};
  const std::vector<int> truth{0, 1, 1, 1};
  CHECK(purity(pred, truth) == 0.75);
  CHECK(adjusted_rand_index(pred, truth) == doctest::Approx(oracle_ari(pred, truth)).epsilon(1e-12));
  CHECK(adjusted_mutual_info(pred, truth) == doctest::Approx(oracle_ami(pred, truth)).epsilon(1e-12));

  const std::vector<int> same{2, 2, 0, 1, 1, 0};
  CHECK(adjusted_mutual_info(same, same) == doctest::Approx(1.0));
  CHECK(adjusted_rand_index(same, same) == doctest::Approx(1.0));
  CHECK(purity(same, same) == 1.0);

  const std::vector<int> one(6, 0);
  CHECK(adjusted_rand_index(one, same) == 0.0);
  CHECK(adjusted_rand_index(same, one) == 0.0);
  CHECK(adjusted_mutual_info(one, one) == 1.0);

  CHECK_THROWS_AS(adjusted_rand_index(pred, std::vector<int>{0, 1}), ContractViolation);
  CHECK_THROWS_AS(purity(std::vector<int>{}, std::vector<int>{}), ContractViolation);
}

TEST_CASE("metrics match the exact-arithmetic oracle on all partitions of 7 elements") {
  const auto parts = set_partitions(7, 3);
  CHECK(parts.size() == 1 + 63 + 301);
  double worst = 0.0;
  for (const auto& a : parts) {
    for (const auto& b : parts) {
      worst = std::max(worst, std::abs(adjusted_rand_index(a, b) - oracle_ari(a, b)));
      worst = std::max(worst, std::abs(adjusted_mutual_info(a, b) - oracle_ami(a, b)));
      worst = std::max(worst, std::abs(purity(a, b) - oracle_purity(a, b)));
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("metric symmetry, relabelling invariance and bounds") {
  Rng rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 5 + uniform_index(rng, 40);
    std::vector<int> a(n), b(n);
    for (auto& v : a) v = static_cast<int>(uniform_index(rng, 4));
    for (auto& v : b) v = static_cast<int>(uniform_index(rng, 5));
    CHECK(adjusted_rand_index(a, b) == doctest::Approx(adjusted_rand_index(b, a)).epsilon(1e-12));
    CHECK(adjusted_mutual_info(a, b) == doctest::Approx(adjusted_mutual_info(b, a)).epsilon(1e-10));
    std::vector<int> relabelled(n);
    const int perm[4] = {3, 0, 2, 1};
    for (std::size_t i = 0; i < n; ++i) relabelled[i] = perm[a[i]] * 7 + 11;
    CHECK(adjusted_rand_index(relabelled, b) == doctest::Approx(adjusted_rand_index(a, b)).epsilon(1e-12));
    CHECK(adjusted_mutual_info(relabelled, b) == doctest::Approx(adjusted_mutual_info(a, b)).epsilon(1e-12));
    CHECK(purity(relabelled, b) == purity(a, b));
    CHECK(adjusted_rand_index(a, b) <= 1.0 + 1e-12);
    CHECK(adjusted_mutual_info(a, b) <= 1.0 + 1e-12);
    const double p = purity(a, b);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    // Splitting a cluster never lowers purity.
    std::vector<int> refined(a);
    for (std::size_t i = 0; i < n; i += 2) refined[i] += 100;
    CHECK(purity(refined, b) >= p);
  }
}

TEST_CASE("evaluate_clustering report") {
  const std::vector<int> pred{0, 0, 1, 1, 2, 2};
  const std::vector<int> truth{1, 1, 0, 0, 0, 2};
  const auto r = evaluate_clustering(pred, truth);
  CHECK(r.n == 6);
  CHECK(r.k == 3);
  CHECK(r.purity == doctest::Approx(5.0 / 6.0));
  CHECK(r.ari == doctest::Approx(oracle_ari(truth, pred)).epsilon(1e-12));
  const std::vector<std::string> names{"b", "a", "b", "c"};
  CHECK(encode_labels(names) == std::vector<int>{1, 0, 1, 2});
}

namespace {

std::vector<float> blobs(std::size_t per_blob, std::uint64_t seed, std::vector<int>& truth) {
  Rng rng(seed);
  const float centres[3][2] = {{0.0F, 0.0F}, {10.0F, 0.0F}, {0.0F, 10.0F}};
  std::vector<float> data;
  for (int b = 0; b < 3; ++b) {
    for (std::size_t i = 0; i < per_blob; ++i) {
      data.push_back(centres[b][0] + static_cast<float>(normal(rng)));
      data.push_back(centres[b][1] + static_cast<float>(normal(rng)));
      truth.push_back(b);
    }
  }
  return data;
}

double inertia_of(const std::vector<float>& data, std::size_t dim, const std::vector<int>& labels, int k) {
  std::vector<double> sum(static_cast<std::size_t>(k) * dim, 0.0);
  std::vector<double> count(static_cast<std::size_t>(k), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    count[static_cast<std::size_t>(labels[i])] += 1;
    for (std::size_t d = 0; d < dim; ++d) sum[static_cast<std::size_t>(labels[i]) * dim + d] += data[i * dim + d];
  }
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = data[i * dim + d] - sum[c * dim + d] / count[c];
      total += diff * diff;
    }
  }
  return total;
}

}  // namespace

TEST_CASE("k-means recovers three separated blobs") {
  std::vector<int> truth;
  const auto data = blobs(10, 7, truth);
  KMeansOptions opt;
  opt.k = 3;
  const auto fit = kmeans(data, truth.size(), 2, opt);
  CHECK(adjusted_rand_index(fit.labels, truth) == 1.0);
  // The blob partition is optimal, so its inertia is the reported one.
  CHECK(fit.inertia == doctest::Approx(inertia_of(data, 2, truth, 3)).epsilon(1e-9));
  for (std::size_t i = 1; i < fit.inertia_history.size(); ++i) {
    CHECK(fit.inertia_history[i] <= fit.inertia_history[i - 1] + 1e-9);
  }
  SUBCASE("duplicated rows keep the partition structure") {
    std::vector<float> doubled(data);
    doubled.insert(doubled.end(), data.begin(), data.end());
    std::vector<int> truth2(truth);
    truth2.insert(truth2.end(), truth.begin(), truth.end());
    const auto fit2 = kmeans(doubled, truth2.size(), 2, opt);
    CHECK(adjusted_rand_index(fit2.labels, truth2) == 1.0);
    for (std::size_t i = 0; i < truth.size(); ++i) CHECK(fit2.labels[i] == fit2.labels[i + truth.size()]);
  }
  SUBCASE("fixed seed is deterministic and workers do not change the result") {
    auto opt4 = opt;
    opt4.workers = 4;
    const auto again = kmeans(data, truth.size(), 2, opt4);
    CHECK(again.labels == fit.labels);
    CHECK(again.inertia == fit.inertia);
  }
}

TEST_CASE("k-means edge cases") {
  const std::vector<float> pts{0, 0, 1, 0, 0, 1, 5, 5};
  KMeansOptions opt;
  opt.k = 4;
  const auto fit = kmeans(pts, 4, 2, opt);
  CHECK(fit.inertia == 0.0);
  std::vector<int> sorted(fit.labels);
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3});
  opt.k = 5;
  CHECK_THROWS_AS(kmeans(pts, 4, 2, opt), ContractViolation);
  opt.k = 1;
  const auto single = kmeans(pts, 4, 2, opt);
  CHECK(single.labels == std::vector<int>{0, 0, 0, 0});
  CHECK(single.inertia == doctest::Approx(inertia_of(pts, 2, single.labels, 1)));
}

TEST_CASE("assign_to_centroids picks the nearest, lowest index on ties") {
  const std::vector<float> pts{0.0F, 1.0F, 2.0F};
  const std::vector<double> centres{0.0, 2.0};
  CHECK(assign_to_centroids(pts, 3, 1, centres, 2) == std::vector<int>{0, 0, 1});
}

TEST_CASE("morphometrics") {
  SUBCASE("single cell") {
    const auto s = cluster_morphometrics(std::vector<int>{0}, std::vector<int>{10});
    REQUIRE(s.size() == 1);
    CHECK(s[0].mean == 10.0);
  }
  SUBCASE("constant areas per cluster") {
    const auto s = cluster_morphometrics(std::vector<int>{1, 0, 1, 0}, std::vector<int>{9, 5, 9, 5});
    REQUIRE(s.size() == 2);
    CHECK(s[0].cluster == 0);
    CHECK(s[0].mean == 5.0);
    CHECK(s[1].mean == 9.0);
  }
  SUBCASE("quartiles of seven cells") {
    const std::vector<int> areas{40, 12, 33, 7, 25, 18, 50};
    const auto s = cluster_morphometrics(std::vector<int>(7, 2), areas);
    REQUIRE(s.size() == 1);
    std::vector<int> sorted(areas);
    std::sort(sorted.begin(), sorted.end());  // 7 12 18 25 33 40 50
    // Position q * (n - 1): q1 at 1.5, median at 3, q3 at 4.5.
    CHECK(s[0].q1 == doctest::Approx((sorted[1] + sorted[2]) / 2.0));
    CHECK(s[0].median == sorted[3]);
    CHECK(s[0].q3 == doctest::Approx((sorted[4] + sorted[5]) / 2.0));
    CHECK(s[0].min == 7);
    CHECK(s[0].max == 50);
    CHECK(s[0].count == 7);
  }
}

TEST_CASE("embedding matrix persistence and validation") {
  volta::testing::TempDir dir;
  EmbeddingMatrix m;
  m.dim = 3;
  m.values = {1, 2, 3, 4, 5, 6};
  m.cell_ids = {"a:1", "a:2"};
  m.source = EmbeddingSource::backbone;
  m.save(dir.path());
  const auto back = EmbeddingMatrix::load(dir.path());
  CHECK(back.values == m.values);
  CHECK(back.cell_ids == m.cell_ids);
  CHECK(back.source == EmbeddingSource::backbone);
  m.cell_ids = {"a:1", "a:1"};
  CHECK_THROWS_AS(m.validate(), ContractViolation);
  m.cell_ids = {"a:1", "a:2"};
  m.values[2] = std::nanf("");
  CHECK_THROWS_AS(m.validate(), ContractViolation);
}
