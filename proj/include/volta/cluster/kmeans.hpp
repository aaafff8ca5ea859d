// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace volta::cluster {

struct KMeansOptions {
  int k = 8;
  std::uint64_t seed = 0;
  int n_init = 10;
  int max_iter = 300;
  double tol = 1e-4;  // centre shift tolerance relative to the mean feature variance
  int workers = 1;
};

struct ClusterAssignment {
  std::vector<int> labels;  // in [0, k)
  int k = 0;
  double inertia = 0.0;  // sum of squared distances to the assigned centroid
  std::uint64_t seed = 0;
  std::vector<double> centroids;       // k x dim
  std::vector<double> inertia_history; // per Lloyd iteration of the kept restart
};

/// Lloyd's algorithm with k-means++ seeding; keeps the restart with the lowest
/// inertia. `data` is n x dim row-major. Requires 1 <= k <= n.
ClusterAssignment kmeans(std::span<const float> data, std::size_t n, std::size_t dim,
                         const KMeansOptions& options);

/// Labels of each row under fixed centroids (nearest, lowest index on ties).
std::vector<int> assign_to_centroids(std::span<const float> data, std::size_t n, std::size_t dim,
                                     std::span<const double> centroids, int k);

}  // namespace volta::cluster
