// SPDX-License-Identifier: Apache-2.0
#include "volta/cluster/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "volta/common/error.hpp"
#include "volta/common/parallel.hpp"
#include "volta/common/random.hpp"

namespace volta::cluster {
namespace {

double squared_distance(const float* x, const double* c, std::size_t dim) {
  double s = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double d = static_cast<double>(x[j]) - c[j];
    s += d * d;
  }
  return s;
}

struct Run {
  std::vector<int> labels;
  std::vector<double> centroids;
  std::vector<double> history;
  double inertia = std::numeric_limits<double>::infinity();
};

// k-means++: each new centre is drawn with probability proportional to the
// squared distance to the nearest centre chosen so far.
std::vector<double> seed_centroids(const float* data, std::size_t n, std::size_t dim, int k, Rng& rng) {
  std::vector<double> centroids(static_cast<std::size_t>(k) * dim);
  auto set_centre = [&](int c, std::size_t row) {
    std::copy_n(data + row * dim, dim, centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
  };
  set_centre(0, uniform_index(rng, n));
  std::vector<double> closest(n);
  for (std::size_t i = 0; i < n; ++i) closest[i] = squared_distance(data + i * dim, centroids.data(), dim);
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(closest.begin(), closest.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += closest[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = uniform_index(rng, n);
    }
    set_centre(c, pick);
    const double* centre = centroids.data() + static_cast<std::size_t>(c) * dim;
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], squared_distance(data + i * dim, centre, dim));
    }
  }
  return centroids;
}

double assign(const float* data, std::size_t n, std::size_t dim, const std::vector<double>& centroids,
              int k, std::vector<int>& labels, std::vector<double>& dist) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_c = 0;
    for (int c = 0; c < k; ++c) {
      const double d = squared_distance(data + i * dim, centroids.data() + static_cast<std::size_t>(c) * dim, dim);
      if (d < best) {
        best = d;
        best_c = c;
      }
    }
    labels[i] = best_c;
    dist[i] = best;
    inertia += best;
  }
  return inertia;
}

Run lloyd(const float* data, std::size_t n, std::size_t dim, int k, int max_iter, double shift_tol,
          Rng& rng) {
  Run run;
  run.centroids = seed_centroids(data, n, dim, k, rng);
  run.labels.assign(n, -1);
  std::vector<int> labels(n, 0);
  std::vector<double> dist(n, 0.0);
  std::vector<double> next(run.centroids.size());
  std::vector<std::size_t> counts(static_cast<std::size_t>(k));
  for (int iter = 0; iter < max_iter; ++iter) {
    const double inertia = assign(data, n, dim, run.centroids, k, labels, dist);
    run.history.push_back(inertia);
    run.inertia = inertia;
    const bool stable = labels == run.labels;
    run.labels = labels;
    if (stable) break;

    std::fill(next.begin(), next.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(labels[i]);
      ++counts[c];
      for (std::size_t j = 0; j < dim; ++j) next[c * dim + j] += data[i * dim + j];
    }
    for (int c = 0; c < k; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      if (counts[cu] == 0) {
        // Empty cluster: re-seed on the point farthest from its centre.
        const auto far = static_cast<std::size_t>(
            std::distance(dist.begin(), std::max_element(dist.begin(), dist.end())));
        std::copy_n(data + far * dim, dim, next.begin() + static_cast<std::ptrdiff_t>(cu * dim));
        dist[far] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) next[cu * dim + j] /= static_cast<double>(counts[cu]);
    }
    double shift = 0.0;
    for (std::size_t j = 0; j < next.size(); ++j) {
      const double d = next[j] - run.centroids[j];
      shift += d * d;
    }
    run.centroids.swap(next);
    if (shift <= shift_tol) {
      run.inertia = assign(data, n, dim, run.centroids, k, run.labels, dist);
      run.history.push_back(run.inertia);
      break;
    }
  }
  return run;
}

}  // namespace

std::vector<int> assign_to_centroids(std::span<const float> data, std::size_t n, std::size_t dim,
                                     std::span<const double> centroids, int k) {
  require(data.size() == n * dim, "assign_to_centroids: data size mismatch");
  require(centroids.size() == static_cast<std::size_t>(k) * dim, "assign_to_centroids: centroid size mismatch");
  std::vector<int> labels(n);
  std::vector<double> dist(n);
  assign(data.data(), n, dim, {centroids.begin(), centroids.end()}, k, labels, dist);
  return labels;
}

ClusterAssignment kmeans(std::span<const float> data, std::size_t n, std::size_t dim,
                         const KMeansOptions& options) {
  require(data.size() == n * dim, "kmeans: data size does not match n x dim");
  require(options.k >= 1, "kmeans: k must be >= 1");
  require(static_cast<std::size_t>(options.k) <= n, "kmeans: k must not exceed the number of points");
  require(options.n_init >= 1 && options.max_iter >= 1, "kmeans: n_init and max_iter must be >= 1");

  // Tolerance scaled by the mean per-feature variance, as in common practice.
  double mean_var = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = data[i * dim + j];
      s += v;
      s2 += v * v;
    }
    const double m = s / static_cast<double>(n);
    mean_var += std::max(0.0, s2 / static_cast<double>(n) - m * m);
  }
  mean_var /= static_cast<double>(std::max<std::size_t>(dim, 1));
  const double shift_tol = options.tol * mean_var;

  std::vector<Run> runs(static_cast<std::size_t>(options.n_init));
  parallel_for(runs.size(), options.workers, [&](std::size_t r) {
    Rng rng(derive_seed(options.seed, {r}));
    runs[r] = lloyd(data.data(), n, dim, options.k, options.max_iter, shift_tol, rng);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].inertia < runs[best].inertia) best = r;
  }
  ClusterAssignment out;
  out.k = options.k;
  out.seed = options.seed;
  out.labels = std::move(runs[best].labels);
  out.inertia = runs[best].inertia;
  out.centroids = std::move(runs[best].centroids);
  out.inertia_history = std::move(runs[best].history);
  return out;
}

}  // namespace volta::cluster
