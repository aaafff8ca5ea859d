// SPDX-License-Identifier: Apache-2.0
#include "volta/subtype/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "volta/common/error.hpp"

namespace volta::subtype {

PcaBasis fit_pca(const Eigen::MatrixXd& data, double variance) {
  require(data.rows() >= 2, "PCA needs at least two rows");
  require(variance > 0.0 && variance <= 1.0, "PCA variance fraction must be in (0, 1]");
  PcaBasis basis;
  basis.mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centred = data.rowwise() - basis.mean.transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
  const Eigen::VectorXd s2 = svd.singularValues().array().square();
  const double total = s2.sum();
  const auto cap = static_cast<Eigen::Index>(std::min<Eigen::Index>(data.rows() - 1, s2.size()));
  Eigen::Index keep = 1;
  if (total > 0.0) {
    double acc = 0.0;
    for (keep = 0; keep < cap;) {
      acc += s2[keep] / total;
      ++keep;
      if (acc >= variance - 1e-12) break;
    }
  }
  keep = std::max<Eigen::Index>(1, std::min(keep, cap));
  basis.components = svd.matrixV().leftCols(keep).transpose();
  for (Eigen::Index i = 0; i < keep; ++i) {
    basis.explained_variance_ratio.push_back(total > 0.0 ? s2[i] / total : 0.0);
  }
  return basis;
}

Eigen::MatrixXd project(const PcaBasis& basis, const Eigen::MatrixXd& data) {
  return (data.rowwise() - basis.mean.transpose()) * basis.components.transpose();
}

std::vector<LinkageStep> ward_linkage(const Eigen::MatrixXd& points) {
  const auto n = static_cast<int>(points.rows());
  require(n >= 1, "linkage needs at least one point");
  // Squared Ward distances between active clusters, updated with
  // Lance-Williams; merge heights are their square roots.
  std::vector<std::vector<double>> d2(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double v = (points.row(i) - points.row(j)).squaredNorm();
      d2[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = v;
      d2[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = v;
    }
  }
  std::vector<int> id(static_cast<std::size_t>(n));
  std::vector<int> size(static_cast<std::size_t>(n), 1);
  std::vector<bool> active(static_cast<std::size_t>(n), true);
  std::iota(id.begin(), id.end(), 0);

  std::vector<LinkageStep> steps;
  for (int step = 0; step < n - 1; ++step) {
    double best = std::numeric_limits<double>::infinity();
    int bi = -1, bj = -1;
    for (int i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (int j = i + 1; j < n; ++j) {
        if (!active[static_cast<std::size_t>(j)]) continue;
        const double v = d2[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        if (v < best) {
          best = v;
          bi = i;
          bj = j;
        }
      }
    }
    const auto ui = static_cast<std::size_t>(bi);
    const auto uj = static_cast<std::size_t>(bj);
    const int ni = size[ui];
    const int nj = size[uj];
    steps.push_back({std::min(id[ui], id[uj]), std::max(id[ui], id[uj]), std::sqrt(std::max(best, 0.0)), ni + nj});
    for (int k = 0; k < n; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      if (!active[uk] || k == bi || k == bj) continue;
      const double nk = size[uk];
      const double t = ni + nj + nk;
      const double v = ((ni + nk) * d2[ui][uk] + (nj + nk) * d2[uj][uk] - nk * best) / t;
      d2[ui][uk] = v;
      d2[uk][ui] = v;
    }
    active[uj] = false;
    size[ui] = ni + nj;
    id[ui] = n + step;
  }
  return steps;
}

std::vector<int> cut_tree(std::span<const LinkageStep> linkage, int n_leaves, int n_clusters) {
  require(n_clusters >= 1 && n_clusters <= n_leaves, "flat cluster count must be in [1, n]");
  require(linkage.size() == static_cast<std::size_t>(n_leaves - 1), "linkage does not match leaf count");
  std::vector<int> parent(static_cast<std::size_t>(2 * n_leaves - 1));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
    return x;
  };
  for (int s = 0; s < n_leaves - n_clusters; ++s) {
    const auto& step = linkage[static_cast<std::size_t>(s)];
    parent[static_cast<std::size_t>(find(step.a))] = n_leaves + s;
    parent[static_cast<std::size_t>(find(step.b))] = n_leaves + s;
  }
  std::vector<int> labels(static_cast<std::size_t>(n_leaves), -1);
  std::vector<int> root_label(parent.size(), -1);
  int next = 0;
  for (int i = 0; i < n_leaves; ++i) {
    const auto root = static_cast<std::size_t>(find(i));
    if (root_label[root] < 0) root_label[root] = next++;
    labels[static_cast<std::size_t>(i)] = root_label[root];
  }
  return labels;
}

SubtypeReport cluster_slides(std::span<const SlideProfile> slides, double pca_variance, int n_flat) {
  require(slides.size() >= 2, "slide clustering needs at least two slides");
  require(n_flat >= 1, "n_flat must be >= 1");
  require(static_cast<std::size_t>(n_flat) <= slides.size(), "n_flat exceeds the number of slides");
  const auto dim = static_cast<Eigen::Index>(slides.front().feature.size());
  Eigen::MatrixXd features(static_cast<Eigen::Index>(slides.size()), dim);
  SubtypeReport report;
  for (std::size_t i = 0; i < slides.size(); ++i) {
    require(static_cast<Eigen::Index>(slides[i].feature.size()) == dim, "slide features differ in length");
    for (Eigen::Index j = 0; j < dim; ++j) features(static_cast<Eigen::Index>(i), j) = slides[i].feature[static_cast<std::size_t>(j)];
    report.slide_ids.push_back(slides[i].slide_id);
  }
  report.pca = fit_pca(features, pca_variance);
  report.linkage = ward_linkage(project(report.pca, features));
  report.n_flat = n_flat;
  report.flat_labels = cut_tree(report.linkage, static_cast<int>(slides.size()), n_flat);
  return report;
}

}  // namespace volta::subtype
