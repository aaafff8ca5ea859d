// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

#include "volta/subtype/profiles.hpp"

namespace volta::subtype {

/// One agglomeration step. Ids follow the usual linkage-matrix convention:
/// leaves are 0..n-1 and the cluster formed at step i gets id n + i.
struct LinkageStep {
  int a = 0;
  int b = 0;
  double height = 0.0;
  int size = 0;
};

struct PcaBasis {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // rows are principal axes
  std::vector<double> explained_variance_ratio;
};

/// PCA keeping the fewest components whose cumulative explained variance
/// reaches `variance`, capped at n_rows - 1 (at least one component).
PcaBasis fit_pca(const Eigen::MatrixXd& data, double variance);
Eigen::MatrixXd project(const PcaBasis& basis, const Eigen::MatrixXd& data);

/// Agglomerative clustering with Ward's criterion (Lance-Williams updates).
std::vector<LinkageStep> ward_linkage(const Eigen::MatrixXd& points);

/// Flat labels with exactly n_clusters groups, numbered by first appearance.
std::vector<int> cut_tree(std::span<const LinkageStep> linkage, int n_leaves, int n_clusters);

struct SubtypeReport {
  std::vector<std::string> slide_ids;
  std::vector<LinkageStep> linkage;
  std::vector<int> flat_labels;
  int n_flat = 0;
  PcaBasis pca;
};

/// PCA then Ward linkage on slide features; requires >= 2 slides and
/// n_flat <= slides.
SubtypeReport cluster_slides(std::span<const SlideProfile> slides, double pca_variance, int n_flat);

}  // namespace volta::subtype
