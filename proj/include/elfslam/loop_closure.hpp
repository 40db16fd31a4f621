#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "elfslam/elf_model.hpp"

namespace elfslam::loop {

using ElfList = std::vector<model::Elf>;

/// Symmetric (N-1) x (N-1) matrix of echo sequence similarities.
using EssMatrix = Eigen::MatrixXd;
using BinaryMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct CurationConfig {
  double ess_threshold = 0.4;
  int slice_width = 16;
  int min_separation = 20;
  double dbscan_eps = 3.0;
  int dbscan_min_pts = 4;
  int ransac_iters = 200;
  double ransac_inlier_tol = 1.5;
  int ransac_min_inliers = 6;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Loop-closure candidates (i, j) with i < j, sorted.
using CandidateSet = std::vector<std::pair<std::size_t, std::size_t>>;

/// Mean of all pairwise cosine similarities between the two feature sets.
double ess(std::span<const model::Elf> a, std::span<const model::Elf> b);

EssMatrix build_ess_matrix(std::span<const ElfList> per_step);

BinaryMatrix binarize(const EssMatrix& m, const CurationConfig& cfg);

struct Cell {
  int row = 0;
  int col = 0;
};

/// DBSCAN over cell coordinates (Euclidean). Labels: cluster id >= 0, or -1 for noise.
/// Neighbourhoods include the point itself.
std::vector<int> dbscan(std::span<const Cell> cells, double eps, int min_pts);

struct LineFit {
  // Line a*x + b*y + c = 0 with a^2 + b^2 = 1, over (col, row).
  double a = 0.0, b = 0.0, c = 0.0;
  std::vector<std::size_t> inliers;
};

/// RANSAC line through two random points; keeps the hypothesis with most
/// inliers within `tol` (first found wins ties).
LineFit ransac_line(std::span<const Cell> cells, int iters, double tol, std::uint64_t seed);

/// Slicing, density clustering, per-cluster robust line fit, symmetry filter.
CandidateSet curate(const BinaryMatrix& bin, const CurationConfig& cfg);

/// Every off-band true cell of the binarized matrix as a candidate, no curation.
CandidateSet uncurated(const BinaryMatrix& bin);

}  // namespace elfslam::loop
