#include "elfslam/loop_closure.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include "elfslam/errors.hpp"
#include "elfslam/rng.hpp"

namespace elfslam::loop {

void CurationConfig::validate() const {
  require(ess_threshold > 0.0 && ess_threshold < 1.0, ErrorKind::Config,
          "curation.ess_threshold must lie in (0, 1)");
  require(slice_width > 0 && min_separation >= 0 && dbscan_eps > 0.0 && dbscan_min_pts > 0 &&
              ransac_iters > 0 && ransac_inlier_tol > 0.0 && ransac_min_inliers >= 2,
          ErrorKind::Config, "curation widths and counts must be positive");
}

double ess(std::span<const model::Elf> a, std::span<const model::Elf> b) {
  require(!a.empty() && !b.empty(), ErrorKind::Argument, "ess: empty feature list");
  // Mean of cosines = dot of the sums of unit vectors / (Ka * Kb).
  Eigen::VectorXd sa = Eigen::VectorXd::Zero(a.front().size());
  Eigen::VectorXd sb = Eigen::VectorXd::Zero(b.front().size());
  for (const auto& v : a) sa += v / v.norm();
  for (const auto& v : b) {
    require(v.size() == sa.size(), ErrorKind::Shape, "ess: ELF dimensions differ");
    sb += v / v.norm();
  }
  const double m = sa.dot(sb) / double(a.size() * b.size());
  return std::clamp(m, -1.0, 1.0);
}

EssMatrix build_ess_matrix(std::span<const ElfList> per_step) {
  const auto n = static_cast<Eigen::Index>(per_step.size());
  std::vector<Eigen::VectorXd> means(per_step.size());
  for (std::size_t i = 0; i < per_step.size(); ++i) {
    require(!per_step[i].empty(), ErrorKind::Argument,
            "build_ess_matrix: step " + std::to_string(i) + " has no ELFs");
    means[i] = Eigen::VectorXd::Zero(per_step[i].front().size());
    for (const auto& v : per_step[i]) means[i] += v / v.norm();
    means[i] /= double(per_step[i].size());
  }
  EssMatrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double v = std::clamp(means[std::size_t(i)].dot(means[std::size_t(j)]), -1.0, 1.0);
      m(i, j) = v;
      m(j, i) = v;
    }
  }
  return m;
}

BinaryMatrix binarize(const EssMatrix& m, const CurationConfig& cfg) {
  BinaryMatrix b(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      b(i, j) = m(i, j) >= cfg.ess_threshold && std::abs(i - j) >= cfg.min_separation;
  return b;
}

std::vector<int> dbscan(std::span<const Cell> cells, double eps, int min_pts) {
  constexpr int kUnvisited = -2, kNoise = -1;
  const std::size_t n = cells.size();
  std::vector<int> label(n, kUnvisited);
  const double eps2 = eps * eps;
  auto neighbours = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j) {
      const double dr = cells[i].row - cells[j].row, dc = cells[i].col - cells[j].col;
      if (dr * dr + dc * dc <= eps2) out.push_back(j);
    }
    return out;
  };
  int cluster = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    auto nb = neighbours(i);
    if (int(nb.size()) < min_pts) {
      label[i] = kNoise;
      continue;
    }
    label[i] = cluster;
    std::deque<std::size_t> queue(nb.begin(), nb.end());
    while (!queue.empty()) {
      const std::size_t q = queue.front();
      queue.pop_front();
      if (label[q] == kNoise) label[q] = cluster;  // border point
      if (label[q] != kUnvisited) continue;
      label[q] = cluster;
      auto qn = neighbours(q);
      if (int(qn.size()) >= min_pts) queue.insert(queue.end(), qn.begin(), qn.end());
    }
    ++cluster;
  }
  return label;
}

LineFit ransac_line(std::span<const Cell> cells, int iters, double tol, std::uint64_t seed) {
  LineFit best;
  if (cells.size() < 2) return best;
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  for (int it = 0; it < iters; ++it) {
    const std::size_t p = pick(rng);
    std::size_t q = pick(rng);
    if (p == q) continue;
    const double x0 = cells[p].col, y0 = cells[p].row;
    const double dx = cells[q].col - x0, dy = cells[q].row - y0;
    const double len = std::hypot(dx, dy);
    if (len == 0.0) continue;
    LineFit fit;
    fit.a = -dy / len;
    fit.b = dx / len;
    fit.c = -(fit.a * x0 + fit.b * y0);
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (std::abs(fit.a * cells[k].col + fit.b * cells[k].row + fit.c) <= tol) {
        fit.inliers.push_back(k);
      }
    }
    if (fit.inliers.size() > best.inliers.size()) best = std::move(fit);
  }
  return best;
}

CandidateSet curate(const BinaryMatrix& bin, const CurationConfig& cfg) {
  cfg.validate();
  require(bin.rows() == bin.cols(), ErrorKind::Shape, "curate: matrix must be square");
  const auto n = static_cast<int>(bin.rows());
  BinaryMatrix kept = BinaryMatrix::Constant(n, n, false);

  // Clustering and line fits see a halo of columns around each slice so a
  // trend line clipped to a few columns at a slice border keeps enough
  // support; only cells inside the slice are retained.
  const int halo = std::max(int(std::ceil(cfg.dbscan_eps)), cfg.ransac_min_inliers);
  for (int s = 0; s * cfg.slice_width < n; ++s) {
    const int c0 = s * cfg.slice_width, c1 = std::min(n, c0 + cfg.slice_width);
    std::vector<Cell> cells;
    for (int j = std::max(0, c0 - halo); j < std::min(n, c1 + halo); ++j)
      for (int i = 0; i < n; ++i)
        if (bin(i, j)) cells.push_back({i, j});
    if (cells.empty()) continue;

    const auto labels = dbscan(cells, cfg.dbscan_eps, cfg.dbscan_min_pts);
    const int clusters = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    for (int c = 0; c < clusters; ++c) {
      std::vector<Cell> members;
      for (std::size_t k = 0; k < cells.size(); ++k)
        if (labels[k] == c) members.push_back(cells[k]);
      const auto fit = ransac_line(members, cfg.ransac_iters, cfg.ransac_inlier_tol,
                                   derive_seed(cfg.seed, "ransac", s, c));
      if (int(fit.inliers.size()) < cfg.ransac_min_inliers) continue;
      for (auto k : fit.inliers) {
        const Cell& m = members[k];
        if (m.col >= c0 && m.col < c1) kept(m.row, m.col) = true;
      }
    }
  }

  CandidateSet out;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (kept(i, j) && kept(j, i) && j - i >= cfg.min_separation) out.emplace_back(i, j);
  return out;
}

CandidateSet uncurated(const BinaryMatrix& bin) {
  CandidateSet out;
  for (Eigen::Index i = 0; i < bin.rows(); ++i)
    for (Eigen::Index j = i + 1; j < bin.cols(); ++j)
      if (bin(i, j)) out.emplace_back(std::size_t(i), std::size_t(j));
  return out;
}

}  // namespace elfslam::loop
