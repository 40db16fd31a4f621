#pragma once

#include <string>
#include <vector>

#include "io.hpp"

namespace elfslam::cli {

/// One <rect class="cell"> per matrix entry, grey level = value in [0, 1].
std::string svg_heatmap(const Table& matrix);

/// Polylines for the ground-truth, dead-reckoned and optimised columns of a
/// trajectory CSV (gt_x, gt_y, dr_x, dr_y, opt_x, opt_y).
std::string svg_trajectory(const Table& trajectory);

/// Empirical CDF of the `error_m` column of each results CSV.
std::string svg_error_cdf(const std::vector<Table>& results, const std::vector<std::string>& labels);

}  // namespace elfslam::cli
