#pragma once

#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "elfslam/geometry.hpp"
#include "elfslam/motion.hpp"

namespace elfslam::graph {

/// Position-equality constraint between two footsteps.
struct LoopEdge {
  std::size_t i = 0;
  std::size_t j = 0;
  Eigen::Matrix2d information = Eigen::Matrix2d::Identity() / (0.25 * 0.25);
};

struct PoseGraph {
  std::vector<Pose2> nodes;
  std::vector<motion::OdometryEdge> odo_edges;
  std::vector<LoopEdge> loop_edges;

  /// Checks edge indices and that every information matrix is SPD.
  void validate() const;
};

struct SolverConfig {
  int max_iterations = 100;
  double rel_cost_tol = 1e-9;
  double grad_tol = 1e-8;
  double initial_lambda = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 3.0;
  double max_lambda = 1e12;
};

struct SolveReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
};

struct SolveResult {
  std::vector<Pose2> nodes;
  SolveReport report;
};

/// f(x_i, u): prediction of the next pose.
Pose2 motion_predict(const Pose2& x_i, const Pose2& u);

/// Odometry residual: pose error of the prediction x_i (+) u expressed in the
/// frame of x_j, with wrapped angle.
Eigen::Vector3d odometry_residual(const Pose2& x_i, const Pose2& x_j, const Pose2& u);
/// Jacobians of odometry_residual with respect to (x, y, theta) of x_i and x_j.
void odometry_jacobians(const Pose2& x_i, const Pose2& x_j, const Pose2& u,
                        Eigen::Matrix3d& d_xi, Eigen::Matrix3d& d_xj);

Eigen::Vector2d loop_residual(const Pose2& x_i, const Pose2& x_j);

double cost(const PoseGraph& g);
double cost(const PoseGraph& g, const std::vector<Pose2>& nodes);

/// Levenberg-Marquardt with node 0 held fixed.
SolveResult optimize(const PoseGraph& g, const SolverConfig& cfg = {});

/// g2o-style text: VERTEX_SE2, EDGE_SE2 and EDGE_XY (position equality) lines.
void write_g2o(std::ostream& out, const PoseGraph& g);
PoseGraph read_g2o(std::istream& in);

}  // namespace elfslam::graph
