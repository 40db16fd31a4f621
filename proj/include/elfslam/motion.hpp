#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "elfslam/geometry.hpp"

namespace elfslam::motion {

/// Relative motion between consecutive footsteps with its information matrix.
struct OdometryEdge {
  std::size_t from_idx = 0;
  std::size_t to_idx = 1;
  Pose2 delta;
  Eigen::Matrix3d information = Eigen::Matrix3d::Identity();
};

struct WalkConfig {
  std::vector<Vec2> waypoints;
  double stride_m = 0.7;
  double stride_sigma_m = 0.02;
  /// Per-step heading random-walk increment (rad).
  double heading_sigma_rad = 0.04;
  /// Constant per-step heading bias; drawn from U(-bias_range, bias_range) when unset.
  std::optional<double> heading_bias_rad;
  double heading_bias_range_rad = 0.005;
  /// Standard deviation of true footstep placement around the nominal marker.
  double placement_sigma_m = 0.0;
  std::size_t echoes_per_step = 6;

  void validate() const;
};

struct EchoPose {
  std::size_t step_idx = 0;
  std::size_t echo_idx = 0;
  Pose2 pose;
};

struct Walk {
  std::vector<Pose2> ground_truth;
  std::vector<OdometryEdge> odometry;
  std::vector<EchoPose> echo_poses;
  double heading_bias_rad = 0.0;
};

/// Rectangle loop with corners (x0, y0) and (x1, y1), walked counter-clockwise
/// (or clockwise when `reverse`) and closed back at the start.
std::vector<Vec2> rectangle_loop(double x0, double y0, double x1, double y1, bool reverse = false);

/// Footsteps at stride intervals along the waypoint polyline. For rounds > 1
/// the polyline must be closed (first == last waypoint).
Walk simulate_walk(const WalkConfig& cfg, std::size_t rounds, std::uint64_t seed);

/// pose_{k+1} = pose_k (+) delta_k.
std::vector<Pose2> dead_reckon(std::span<const OdometryEdge> edges, const Pose2& start = {});

Eigen::Matrix3d odometry_information(double stride_sigma_m, double heading_sigma_rad);

}  // namespace elfslam::motion
