#include "elfslam/motion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "elfslam/errors.hpp"
#include "elfslam/rng.hpp"

namespace elfslam::motion {

namespace {

struct Polyline {
  std::vector<Vec2> pts;
  std::vector<double> cum;  // arc length at each vertex

  explicit Polyline(const std::vector<Vec2>& p) : pts(p), cum(p.size(), 0.0) {
    for (std::size_t i = 1; i < p.size(); ++i) cum[i] = cum[i - 1] + (p[i] - p[i - 1]).norm();
  }

  double length() const { return cum.back(); }

  std::size_t segment_at(double s) const {
    std::size_t i = 0;
    while (i + 2 < pts.size() && s >= cum[i + 1]) ++i;
    return i;
  }

  Vec2 point_at(double s) const {
    const std::size_t i = segment_at(s);
    const double seg = cum[i + 1] - cum[i];
    const double t = seg > 0.0 ? (s - cum[i]) / seg : 0.0;
    return pts[i] + t * (pts[i + 1] - pts[i]);
  }
};

}  // namespace

void WalkConfig::validate() const {
  require(waypoints.size() >= 2, ErrorKind::Config, "walk needs at least 2 waypoints");
  require(stride_m > 0.0, ErrorKind::Config, "walk.stride_m must be positive");
  require(stride_sigma_m >= 0.0 && heading_sigma_rad >= 0.0 && placement_sigma_m >= 0.0,
          ErrorKind::Config, "walk noise parameters must be non-negative");
  require(echoes_per_step >= 1, ErrorKind::Config, "walk.echoes_per_step must be >= 1");
}

std::vector<Vec2> rectangle_loop(double x0, double y0, double x1, double y1, bool reverse) {
  std::vector<Vec2> pts{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}};
  if (reverse) std::reverse(pts.begin(), pts.end());
  return pts;
}

Eigen::Matrix3d odometry_information(double stride_sigma_m, double heading_sigma_rad) {
  const double st = std::max(stride_sigma_m, 1e-3);
  const double sh = std::max(heading_sigma_rad, 1e-4);
  return Eigen::Vector3d(1.0 / (st * st), 1.0 / (st * st), 1.0 / (sh * sh)).asDiagonal();
}

Walk simulate_walk(const WalkConfig& cfg, std::size_t rounds, std::uint64_t seed) {
  cfg.validate();
  require(rounds >= 1, ErrorKind::Config, "walk needs at least one round");
  const Polyline line(cfg.waypoints);
  require(line.length() >= cfg.stride_m, ErrorKind::Config,
          "walk polyline is shorter than one stride");
  const bool closed = (cfg.waypoints.front() - cfg.waypoints.back()).norm() < 1e-9;
  require(rounds == 1 || closed, ErrorKind::Config, "multi-round walks need a closed polyline");

  const auto per_round = static_cast<std::size_t>(std::floor(line.length() / cfg.stride_m + 1e-9));
  Rng rng(derive_seed(seed, "walk"));
  std::normal_distribution<double> gauss(0.0, 1.0);

  Walk walk;
  const std::size_t n = per_round * rounds;
  std::vector<Vec2> pos(n);
  for (std::size_t r = 0; r < rounds; ++r) {
    for (std::size_t k = 0; k < per_round; ++k) {
      Vec2 p = line.point_at(double(k) * cfg.stride_m);
      if (cfg.placement_sigma_m > 0.0) {
        p += cfg.placement_sigma_m * Vec2(gauss(rng), gauss(rng));
      }
      pos[r * per_round + k] = p;
    }
  }
  // For a closed loop the next footstep after the last one is the start.
  auto heading_towards = [&](std::size_t k) {
    Vec2 next;
    if (k + 1 < n) {
      next = pos[k + 1];
    } else if (closed) {
      next = line.point_at(0.0);
    } else {
      next = line.point_at(std::min(double(n) * cfg.stride_m, line.length()));
      if ((next - pos[k]).norm() < 1e-12) next = pos[k] + (pos[k] - pos[k - 1]);
    }
    const Vec2 d = next - pos[k];
    return std::atan2(d.y(), d.x());
  };
  walk.ground_truth.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    walk.ground_truth.emplace_back(pos[k].x(), pos[k].y(), heading_towards(k));
  }

  std::uniform_real_distribution<double> bias_dist(-cfg.heading_bias_range_rad,
                                                   cfg.heading_bias_range_rad);
  walk.heading_bias_rad = cfg.heading_bias_rad ? *cfg.heading_bias_rad
                          : cfg.heading_bias_range_rad > 0.0 ? bias_dist(rng)
                                                             : 0.0;
  const Eigen::Matrix3d info = odometry_information(cfg.stride_sigma_m, cfg.heading_sigma_rad);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    OdometryEdge e;
    e.from_idx = k;
    e.to_idx = k + 1;
    const Pose2 truth = walk.ground_truth[k].between(walk.ground_truth[k + 1]);
    // Noise draws happen unconditionally so that enabling one noise source
    // does not reshuffle the others.
    const double n_stride = gauss(rng);
    const double n_heading = gauss(rng);
    if (cfg.stride_sigma_m == 0.0 && cfg.heading_sigma_rad == 0.0 &&
        walk.heading_bias_rad == 0.0) {
      e.delta = truth;
    } else {
      const double len = std::hypot(truth.x, truth.y);
      const double dir = std::atan2(truth.y, truth.x);
      const double noisy_len = len + cfg.stride_sigma_m * n_stride;
      e.delta = Pose2(noisy_len * std::cos(dir), noisy_len * std::sin(dir),
                      truth.theta + cfg.heading_sigma_rad * n_heading + walk.heading_bias_rad);
    }
    e.information = info;
    walk.odometry.push_back(e);
  }

  // Echoes are captured between footstep k and k+1 with the phone pointing
  // along the walking direction.
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const Vec2 a = walk.ground_truth[k].translation();
    const Vec2 b = walk.ground_truth[k + 1].translation();
    const Vec2 d = b - a;
    const double heading = std::atan2(d.y(), d.x());
    for (std::size_t j = 0; j < cfg.echoes_per_step; ++j) {
      const double t = double(j) / double(cfg.echoes_per_step);
      const Vec2 p = a + t * d;
      walk.echo_poses.push_back({k, j, Pose2(p.x(), p.y(), heading)});
    }
  }
  return walk;
}

std::vector<Pose2> dead_reckon(std::span<const OdometryEdge> edges, const Pose2& start) {
  std::vector<Pose2> poses;
  poses.reserve(edges.size() + 1);
  poses.push_back(start);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& e = edges[k];
    if (e.to_idx != e.from_idx + 1 || (k > 0 && e.from_idx != edges[k - 1].to_idx)) {
      fail(ErrorKind::Sequence, "odometry edge " + std::to_string(k) + " (" +
                                    std::to_string(e.from_idx) + "->" +
                                    std::to_string(e.to_idx) + ") breaks the index sequence");
    }
    poses.push_back(poses.back().compose(e.delta));
  }
  return poses;
}

}  // namespace elfslam::motion
