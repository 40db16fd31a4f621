#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Core>

namespace elfslam {

using Vec2 = Eigen::Vector2d;

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

/// Planar rigid pose. theta is kept in (-pi, pi].
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose2() = default;
  Pose2(double x_, double y_, double theta_) : x(x_), y(y_), theta(wrap_angle(theta_)) {}

  Vec2 translation() const { return {x, y}; }

  /// SE(2) composition: this followed by `delta` expressed in this frame.
  Pose2 compose(const Pose2& delta) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {x + c * delta.x - s * delta.y, y + s * delta.x + c * delta.y, theta + delta.theta};
  }

  Pose2 inverse() const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {-c * x - s * y, s * x - c * y, -theta};
  }

  /// Motion from this pose to `other`, expressed in this frame.
  Pose2 between(const Pose2& other) const { return inverse().compose(other); }

  Vec2 transform_point(const Vec2& p) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {x + c * p.x() - s * p.y(), y + s * p.x() + c * p.y()};
  }

  friend bool operator==(const Pose2&, const Pose2&) = default;
};

inline Pose2 operator*(const Pose2& a, const Pose2& b) { return a.compose(b); }

}  // namespace elfslam
