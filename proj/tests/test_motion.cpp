#include <doctest.h>

#include <cmath>
#include <numeric>

#include "elfslam/errors.hpp"
#include "elfslam/motion.hpp"

using namespace elfslam;
using namespace elfslam::motion;

namespace {

WalkConfig noiseless(std::vector<Vec2> waypoints, double stride) {
  WalkConfig c;
  c.waypoints = std::move(waypoints);
  c.stride_m = stride;
  c.stride_sigma_m = 0.0;
  c.heading_sigma_rad = 0.0;
  c.heading_bias_rad = 0.0;
  return c;
}

double signed_area(const std::vector<Vec2>& p) {
  double a = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) a += p[i].x() * p[i + 1].y() - p[i + 1].x() * p[i].y();
  return 0.5 * a;
}

}  // namespace

TEST_CASE("straight 7 m path gives 10 footsteps") {
  const auto w = simulate_walk(noiseless({{0, 0}, {7, 0}}, 0.7), 1, 1);
  REQUIRE(w.ground_truth.size() == 10);
  for (std::size_t k = 0; k < 10; ++k) {
    CHECK(w.ground_truth[k].x == doctest::Approx(0.7 * k));
    CHECK(w.ground_truth[k].y == doctest::Approx(0.0));
    CHECK(w.ground_truth[k].theta == doctest::Approx(0.0));
  }
  CHECK(w.odometry.size() == 9);
}

TEST_CASE("rectangle loop of 40.6 m holds 58 steps per round") {
  const auto loop = rectangle_loop(0, 0, 12.3, 8.0);
  auto cfg = noiseless(loop, 0.7);
  const auto w1 = simulate_walk(cfg, 1, 3);
  CHECK(w1.ground_truth.size() == 58);
  const auto w3 = simulate_walk(cfg, 3, 3);
  REQUIRE(w3.ground_truth.size() == 174);
  CHECK(w3.echo_poses.size() == 173 * 6);
  // every round repeats the same footsteps
  for (std::size_t k = 0; k < 58; ++k) {
    CHECK((w3.ground_truth[k].translation() - w3.ground_truth[k + 58].translation()).norm() < 1e-9);
    CHECK((w3.ground_truth[k].translation() - w3.ground_truth[k + 116].translation()).norm() < 1e-9);
  }
}

TEST_CASE("loop direction") {
  CHECK(signed_area(rectangle_loop(0, 0, 4, 3)) > 0.0);
  CHECK(signed_area(rectangle_loop(0, 0, 4, 3, true)) < 0.0);
  const auto l = rectangle_loop(1, 2, 4, 3);
  CHECK((l.front() - l.back()).norm() == 0.0);
  CHECK((l.front() - Vec2(1, 2)).norm() == 0.0);
}

TEST_CASE("noiseless odometry dead-reckons onto the ground truth") {
  const auto w = simulate_walk(noiseless(rectangle_loop(0, 0, 5, 3), 0.4), 2, 9);
  const auto dr = dead_reckon(w.odometry, w.ground_truth.front());
  REQUIRE(dr.size() == w.ground_truth.size());
  for (std::size_t k = 0; k < dr.size(); ++k) {
    CHECK((dr[k].translation() - w.ground_truth[k].translation()).norm() < 1e-9);
    CHECK(std::abs(wrap_angle(dr[k].theta - w.ground_truth[k].theta)) < 1e-9);
  }
}

TEST_CASE("noise statistics follow the configured model") {
  WalkConfig c;
  c.waypoints = {{0, 0}, {3000, 0}};
  c.stride_m = 0.7;
  c.stride_sigma_m = 0.05;
  c.heading_sigma_rad = 0.02;
  c.heading_bias_rad = 0.004;
  const auto w = simulate_walk(c, 1, 17);
  REQUIRE(w.odometry.size() > 4000);
  double ms = 0, ss = 0, mh = 0, sh = 0;
  const double n = double(w.odometry.size());
  for (const auto& e : w.odometry) {
    const double dl = std::hypot(e.delta.x, e.delta.y) - 0.7;
    ms += dl / n;
    ss += dl * dl / n;
    mh += e.delta.theta / n;
    sh += e.delta.theta * e.delta.theta / n;
  }
  CHECK(std::abs(ms) < 0.005);
  CHECK(std::sqrt(ss - ms * ms) == doctest::Approx(0.05).epsilon(0.05));
  CHECK(mh == doctest::Approx(0.004).epsilon(0.2));
  CHECK(std::sqrt(sh - mh * mh) == doctest::Approx(0.02).epsilon(0.05));
  CHECK(w.heading_bias_rad == 0.004);
}

TEST_CASE("drawn heading bias stays in range and is reproducible") {
  WalkConfig c;
  c.waypoints = rectangle_loop(0, 0, 4, 3);
  c.stride_m = 0.5;
  const auto a = simulate_walk(c, 2, 5);
  const auto b = simulate_walk(c, 2, 5);
  CHECK(std::abs(a.heading_bias_rad) <= c.heading_bias_range_rad);
  CHECK(a.heading_bias_rad == b.heading_bias_rad);
  REQUIRE(a.odometry.size() == b.odometry.size());
  for (std::size_t k = 0; k < a.odometry.size(); ++k) CHECK(a.odometry[k].delta == b.odometry[k].delta);
  const auto d = simulate_walk(c, 2, 6);
  CHECK_FALSE(a.odometry[3].delta == d.odometry[3].delta);
}

TEST_CASE("odometry information is the inverse noise variance") {
  const auto info = odometry_information(0.05, 0.02);
  CHECK(info(0, 0) == doctest::Approx(400.0));
  CHECK(info(1, 1) == doctest::Approx(400.0));
  CHECK(info(2, 2) == doctest::Approx(2500.0));
  CHECK(info(0, 1) == 0.0);
}

TEST_CASE("echo poses interpolate each step along the walking direction") {
  auto c = noiseless({{0, 0}, {2.1, 0}, {2.1, 2.1}}, 0.7);
  c.echoes_per_step = 4;
  const auto w = simulate_walk(c, 1, 1);
  REQUIRE(w.ground_truth.size() == 6);
  REQUIRE(w.echo_poses.size() == 5 * 4);
  for (const auto& e : w.echo_poses) {
    const Vec2 a = w.ground_truth[e.step_idx].translation();
    const Vec2 b = w.ground_truth[e.step_idx + 1].translation();
    const Vec2 want = a + (b - a) * (double(e.echo_idx) / 4.0);
    CHECK((e.pose.translation() - want).norm() < 1e-12);
    CHECK(e.pose.theta == doctest::Approx(std::atan2((b - a).y(), (b - a).x())));
  }
}

TEST_CASE("walk configuration errors") {
  WalkConfig c;
  c.waypoints = {{0, 0}};
  CHECK_THROWS_AS(simulate_walk(c, 1, 1), Error);
  c.waypoints = {{0, 0}, {1, 0}};
  c.stride_m = 0.0;
  CHECK_THROWS_AS(simulate_walk(c, 1, 1), Error);
  c.stride_m = 2.0;
  CHECK_THROWS_AS(simulate_walk(c, 1, 1), Error);
  c.stride_m = 0.5;
  try {
    simulate_walk(c, 2, 1);  // open polyline, two rounds
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}

TEST_CASE("dead reckoning rejects broken index sequences") {
  std::vector<OdometryEdge> edges(3);
  for (std::size_t k = 0; k < 3; ++k) {
    edges[k].from_idx = k;
    edges[k].to_idx = k + 1;
    edges[k].delta = Pose2(1, 0, 0);
  }
  CHECK(dead_reckon(edges).back().x == doctest::Approx(3.0));
  edges[2].from_idx = 3;
  edges[2].to_idx = 4;
  try {
    dead_reckon(edges);
    FAIL("expected sequence error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Sequence);
  }
}

TEST_CASE("dead reckoning composition identities") {
  const Pose2 start(1.5, -2.0, 0.7);
  const auto only = dead_reckon({}, start);
  REQUIRE(only.size() == 1);
  CHECK(only[0] == start);

  std::vector<OdometryEdge> square(4);
  for (std::size_t k = 0; k < 4; ++k) {
    square[k].from_idx = k;
    square[k].to_idx = k + 1;
    square[k].delta = Pose2(1, 0, M_PI / 2);
  }
  const auto sq = dead_reckon(square);
  CHECK(sq[1].translation().isApprox(Vec2(1, 0)));
  CHECK(sq[2].translation().isApprox(Vec2(1, 1)));
  CHECK(sq[3].translation().isApprox(Vec2(0, 1)));
  CHECK(sq[4].translation().norm() < 1e-12);
  CHECK(std::abs(wrap_angle(sq[4].theta)) < 1e-12);

  WalkConfig c;
  c.waypoints = rectangle_loop(0, 0, 5, 4);
  c.stride_m = 0.45;
  const auto w = simulate_walk(c, 3, 8);
  const auto rel = dead_reckon(w.odometry);
  const auto abs = dead_reckon(w.odometry, start);
  for (std::size_t k = 0; k < rel.size(); ++k) {
    const Pose2 want = start.compose(rel[k]);
    CHECK((abs[k].translation() - want.translation()).norm() < 1e-9);
    CHECK(std::abs(wrap_angle(abs[k].theta - want.theta)) < 1e-9);
    CHECK(abs[k].theta > -M_PI);
    CHECK(abs[k].theta <= M_PI);
  }
}

TEST_CASE("noiseless odometry is bit exact") {
  const auto w = simulate_walk(noiseless(rectangle_loop(0, 0, 12.3, 8.0), 0.7), 2, 4);
  for (std::size_t k = 0; k < w.odometry.size(); ++k)
    CHECK(w.odometry[k].delta == w.ground_truth[k].between(w.ground_truth[k + 1]));
}

TEST_CASE("default noise drifts more than a metre over three rounds") {
  WalkConfig c;
  c.waypoints = rectangle_loop(0, 0, 12.3, 8.0);
  c.stride_m = 0.7;
  std::vector<double> end_err;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto w = simulate_walk(c, 3, seed);
    const auto dr = dead_reckon(w.odometry, w.ground_truth.front());
    end_err.push_back((dr.back().translation() - w.ground_truth.back().translation()).norm());
  }
  std::nth_element(end_err.begin(), end_err.begin() + 25, end_err.end());
  MESSAGE("median endpoint drift over 50 seeds: " << end_err[25] << " m");
  CHECK(end_err[25] > 1.0);
}
