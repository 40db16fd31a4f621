#include "elfslam/pose_graph.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "elfslam/errors.hpp"

namespace elfslam::graph {

namespace {

Eigen::Matrix2d rot(double th) {
  const double c = std::cos(th), s = std::sin(th);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

Eigen::Matrix2d rot_derivative(double th) {
  const double c = std::cos(th), s = std::sin(th);
  Eigen::Matrix2d r;
  r << -s, -c, c, -s;
  return r;
}

bool is_spd(const Eigen::MatrixXd& m) {
  if (!m.allFinite()) return false;
  if (!m.isApprox(m.transpose(), 1e-9)) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

struct NormalEquations {
  Eigen::SparseMatrix<double> hessian;
  Eigen::VectorXd gradient;
};

// Variables are nodes 1..N-1 (node 0 is the anchor), three per node.
NormalEquations assemble(const PoseGraph& g, const std::vector<Pose2>& nodes) {
  const std::size_t n = nodes.size();
  const Eigen::Index dim = static_cast<Eigen::Index>(3 * (n - 1));
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);

  auto add_block = [&](std::size_t a, std::size_t b, const Eigen::MatrixXd& blk) {
    if (a == 0 || b == 0) return;
    const auto ra = static_cast<int>(3 * (a - 1));
    const auto rb = static_cast<int>(3 * (b - 1));
    for (int r = 0; r < blk.rows(); ++r)
      for (int c = 0; c < blk.cols(); ++c) trips.emplace_back(ra + r, rb + c, blk(r, c));
  };
  auto add_grad = [&](std::size_t a, const Eigen::Vector3d& v) {
    if (a == 0) return;
    grad.segment<3>(static_cast<Eigen::Index>(3 * (a - 1))) += v;
  };

  for (const auto& e : g.odo_edges) {
    const Eigen::Vector3d r = odometry_residual(nodes[e.from_idx], nodes[e.to_idx], e.delta);
    Eigen::Matrix3d ji, jj;
    odometry_jacobians(nodes[e.from_idx], nodes[e.to_idx], e.delta, ji, jj);
    add_block(e.from_idx, e.from_idx, ji.transpose() * e.information * ji);
    add_block(e.from_idx, e.to_idx, ji.transpose() * e.information * jj);
    add_block(e.to_idx, e.from_idx, jj.transpose() * e.information * ji);
    add_block(e.to_idx, e.to_idx, jj.transpose() * e.information * jj);
    add_grad(e.from_idx, ji.transpose() * e.information * r);
    add_grad(e.to_idx, jj.transpose() * e.information * r);
  }
  for (const auto& e : g.loop_edges) {
    const Eigen::Vector2d r = loop_residual(nodes[e.i], nodes[e.j]);
    Eigen::Matrix<double, 2, 3> ji = Eigen::Matrix<double, 2, 3>::Zero();
    Eigen::Matrix<double, 2, 3> jj = Eigen::Matrix<double, 2, 3>::Zero();
    ji.leftCols<2>() = -Eigen::Matrix2d::Identity();
    jj.leftCols<2>() = Eigen::Matrix2d::Identity();
    add_block(e.i, e.i, ji.transpose() * e.information * ji);
    add_block(e.i, e.j, ji.transpose() * e.information * jj);
    add_block(e.j, e.i, jj.transpose() * e.information * ji);
    add_block(e.j, e.j, jj.transpose() * e.information * jj);
    add_grad(e.i, ji.transpose() * e.information * r);
    add_grad(e.j, jj.transpose() * e.information * r);
  }
  NormalEquations ne;
  ne.hessian.resize(dim, dim);
  ne.hessian.setFromTriplets(trips.begin(), trips.end());
  ne.gradient = std::move(grad);
  return ne;
}

}  // namespace

void PoseGraph::validate() const {
  const std::size_t n = nodes.size();
  require(n >= 1, ErrorKind::Argument, "pose graph has no nodes");
  for (const auto& e : odo_edges) {
    require(e.from_idx < n && e.to_idx < n && e.from_idx != e.to_idx, ErrorKind::Argument,
            "odometry edge index out of range");
    require(is_spd(e.information), ErrorKind::Argument, "odometry information is not SPD");
  }
  for (const auto& e : loop_edges) {
    require(e.i < n && e.j < n && e.i != e.j, ErrorKind::Argument, "loop edge index out of range");
    require(is_spd(e.information), ErrorKind::Argument, "loop information is not SPD");
  }
}

Pose2 motion_predict(const Pose2& x_i, const Pose2& u) { return x_i.compose(u); }

Eigen::Vector3d odometry_residual(const Pose2& x_i, const Pose2& x_j, const Pose2& u) {
  const Eigen::Vector2d p = x_i.translation() + rot(x_i.theta) * u.translation();
  const Eigen::Vector2d et = rot(x_j.theta).transpose() * (p - x_j.translation());
  return {et.x(), et.y(), wrap_angle(x_i.theta + u.theta - x_j.theta)};
}

void odometry_jacobians(const Pose2& x_i, const Pose2& x_j, const Pose2& u,
                        Eigen::Matrix3d& d_xi, Eigen::Matrix3d& d_xj) {
  const Eigen::Matrix2d rjt = rot(x_j.theta).transpose();
  const Eigen::Vector2d p = x_i.translation() + rot(x_i.theta) * u.translation();
  d_xi.setZero();
  d_xj.setZero();
  d_xi.topLeftCorner<2, 2>() = rjt;
  d_xi.block<2, 1>(0, 2) = rjt * rot_derivative(x_i.theta) * u.translation();
  d_xi(2, 2) = 1.0;
  d_xj.topLeftCorner<2, 2>() = -rjt;
  d_xj.block<2, 1>(0, 2) = rot_derivative(x_j.theta).transpose() * (p - x_j.translation());
  d_xj(2, 2) = -1.0;
}

Eigen::Vector2d loop_residual(const Pose2& x_i, const Pose2& x_j) {
  return x_j.translation() - x_i.translation();
}

double cost(const PoseGraph& g, const std::vector<Pose2>& nodes) {
  double total = 0.0;
  for (const auto& e : g.odo_edges) {
    const Eigen::Vector3d r = odometry_residual(nodes[e.from_idx], nodes[e.to_idx], e.delta);
    total += r.dot(e.information * r);
  }
  for (const auto& e : g.loop_edges) {
    const Eigen::Vector2d r = loop_residual(nodes[e.i], nodes[e.j]);
    total += r.dot(e.information * r);
  }
  return total;
}

double cost(const PoseGraph& g) { return cost(g, g.nodes); }

SolveResult optimize(const PoseGraph& g, const SolverConfig& cfg) {
  g.validate();
  require(!g.odo_edges.empty() || !g.loop_edges.empty(), ErrorKind::Argument,
          "pose graph has no edges");

  SolveResult res;
  res.nodes = g.nodes;
  double current = cost(g, res.nodes);
  res.report.initial_cost = current;
  res.report.final_cost = current;
  if (!std::isfinite(current)) fail(ErrorKind::Numeric, "pose graph cost is not finite");
  if (g.nodes.size() < 2 || current == 0.0) {
    res.report.converged = true;
    return res;
  }

  double lambda = cfg.initial_lambda;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    const auto ne = assemble(g, res.nodes);
    if (ne.gradient.lpNorm<Eigen::Infinity>() < cfg.grad_tol) {
      res.report.converged = true;
      break;
    }
    res.report.iterations = it + 1;

    bool accepted = false;
    bool stalled = false;
    while (!accepted) {
      Eigen::SparseMatrix<double> damped = ne.hessian;
      for (Eigen::Index k = 0; k < damped.rows(); ++k) {
        damped.coeffRef(k, k) += lambda * ne.hessian.coeff(k, k);
      }
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(damped);
      const bool ok = solver.info() == Eigen::Success && solver.vectorD().minCoeff() > 0.0;
      if (!ok) {
        lambda *= cfg.lambda_up;
        if (lambda > cfg.max_lambda) {
          fail(ErrorKind::Solver, "normal equations singular after damping escalation");
        }
        continue;
      }
      const Eigen::VectorXd step = solver.solve(-ne.gradient);
      std::vector<Pose2> candidate = res.nodes;
      for (std::size_t k = 1; k < candidate.size(); ++k) {
        const auto o = static_cast<Eigen::Index>(3 * (k - 1));
        candidate[k] = Pose2(candidate[k].x + step(o), candidate[k].y + step(o + 1),
                             candidate[k].theta + step(o + 2));
      }
      const double trial = cost(g, candidate);
      if (std::isfinite(trial) && trial <= current) {
        const double rel = (current - trial) / std::max(current, 1e-300);
        res.nodes = std::move(candidate);
        current = trial;
        lambda = std::max(lambda / cfg.lambda_down, 1e-15);
        accepted = true;
        if (rel < cfg.rel_cost_tol || current == 0.0) res.report.converged = true;
      } else {
        lambda *= cfg.lambda_up;
        if (lambda > cfg.max_lambda) {
          // No descent direction left at machine precision.
          stalled = true;
          break;
        }
      }
    }
    if (stalled) {
      res.report.converged = true;
      break;
    }
    if (res.report.converged) break;
  }
  res.report.final_cost = current;
  return res;
}

void write_g2o(std::ostream& out, const PoseGraph& g) {
  out << std::setprecision(17);
  for (std::size_t k = 0; k < g.nodes.size(); ++k) {
    const auto& p = g.nodes[k];
    out << "VERTEX_SE2 " << k << ' ' << p.x << ' ' << p.y << ' ' << p.theta << '\n';
  }
  out << "FIX 0\n";
  for (const auto& e : g.odo_edges) {
    const auto& m = e.information;
    out << "EDGE_SE2 " << e.from_idx << ' ' << e.to_idx << ' ' << e.delta.x << ' ' << e.delta.y
        << ' ' << e.delta.theta << ' ' << m(0, 0) << ' ' << m(0, 1) << ' ' << m(0, 2) << ' '
        << m(1, 1) << ' ' << m(1, 2) << ' ' << m(2, 2) << '\n';
  }
  for (const auto& e : g.loop_edges) {
    const auto& m = e.information;
    out << "EDGE_XY " << e.i << ' ' << e.j << " 0 0 " << m(0, 0) << ' ' << m(0, 1) << ' '
        << m(1, 1) << '\n';
  }
}

PoseGraph read_g2o(std::istream& in) {
  PoseGraph g;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    auto bad = [&] { fail(ErrorKind::Data, "g2o line " + std::to_string(lineno) + ": malformed"); };
    if (tag == "VERTEX_SE2") {
      std::size_t id;
      double x, y, th;
      if (!(ss >> id >> x >> y >> th)) bad();
      if (id >= g.nodes.size()) g.nodes.resize(id + 1);
      g.nodes[id] = Pose2(x, y, th);
    } else if (tag == "EDGE_SE2") {
      motion::OdometryEdge e;
      double dx, dy, dth, a, b, c, d, f, h;
      if (!(ss >> e.from_idx >> e.to_idx >> dx >> dy >> dth >> a >> b >> c >> d >> f >> h)) bad();
      e.delta = Pose2(dx, dy, dth);
      e.information << a, b, c, b, d, f, c, f, h;
      g.odo_edges.push_back(e);
    } else if (tag == "EDGE_XY") {
      LoopEdge e;
      double dx, dy, a, b, d;
      if (!(ss >> e.i >> e.j >> dx >> dy >> a >> b >> d)) bad();
      e.information << a, b, b, d;
      g.loop_edges.push_back(e);
    } else if (tag == "FIX") {
      continue;
    } else {
      bad();
    }
  }
  return g;
}

}  // namespace elfslam::graph
