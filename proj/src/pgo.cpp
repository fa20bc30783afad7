#include "forestgeo/pgo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "forestgeo/errors.hpp"
#include "forestgeo/geometry.hpp"

namespace forestgeo::pgo {
namespace {

template <typename Mat>
bool is_spd(const Mat& m) {
  if (!m.allFinite()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
    return false;
  }
  Eigen::LLT<Mat> llt(m);
  return llt.info() == Eigen::Success;
}

template <typename Vec, typename Mat>
double quadratic(const Vec& r, const Mat& info) {
  return 0.5 * r.dot(info * r);
}

struct PriorLinearization {
  Vector6d residual;
  Matrix6d jac;
};

PriorLinearization linearize_prior(const Se3Pose& pose, const PriorFactor& prior) {
  PriorLinearization out;
  const Eigen::Matrix3d r = prior.pose.rotation.toRotationMatrix().transpose() *
                            pose.rotation.toRotationMatrix();
  const Eigen::Vector3d e = so3::log(r);
  out.residual << pose.translation - prior.pose.translation, e;
  out.jac.setZero();
  out.jac.topLeftCorner<3, 3>().setIdentity();
  out.jac.bottomRightCorner<3, 3>() = so3::right_jacobian_inverse(e);
  return out;
}

void check_connected(const PoseGraph& graph) {
  const std::size_t n = graph.nodes.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  std::size_t components = n;
  for (const auto& f : graph.odometry) {
    const std::size_t a = find(f.from), b = find(f.to);
    if (a != b) {
      parent[std::max(a, b)] = std::min(a, b);
      --components;
    }
  }
  if (components > 1) {
    throw DegenerateError("pose graph is not connected by odometry factors (" +
                          std::to_string(components) + " components)");
  }
}

}  // namespace

double huber_rho(double r, double delta) {
  const double a = std::abs(r);
  if (a <= delta) return 0.5 * r * r;
  return delta * (a - 0.5 * delta);
}

void RobustKernel::validate() const {
  if (kind == KernelKind::kHuber && !(delta > 0.0)) {
    throw ArgumentError("Huber threshold must be positive");
  }
}

double RobustKernel::rho(double r) const {
  return kind == KernelKind::kHuber ? huber_rho(r, delta) : 0.5 * r * r;
}

double robust_weight(double r, const RobustKernel& kernel) {
  if (kernel.kind == KernelKind::kSquared) return 1.0;
  const double a = std::abs(r);
  return a <= kernel.delta ? 1.0 : kernel.delta / a;
}

void PoseGraph::validate() const {
  const std::size_t n = nodes.size();
  for (const auto& f : odometry) {
    if (f.from >= n || f.to >= n || f.from == f.to) {
      throw ArgumentError("odometry factor index out of range");
    }
    if (!is_spd(f.information)) throw ArgumentError("odometry information is not SPD");
  }
  for (const auto& f : gnss) {
    if (f.node >= n) throw ArgumentError("GNSS factor index out of range");
    if (!is_spd(f.information)) throw ArgumentError("GNSS information is not SPD");
    f.kernel.validate();
  }
  if (prior) {
    if (prior->node >= n) throw ArgumentError("prior index out of range");
    if (!is_spd(prior->information)) throw ArgumentError("prior information is not SPD");
  }
}

PoseGraph build_graph(std::span<const Se3Pose> odometry, std::span<const GnssFix> gnss,
                      const GraphConfig& cfg) {
  if (odometry.empty()) throw ArgumentError("odometry is empty");
  validate_trajectory(odometry);
  cfg.kernel.validate();
  PoseGraph graph;
  graph.nodes.assign(odometry.begin(), odometry.end());
  for (std::size_t i = 0; i + 1 < odometry.size(); ++i) {
    const auto& a = odometry[i];
    const auto& b = odometry[i + 1];
    OdometryFactor f;
    f.from = i;
    f.to = i + 1;
    f.delta_translation = a.rotation.conjugate() * (b.translation - a.translation);
    f.delta_rotation = (a.rotation.conjugate() * b.rotation).normalized();
    const double length = std::max(f.delta_translation.norm(), cfg.min_segment);
    f.information = (cfg.odometry_information_per_meter / length).asDiagonal();
    graph.odometry.push_back(f);
  }
  if (cfg.mode != GnssMode::kNone) {
    if (cfg.mode == GnssMode::kConstantScaling && !(cfg.sigma_constant > 0.0)) {
      throw ArgumentError("constant GNSS sigma must be positive");
    }
    for (const auto& fix : gnss) {
      auto it = std::lower_bound(odometry.begin(), odometry.end(), fix.t,
                                 [](const Se3Pose& p, double t) { return p.t < t; });
      std::size_t best = odometry.size();
      double best_dt = std::numeric_limits<double>::infinity();
      for (auto cand : {it, it == odometry.begin() ? it : it - 1}) {
        if (cand == odometry.end()) continue;
        const double dt = std::abs(cand->t - fix.t);
        if (dt < best_dt) {
          best_dt = dt;
          best = static_cast<std::size_t>(cand - odometry.begin());
        }
      }
      if (best == odometry.size() || best_dt > cfg.association_window) continue;
      GnssFactor f;
      f.node = best;
      f.fix = fix;
      f.kernel = cfg.kernel;
      if (cfg.mode == GnssMode::kCovarianceAware) {
        if (!fix.covariance_valid()) throw ArgumentError("GNSS covariance is not SPD");
        f.information = fix.covariance.inverse();
        f.information = 0.5 * (f.information + f.information.transpose()).eval();
      } else {
        f.information = Eigen::Matrix3d::Identity() / (cfg.sigma_constant * cfg.sigma_constant);
      }
      graph.gnss.push_back(f);
    }
  }
  if (graph.gnss.empty()) {
    graph.prior = PriorFactor{0, graph.nodes.front(),
                              Matrix6d::Identity() * cfg.prior_information};
  }
  graph.validate();
  return graph;
}

OdometryLinearization linearize_odometry(const Se3Pose& from, const Se3Pose& to,
                                         const OdometryFactor& factor) {
  const Eigen::Matrix3d ri = from.rotation.toRotationMatrix();
  const Eigen::Matrix3d rj = to.rotation.toRotationMatrix();
  const Eigen::Matrix3d dr = factor.delta_rotation.toRotationMatrix();
  const Eigen::Vector3d local = ri.transpose() * (to.translation - from.translation);
  const Eigen::Matrix3d err = dr.transpose() * ri.transpose() * rj;
  const Eigen::Vector3d e = so3::log(err);
  const Eigen::Matrix3d jr_inv = so3::right_jacobian_inverse(e);

  OdometryLinearization out;
  out.residual << local - factor.delta_translation, e;
  out.jac_from.setZero();
  out.jac_to.setZero();
  out.jac_from.topLeftCorner<3, 3>() = -ri.transpose();
  out.jac_from.topRightCorner<3, 3>() = so3::hat(local);
  out.jac_from.bottomRightCorner<3, 3>() = -jr_inv * rj.transpose() * ri;
  out.jac_to.topLeftCorner<3, 3>() = ri.transpose();
  out.jac_to.bottomRightCorner<3, 3>() = jr_inv;
  return out;
}

GnssLinearization linearize_gnss(const Se3Pose& pose, const GnssFactor& factor) {
  GnssLinearization out;
  out.residual = pose.translation - factor.fix.position;
  out.jac.setZero();
  out.jac.leftCols<3>().setIdentity();
  return out;
}

Se3Pose retract(const Se3Pose& pose, const Vector6d& delta) {
  Se3Pose out = pose;
  out.translation += delta.head<3>();
  const Eigen::Matrix3d r = pose.rotation.toRotationMatrix() * so3::exp(delta.tail<3>());
  out.rotation = Eigen::Quaterniond(r).normalized();
  return out;
}

double total_cost(const PoseGraph& graph, std::span<const Se3Pose> poses) {
  double cost = 0.0;
  for (const auto& f : graph.odometry) {
    const auto lin = linearize_odometry(poses[f.from], poses[f.to], f);
    cost += quadratic(lin.residual, f.information);
  }
  for (const auto& f : graph.gnss) {
    const Eigen::Vector3d r = poses[f.node].translation - f.fix.position;
    const double s = std::sqrt(std::max(0.0, r.dot(f.information * r)));
    cost += f.kernel.rho(s);
  }
  if (graph.prior) {
    const auto lin = linearize_prior(poses[graph.prior->node], *graph.prior);
    cost += quadratic(lin.residual, graph.prior->information);
  }
  return cost;
}

OptimizeResult optimize(const PoseGraph& graph, const SolverConfig& cfg) {
  graph.validate();
  if (graph.nodes.empty()) throw ArgumentError("pose graph has no nodes");
  check_connected(graph);
  const std::size_t n = graph.nodes.size();
  const auto dim = static_cast<Eigen::Index>(6 * n);

  OptimizeResult result;
  result.poses = graph.nodes;
  double cost = total_cost(graph, result.poses);
  result.initial_cost = cost;
  result.accepted_costs.push_back(cost);

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  bool pattern_ready = false;
  double lambda = cfg.initial_lambda;
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd gradient(dim);

  auto add_block = [&](std::size_t bi, std::size_t bj, const Eigen::MatrixXd& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r) {
      for (Eigen::Index c = 0; c < block.cols(); ++c) {
        triplets.emplace_back(static_cast<Eigen::Index>(6 * bi) + r,
                              static_cast<Eigen::Index>(6 * bj) + c, block(r, c));
      }
    }
  };

  int iter = 0;
  for (; iter < cfg.max_iterations; ++iter) {
    if (cost <= std::numeric_limits<double>::min()) break;
    triplets.clear();
    gradient.setZero();
    // Normal equations with IRLS weights at the current state.
    for (const auto& f : graph.odometry) {
      const auto lin = linearize_odometry(result.poses[f.from], result.poses[f.to], f);
      const Matrix6d wa = lin.jac_from.transpose() * f.information;
      const Matrix6d wb = lin.jac_to.transpose() * f.information;
      add_block(f.from, f.from, wa * lin.jac_from);
      add_block(f.from, f.to, wa * lin.jac_to);
      add_block(f.to, f.from, wb * lin.jac_from);
      add_block(f.to, f.to, wb * lin.jac_to);
      gradient.segment<6>(static_cast<Eigen::Index>(6 * f.from)) += wa * lin.residual;
      gradient.segment<6>(static_cast<Eigen::Index>(6 * f.to)) += wb * lin.residual;
    }
    for (const auto& f : graph.gnss) {
      const auto lin = linearize_gnss(result.poses[f.node], f);
      const double s = std::sqrt(std::max(0.0, lin.residual.dot(f.information * lin.residual)));
      const double w = robust_weight(s, f.kernel);
      const Eigen::Matrix<double, 6, 3> jt_info = w * lin.jac.transpose() * f.information;
      add_block(f.node, f.node, jt_info * lin.jac);
      gradient.segment<6>(static_cast<Eigen::Index>(6 * f.node)) += jt_info * lin.residual;
    }
    if (graph.prior) {
      const auto lin = linearize_prior(result.poses[graph.prior->node], *graph.prior);
      const Matrix6d jt_info = lin.jac.transpose() * graph.prior->information;
      add_block(graph.prior->node, graph.prior->node, jt_info * lin.jac);
      gradient.segment<6>(static_cast<Eigen::Index>(6 * graph.prior->node)) +=
          jt_info * lin.residual;
    }
    Eigen::SparseMatrix<double> hessian(dim, dim);
    hessian.setFromTriplets(triplets.begin(), triplets.end());
    const Eigen::VectorXd diag = hessian.diagonal();

    bool accepted = false;
    bool converged = false;
    while (!accepted && lambda < 1e12) {
      Eigen::SparseMatrix<double> damped = hessian;
      for (Eigen::Index k = 0; k < dim; ++k) {
        damped.coeffRef(k, k) += lambda * std::max(diag(k), 1e-6);
      }
      if (!pattern_ready) {
        solver.analyzePattern(damped);
        pattern_ready = true;
      }
      solver.factorize(damped);
      if (solver.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd step = solver.solve(-gradient);
      std::vector<Se3Pose> candidate(n);
      for (std::size_t i = 0; i < n; ++i) {
        candidate[i] = retract(result.poses[i], step.segment<6>(static_cast<Eigen::Index>(6 * i)));
      }
      const double next = total_cost(graph, candidate);
      if (std::isfinite(next) && next <= cost) {
        accepted = true;
        const double relative = (cost - next) / std::max(cost, std::numeric_limits<double>::min());
        result.poses = std::move(candidate);
        cost = next;
        result.accepted_costs.push_back(cost);
        lambda = std::max(lambda / 10.0, 1e-12);
        converged = relative < cfg.relative_tolerance;
      } else {
        lambda *= 10.0;
      }
    }
    if (converged) {
      ++iter;
      break;
    }
    if (!accepted) break;
  }
  result.final_cost = cost;
  result.iterations = iter;
  return result;
}

}  // namespace forestgeo::pgo
