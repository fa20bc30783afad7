#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "forestgeo/types.hpp"

namespace forestgeo::pgo {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Matrix36d = Eigen::Matrix<double, 3, 6>;

/// Huber loss: r^2/2 for |r| <= delta, delta (|r| - delta/2) beyond.
double huber_rho(double r, double delta);

enum class KernelKind { kSquared, kHuber };

struct RobustKernel {
  KernelKind kind = KernelKind::kHuber;
  double delta = 1.0;  // on the whitened residual norm, dimensionless

  void validate() const;
  double rho(double r) const;
};

/// IRLS weight rho'(r) / r for a whitened residual norm r >= 0.
double robust_weight(double r, const RobustKernel& kernel);

enum class GnssMode { kNone, kConstantScaling, kCovarianceAware };

struct OdometryFactor {
  std::size_t from = 0;
  std::size_t to = 0;
  Eigen::Vector3d delta_translation = Eigen::Vector3d::Zero();  // in the `from` frame
  Eigen::Quaterniond delta_rotation = Eigen::Quaterniond::Identity();
  Matrix6d information = Matrix6d::Identity();  // [translation, rotation] ordering
};

struct GnssFactor {
  std::size_t node = 0;
  GnssFix fix;
  Eigen::Matrix3d information = Eigen::Matrix3d::Identity();
  RobustKernel kernel;
};

struct PriorFactor {
  std::size_t node = 0;
  Se3Pose pose;
  Matrix6d information = Matrix6d::Identity();
};

struct PoseGraph {
  std::vector<Se3Pose> nodes;
  std::vector<OdometryFactor> odometry;
  std::vector<GnssFactor> gnss;
  std::optional<PriorFactor> prior;

  /// Index ranges and SPD information matrices; throws ArgumentError.
  void validate() const;
};

struct GraphConfig {
  GnssMode mode = GnssMode::kCovarianceAware;
  RobustKernel kernel;
  double sigma_constant = 2.0;  // m, for kConstantScaling
  /// Odometry information per meter of travel: a segment of length d gets
  /// information / max(d, min_segment).
  Vector6d odometry_information_per_meter = (Vector6d() << 100, 100, 100, 400, 400, 400).finished();
  double min_segment = 0.05;         // m
  double association_window = 0.1;   // s
  double prior_information = 1e-3;   // gauge prior when no GNSS factor is attached
};

/// One node per odometry pose, between-factors for consecutive poses, and GNSS fixes
/// attached to the nearest node within the association window.
PoseGraph build_graph(std::span<const Se3Pose> odometry, std::span<const GnssFix> gnss,
                      const GraphConfig& cfg = {});

struct SolverConfig {
  int max_iterations = 100;
  double relative_tolerance = 1e-6;
  double initial_lambda = 1e-4;
};

struct OptimizeResult {
  std::vector<Se3Pose> poses;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  /// Total cost after every accepted step, starting with the initial cost.
  std::vector<double> accepted_costs;
};

/// Levenberg-Marquardt with IRLS weights recomputed each iteration. Throws
/// DegenerateError when the odometry factors do not connect all nodes.
OptimizeResult optimize(const PoseGraph& graph, const SolverConfig& cfg = {});

// Residuals and Jacobians with respect to the local perturbation
// [dt, dphi] applied as t + dt, R Exp(dphi).

struct OdometryLinearization {
  Vector6d residual;
  Matrix6d jac_from;
  Matrix6d jac_to;
};

OdometryLinearization linearize_odometry(const Se3Pose& from, const Se3Pose& to,
                                         const OdometryFactor& factor);

struct GnssLinearization {
  Eigen::Vector3d residual;
  Matrix36d jac;
};

GnssLinearization linearize_gnss(const Se3Pose& pose, const GnssFactor& factor);

Se3Pose retract(const Se3Pose& pose, const Vector6d& delta);

/// Total robust cost of `poses` under the graph's factors.
double total_cost(const PoseGraph& graph, std::span<const Se3Pose> poses);

}  // namespace forestgeo::pgo
