#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "forestgeo/types.hpp"

namespace forestgeo::align {

struct IcpConfig {
  int max_iterations = 100;
  /// Stop when the mean correspondence distance changes by less than this.
  double tolerance = 1e-6;
};

struct IcpResult {
  Se2Transform transform;  // maps source into target
  double mean_distance = 0.0;
  int iterations = 0;
};

/// Closed-form rigid fit (no scale) minimizing sum |R s_i + t - d_i|^2.
Se2Transform fit_rigid_2d(std::span<const Eigen::Vector2d> source,
                          std::span<const Eigen::Vector2d> target);

/// Point-to-point ICP with nearest-neighbor correspondences. Throws DegenerateError
/// for sets with fewer than 3 points or collinear sets.
IcpResult icp2d(std::span<const Eigen::Vector2d> source, std::span<const Eigen::Vector2d> target,
                const Se2Transform& init, const IcpConfig& cfg = {});

/// The baseline used in alignment comparisons: ICP from `init`, returning the transform.
Se2Transform icp2d_baseline(std::span<const Eigen::Vector2d> source,
                            std::span<const Eigen::Vector2d> target, const Se2Transform& init);

}  // namespace forestgeo::align
