#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "forestgeo/types.hpp"

namespace forestgeo {

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

inline Eigen::Vector2d se2_apply(const Se2Transform& t, const Eigen::Vector2d& p) {
  return t.apply(p);
}

/// Pose at time `t` by linear interpolation of translation and slerp of rotation
/// between the bracketing poses. Throws RangeError outside [first.t, last.t].
Se3Pose interpolate_pose(std::span<const Se3Pose> trajectory, double t);

/// Throws ArgumentError if timestamps are not strictly increasing or
/// a quaternion is not unit to 1e-9.
void validate_trajectory(std::span<const Se3Pose> trajectory);

/// Applies a planar transform to every point and shifts z by `dz`.
PointCloud transform_cloud(const PointCloud& cloud, const Se2Transform& t, double dz = 0.0);

namespace so3 {

Eigen::Matrix3d hat(const Eigen::Vector3d& v);
Eigen::Matrix3d exp(const Eigen::Vector3d& phi);
Eigen::Vector3d log(const Eigen::Matrix3d& r);
/// Inverse of the right Jacobian of SO(3) at `phi`.
Eigen::Matrix3d right_jacobian_inverse(const Eigen::Vector3d& phi);

}  // namespace so3

}  // namespace forestgeo
