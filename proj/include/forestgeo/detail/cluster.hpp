#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace forestgeo::detail {

/// Single-linkage clustering: points closer than `radius` share a cluster. When
/// `planar` is set only x and y are compared. Clusters are ordered by their smallest
/// member index and list members in ascending order.
std::vector<std::vector<std::size_t>> cluster_by_radius(std::span<const Eigen::Vector3d> points,
                                                        double radius, bool planar);

}  // namespace forestgeo::detail
