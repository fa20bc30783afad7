#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "forestgeo/grid.hpp"
#include "forestgeo/types.hpp"

namespace forestgeo::fields {

/// Crown-relevant LoG scales in meters, strictly increasing.
struct ScaleSet {
  std::vector<double> sigmas{1.0, 2.0, 3.0, 4.0};

  void validate() const;
};

// Kernels are truncated at this many standard deviations.
inline constexpr double kKernelTruncation = 4.0;

struct GroundEstimate {
  GridField elevation;
  /// 1 where the cell held points before gap filling.
  std::vector<std::uint8_t> observed;
};

/// Per-cell 5th percentile of z, nearest-neighbor gap filling, 3x3 median smoothing.
GroundEstimate estimate_ground_detailed(const PointCloud& cloud, double cell = 1.0);
GridField estimate_ground(const PointCloud& cloud, double cell = 1.0);

/// Canopy height: per-cell max z minus ground elevation at the cell center, clamped
/// at 0. Cells without points are 0.
GridField compute_chm(const PointCloud& cloud, const GridField& ground, double resolution);

/// Scale-normalized Laplacian-of-Gaussian response sigma^2 * (LoG_sigma * chm),
/// approximating the continuous convolution, with edge replication at the borders.
GridField log_response(const GridField& chm, double sigma);

/// max over sigma of |log_response|, before normalization.
GridField aerial_likelihood_raw(const GridField& chm, const ScaleSet& scales);
/// Aerial tree-likelihood field normalized to [0, 1].
GridField aerial_likelihood(const GridField& chm, const ScaleSet& scales);

struct TrunkParams {
  double slice_min = 1.0;      // height above ground, m
  double slice_max = 1.6;
  double link_radius = 0.3;
  std::size_t min_points = 10;
  double max_extent = 1.5;
};

/// Trunk hypotheses from the breast-height slice of a terrestrial cloud.
TrunkSet extract_trunks(const PointCloud& cloud, const GridField& ground,
                        const TrunkParams& params = {});

/// sum_i exp(-|x - p_i|^2 / (2 h^2)) at every cell center of `geometry`.
GridField kde_field(const TrunkSet& trunks, double bandwidth, const GridGeometry& geometry);
/// kde_field normalized to [0, 1]. Throws DegenerateError on an empty trunk set.
GridField terrestrial_likelihood(const TrunkSet& trunks, double bandwidth,
                                 const GridGeometry& geometry);

struct MarkerParams {
  float intensity_threshold = 200.0f;
  double link_radius = 0.2;
  std::size_t min_points = 5;
};

/// Centroids of high-intensity clusters (reflective tape on marked trees).
std::vector<Eigen::Vector3d> extract_markers(const PointCloud& cloud,
                                             const MarkerParams& params = {});

}  // namespace forestgeo::fields
