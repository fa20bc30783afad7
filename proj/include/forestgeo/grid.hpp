#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "forestgeo/types.hpp"

namespace forestgeo {

/// Placement of a raster on the horizontal plane. Row 0 is the southern edge;
/// cell (col, row) covers [origin_x + col*res, origin_x + (col+1)*res) in x.
struct GridGeometry {
  double origin_x = 0.0;  // lower-left corner, m
  double origin_y = 0.0;
  double resolution = 1.0;  // m / cell
  std::size_t width = 1;
  std::size_t height = 1;

  std::size_t cells() const { return width * height; }
  std::size_t index(std::size_t col, std::size_t row) const { return row * width + col; }
  Eigen::Vector2d cell_center(std::size_t col, std::size_t row) const {
    return {origin_x + (static_cast<double>(col) + 0.5) * resolution,
            origin_y + (static_cast<double>(row) + 0.5) * resolution};
  }
  /// Cell containing `p`, or nullopt outside the grid.
  std::optional<std::size_t> cell_of(double x, double y) const;

  /// Grid on the lattice k*resolution that covers [min, max] in both axes.
  static GridGeometry covering(double min_x, double min_y, double max_x, double max_y,
                               double resolution);

  /// Throws ArgumentError unless resolution > 0 and width, height >= 1.
  void validate() const;

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

/// A scalar raster (CHM, ground, likelihood field, overlay layer).
struct GridField {
  GridGeometry geometry;
  std::vector<double> values;  // row-major, geometry.cells() entries
  std::optional<GeoAnchor> anchor;

  GridField() = default;
  explicit GridField(const GridGeometry& g, double fill = 0.0)
      : geometry(g), values(g.cells(), fill) {}

  std::size_t width() const { return geometry.width; }
  std::size_t height() const { return geometry.height; }
  double resolution() const { return geometry.resolution; }

  double& at(std::size_t col, std::size_t row) { return values[geometry.index(col, row)]; }
  double at(std::size_t col, std::size_t row) const { return values[geometry.index(col, row)]; }

  /// Bilinear interpolation between cell centers; edge values are held outside the
  /// outermost centers.
  double sample_clamped(double x, double y) const;
};

/// (v - min) / (max - min) per cell; a constant field maps to all zeros.
GridField normalize_field(const GridField& field);

/// Plain little-endian dump: origin_x, origin_y, resolution (float64), width, height
/// (uint32), then width*height float32 values row-major.
void write_grid_dump(const GridField& field, const std::filesystem::path& path);
GridField read_grid_dump(const std::filesystem::path& path);

}  // namespace forestgeo
