#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "forestgeo/grid.hpp"
#include "forestgeo/types.hpp"

namespace forestgeo::geotiff {

/// Projected coordinates of the north-west corner of `geometry` under `anchor`.
struct Tiepoint {
  double easting = 0.0;
  double northing = 0.0;
  int epsg = 0;
};
Tiepoint northwest_tiepoint(const GridGeometry& geometry, const GeoAnchor& anchor);

/// Single-band float32, uncompressed, single strip, north-up. Uses `field.anchor`
/// when `anchor` is not given; throws ArgumentError when neither is present.
void write_geotiff(const GridField& field, const GeoAnchor& anchor,
                   const std::filesystem::path& path);
void write_geotiff(const GridField& field, const std::filesystem::path& path);

/// Contents of a file written by write_geotiff.
struct Raster {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> north_up;  // row 0 = northern edge
  std::array<double, 3> pixel_scale{};
  std::array<double, 6> tiepoint{};
  std::vector<std::uint16_t> geokeys;
  std::string nodata;

  int model_type() const;     // GTModelTypeGeoKey, 0 when absent
  int projected_cs() const;   // ProjectedCSTypeGeoKey, 0 when absent
  /// Values in GridField order (row 0 = southern edge).
  std::vector<double> south_up() const;
};

/// Reads classic little-endian TIFF with float32 strips. Throws ParseError.
Raster read_geotiff(const std::filesystem::path& path);

}  // namespace forestgeo::geotiff
