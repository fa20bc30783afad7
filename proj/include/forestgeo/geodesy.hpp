#pragma once

#include <Eigen/Core>

#include "forestgeo/types.hpp"

namespace forestgeo::geodesy {

// WGS84 ellipsoid.
inline constexpr double kSemiMajor = 6378137.0;
inline constexpr double kFlattening = 1.0 / 298.257223563;
inline constexpr double kEccSq = kFlattening * (2.0 - kFlattening);

// Local tangent plane validity window around the anchor, degrees.
inline constexpr double kTangentPlaneWindowDeg = 1.0;

struct LatLonAlt {
  double lat = 0.0;  // deg
  double lon = 0.0;  // deg
  double alt = 0.0;  // m
};

Eigen::Vector3d geodetic_to_ecef(const LatLonAlt& lla);
LatLonAlt ecef_to_geodetic(const Eigen::Vector3d& ecef);

/// East-north-up coordinates on the tangent plane at `anchor`.
/// Throws RangeError when the input is more than 1 deg from the anchor.
Eigen::Vector3d wgs84_to_enu(double lat, double lon, double alt, const GeoAnchor& anchor);
LatLonAlt enu_to_wgs84(const Eigen::Vector3d& enu, const GeoAnchor& anchor);

struct Projected {
  double easting = 0.0;
  double northing = 0.0;
};

/// UTM zone (1..60) containing `lon`, ignoring the Norway/Svalbard exceptions.
int utm_zone_for(double lon);
/// 326zz for the northern hemisphere, 327zz for the southern.
int utm_epsg_for(double lat, double lon);
bool is_utm_epsg(int epsg);

/// Transverse Mercator (Krueger series to n^3) in the given UTM zone.
Projected utm_forward(double lat, double lon, int zone, bool north);
/// Projects into a UTM EPSG code. Throws ArgumentError for other codes.
Projected project_epsg(double lat, double lon, int epsg);

}  // namespace forestgeo::geodesy
