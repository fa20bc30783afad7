#include "forestgeo/geodesy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "forestgeo/errors.hpp"

namespace forestgeo::geodesy {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double wrap_lon_diff(double dlon) {
  dlon = std::remainder(dlon, 360.0);
  return dlon;
}

Eigen::Matrix3d ecef_to_enu_rotation(double lat_deg, double lon_deg) {
  const double sl = std::sin(lat_deg * kDeg), cl = std::cos(lat_deg * kDeg);
  const double so = std::sin(lon_deg * kDeg), co = std::cos(lon_deg * kDeg);
  Eigen::Matrix3d r;
  r << -so, co, 0.0,
       -sl * co, -sl * so, cl,
       cl * co, cl * so, sl;
  return r;
}

void check_window(double lat, double lon, const GeoAnchor& anchor) {
  if (!std::isfinite(lat) || !std::isfinite(lon) ||
      std::abs(lat - anchor.lat0) >= kTangentPlaneWindowDeg ||
      std::abs(wrap_lon_diff(lon - anchor.lon0)) >= kTangentPlaneWindowDeg) {
    throw RangeError("position (" + std::to_string(lat) + ", " + std::to_string(lon) +
                     ") outside the tangent-plane window of the anchor");
  }
}

}  // namespace

Eigen::Vector3d geodetic_to_ecef(const LatLonAlt& lla) {
  const double sl = std::sin(lla.lat * kDeg), cl = std::cos(lla.lat * kDeg);
  const double so = std::sin(lla.lon * kDeg), co = std::cos(lla.lon * kDeg);
  const double n = kSemiMajor / std::sqrt(1.0 - kEccSq * sl * sl);
  return {(n + lla.alt) * cl * co, (n + lla.alt) * cl * so,
          (n * (1.0 - kEccSq) + lla.alt) * sl};
}

LatLonAlt ecef_to_geodetic(const Eigen::Vector3d& ecef) {
  const double x = ecef.x(), y = ecef.y(), z = ecef.z();
  const double p = std::hypot(x, y);
  const double lon = std::atan2(y, x);
  // Fixed-point iteration on latitude; converges to < 1e-12 rad in a handful of steps
  // for terrestrial heights.
  double lat = std::atan2(z, p * (1.0 - kEccSq));
  double alt = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double sl = std::sin(lat);
    const double n = kSemiMajor / std::sqrt(1.0 - kEccSq * sl * sl);
    alt = p / std::cos(lat) - n;
    const double next = std::atan2(z, p * (1.0 - kEccSq * n / (n + alt)));
    if (std::abs(next - lat) < 1e-14) {
      lat = next;
      break;
    }
    lat = next;
  }
  const double sl = std::sin(lat);
  const double n = kSemiMajor / std::sqrt(1.0 - kEccSq * sl * sl);
  alt = std::abs(std::cos(lat)) > 1e-10 ? p / std::cos(lat) - n
                                        : std::abs(z) - n * (1.0 - kEccSq);
  return {lat / kDeg, lon / kDeg, alt};
}

Eigen::Vector3d wgs84_to_enu(double lat, double lon, double alt, const GeoAnchor& anchor) {
  anchor.validate();
  check_window(lat, lon, anchor);
  const Eigen::Vector3d origin = geodetic_to_ecef({anchor.lat0, anchor.lon0, anchor.alt0});
  const Eigen::Vector3d p = geodetic_to_ecef({lat, lon, alt});
  return ecef_to_enu_rotation(anchor.lat0, anchor.lon0) * (p - origin);
}

LatLonAlt enu_to_wgs84(const Eigen::Vector3d& enu, const GeoAnchor& anchor) {
  anchor.validate();
  if (!enu.allFinite()) throw RangeError("non-finite ENU coordinate");
  const Eigen::Vector3d origin = geodetic_to_ecef({anchor.lat0, anchor.lon0, anchor.alt0});
  const Eigen::Vector3d ecef =
      origin + ecef_to_enu_rotation(anchor.lat0, anchor.lon0).transpose() * enu;
  LatLonAlt out = ecef_to_geodetic(ecef);
  check_window(out.lat, out.lon, anchor);
  return out;
}

int utm_zone_for(double lon) {
  const double wrapped = lon - 360.0 * std::floor((lon + 180.0) / 360.0);
  int zone = static_cast<int>(std::floor((wrapped + 180.0) / 6.0)) + 1;
  return std::clamp(zone, 1, 60);
}

int utm_epsg_for(double lat, double lon) {
  return (lat >= 0.0 ? 32600 : 32700) + utm_zone_for(lon);
}

bool is_utm_epsg(int epsg) {
  return (epsg > 32600 && epsg <= 32660) || (epsg > 32700 && epsg <= 32760);
}

Projected utm_forward(double lat, double lon, int zone, bool north) {
  constexpr double k0 = 0.9996;
  constexpr double n = kFlattening / (2.0 - kFlattening);
  constexpr double n2 = n * n, n3 = n2 * n;
  constexpr double big_a = kSemiMajor / (1.0 + n) * (1.0 + n2 / 4.0 + n2 * n2 / 64.0);
  constexpr double alpha[3] = {n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0,
                               13.0 * n2 / 48.0 - 3.0 * n3 / 5.0, 61.0 * n3 / 240.0};
  const double lon0 = zone * 6.0 - 183.0;
  const double phi = lat * kDeg;
  const double dlam = wrap_lon_diff(lon - lon0) * kDeg;
  const double c = 2.0 * std::sqrt(n) / (1.0 + n);
  const double t = std::sinh(std::atanh(std::sin(phi)) - c * std::atanh(c * std::sin(phi)));
  const double xi = std::atan2(t, std::cos(dlam));
  const double eta = std::atanh(std::sin(dlam) / std::sqrt(1.0 + t * t));
  double e = eta, nn = xi;
  for (int j = 1; j <= 3; ++j) {
    e += alpha[j - 1] * std::cos(2.0 * j * xi) * std::sinh(2.0 * j * eta);
    nn += alpha[j - 1] * std::sin(2.0 * j * xi) * std::cosh(2.0 * j * eta);
  }
  return {500000.0 + k0 * big_a * e, (north ? 0.0 : 10000000.0) + k0 * big_a * nn};
}

Projected project_epsg(double lat, double lon, int epsg) {
  if (!is_utm_epsg(epsg)) {
    throw ArgumentError("unsupported projected CRS EPSG:" + std::to_string(epsg) +
                        " (only WGS84 / UTM 326xx and 327xx)");
  }
  const bool north = epsg < 32700;
  return utm_forward(lat, lon, epsg % 100, north);
}

}  // namespace forestgeo::geodesy
