#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace forestgeo {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  // Reflectance in [0, 255]; meaningful only when the owning cloud has_intensity.
  float intensity = 0.0f;

  Eigen::Vector3d xyz() const { return {x, y, z}; }
};

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct GeoAnchor {
  double lat0 = 0.0;  // deg
  double lon0 = 0.0;  // deg
  double alt0 = 0.0;  // m, ellipsoidal
  int epsg = 0;       // projected CRS used for raster export; 0 = derive UTM zone

  /// Throws RangeError when lat/lon are outside their valid domain.
  void validate() const;
  /// EPSG code of the projected CRS, resolving 0 to the anchor's UTM zone.
  int projected_epsg() const;
};

enum class Frame { kMap, kSensor, kEnu };

struct PointCloud {
  std::vector<Point3> points;
  bool has_intensity = false;
  // Either empty or one entry per point.
  std::vector<Rgb> colors;
  Frame frame = Frame::kMap;
  std::optional<GeoAnchor> anchor;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_colors() const { return !colors.empty(); }

  /// Checks finiteness, intensity range, color count, and the ENU/anchor rule.
  void validate() const;
};

struct Se3Pose {
  double t = 0.0;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();

  Eigen::Isometry3d isometry() const;
};

/// Planar rigid transform x -> R(psi) x + [tx, ty]. psi is kept in (-pi, pi].
class Se2Transform {
 public:
  Se2Transform() = default;
  Se2Transform(double tx, double ty, double psi);

  static Se2Transform identity() { return {}; }

  double tx() const { return tx_; }
  double ty() const { return ty_; }
  double psi() const { return psi_; }

  Eigen::Vector2d translation() const { return {tx_, ty_}; }
  Eigen::Matrix2d rotation() const;

  Eigen::Vector2d apply(const Eigen::Vector2d& p) const;
  Se2Transform inverse() const;
  /// (a * b).apply(p) == a.apply(b.apply(p))
  friend Se2Transform operator*(const Se2Transform& a, const Se2Transform& b);

 private:
  double tx_ = 0.0;
  double ty_ = 0.0;
  double psi_ = 0.0;
};

struct GnssFix {
  double t = 0.0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // ENU, m
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();  // m^2, ENU axes

  /// Symmetric to 1e-9 and positive definite.
  bool covariance_valid() const;
};

struct BoundingBox {
  double x = 0.0;  // px, origin top-left
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  bool contains(double u, double v) const {
    return u >= x && u < x + w && v >= y && v < y + h;
  }
};

struct Detection {
  double t = 0.0;
  std::string image_id;
  std::string class_name;
  double conf = 0.0;
  BoundingBox bbox;
};

/// Planar trunk positions in the map frame.
struct TrunkSet {
  std::vector<Eigen::Vector2d> positions;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
};

}  // namespace forestgeo
