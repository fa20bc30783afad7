#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "forestgeo/grid.hpp"
#include "forestgeo/types.hpp"

namespace forestgeo::geotag {

/// Pinhole camera on pre-rectified images, rigidly mounted to the LiDAR.
struct CameraModel {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;  // px
  int width = 0, height = 0;                      // px
  Eigen::Isometry3d cam_from_lidar = Eigen::Isometry3d::Identity();

  void validate() const;
};

/// JSON {"fx","fy","cx","cy","width","height","T_cam_lidar": [16 row-major]}.
CameraModel read_camera(const std::filesystem::path& path);
void write_camera(const CameraModel& cam, const std::filesystem::path& path);

// Points closer than this to the image plane are treated as behind the camera.
inline constexpr double kMinDepth = 0.1;

struct Pixel {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;  // camera-frame Z, m
};

/// Map point -> pixel for a LiDAR pose `pose` (sensor in map). nullopt when the
/// point is behind the camera (Z <= kMinDepth).
std::optional<Pixel> project_point(const Eigen::Vector3d& p_map, const Se3Pose& pose,
                                   const CameraModel& cam);
/// Inverse of project_point for a known depth.
Eigen::Vector3d unproject(const Pixel& px, const Se3Pose& pose, const CameraModel& cam);

struct TaggedPoint {
  std::size_t index = 0;  // into the map cloud
  Point3 point;
  std::string class_name;
  double confidence = 0.0;
};

struct SemanticOverlay {
  std::vector<TaggedPoint> points;  // ascending index
  std::size_t skipped_detections = 0;

  bool empty() const { return points.empty(); }
};

struct TagConfig {
  double max_range = 40.0;       // m from the sensor
  double depth_cell_px = 4.0;    // z-buffer cell size
  double depth_tolerance = 1.5;  // m behind the nearest surface in a cell
};

/// Labels map points that project into detection boxes, with a per-detection depth
/// test against foreground occluders. Confidence per point is the max over detections.
SemanticOverlay tag_points(const PointCloud& map, std::span<const Se3Pose> trajectory,
                           std::span<const Detection> detections, const CameraModel& cam,
                           const TagConfig& cfg = {});

/// Map cloud colored for display: tagged points red scaled by confidence, the rest
/// grayscale by intensity.
PointCloud overlay_to_cloud(const PointCloud& map, const SemanticOverlay& overlay);

inline constexpr double kNoData = -1.0;

/// Max confidence per cell; empty cells hold kNoData.
GridField rasterize_overlay(const SemanticOverlay& overlay, double resolution,
                            const GeoAnchor& anchor);

/// KML 2.2 document with one placemark per cluster of overlay points.
std::string kml_document(const SemanticOverlay& overlay, const GeoAnchor& anchor,
                         double cluster_radius = 3.0);
void write_kml(const SemanticOverlay& overlay, const GeoAnchor& anchor, double cluster_radius,
               const std::filesystem::path& path);

}  // namespace forestgeo::geotag
