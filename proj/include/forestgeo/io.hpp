#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "forestgeo/types.hpp"

namespace forestgeo::io {

enum class PlyFormat { kBinaryLittleEndian, kAscii };

/// Reads `vertex` elements with float x/y/z, optional float intensity and optional
/// uchar red/green/blue. Binary little-endian and ASCII encodings are accepted.
PointCloud read_ply(const std::filesystem::path& path);
void write_ply(const PointCloud& cloud, const std::filesystem::path& path,
               PlyFormat format = PlyFormat::kBinaryLittleEndian);

// Trajectory CSV: t,tx,ty,tz,qx,qy,qz,qw
std::vector<Se3Pose> read_trajectory(const std::filesystem::path& path);
void write_trajectory(const std::vector<Se3Pose>& trajectory, const std::filesystem::path& path);

struct GnssStream {
  GeoAnchor anchor;
  std::vector<GnssFix> fixes;  // ENU
};

/// GNSS CSV: t,lat,lon,alt,cxx,cxy,cxz,cyy,cyz,czz. Positions are converted to ENU
/// about `anchor`, or about the first fix when no anchor is given.
GnssStream read_gnss(const std::filesystem::path& path,
                     const std::optional<GeoAnchor>& anchor = std::nullopt);
void write_gnss(const std::vector<GnssFix>& fixes, const GeoAnchor& anchor,
                const std::filesystem::path& path);

/// JSON lines: {"t", "image", "class", "conf", "bbox": [x, y, w, h]}. Several
/// detections may share one timestamp (one image); time must not decrease.
std::vector<Detection> read_detections(const std::filesystem::path& path);
void write_detections(const std::vector<Detection>& detections,
                      const std::filesystem::path& path);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

}  // namespace forestgeo::io
