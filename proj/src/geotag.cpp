#include "forestgeo/geotag.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "forestgeo/detail/cluster.hpp"
#include "forestgeo/errors.hpp"
#include "forestgeo/geodesy.hpp"
#include "forestgeo/geometry.hpp"

namespace forestgeo::geotag {
namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

/// Buckets point indices on a coarse planar grid for range queries.
class PlanarIndex {
 public:
  PlanarIndex(const PointCloud& cloud, double cell) : cell_(cell) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      buckets_[key(cloud.points[i].x, cloud.points[i].y)].push_back(i);
    }
  }

  template <typename Fn>
  void for_each_near(double x, double y, double radius, Fn&& fn) const {
    const auto span = static_cast<long>(std::ceil(radius / cell_));
    const long cx = coord(x), cy = coord(y);
    for (long dx = -span; dx <= span; ++dx) {
      for (long dy = -span; dy <= span; ++dy) {
        auto it = buckets_.find(pack(cx + dx, cy + dy));
        if (it == buckets_.end()) continue;
        for (std::size_t i : it->second) fn(i);
      }
    }
  }

 private:
  long coord(double v) const { return static_cast<long>(std::floor(v / cell_)); }
  static std::uint64_t pack(long a, long b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
  }
  std::uint64_t key(double x, double y) const { return pack(coord(x), coord(y)); }

  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets_;
};

}  // namespace

void CameraModel::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw ArgumentError("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ArgumentError("camera image size must be positive");
  if (!(cx > 0.0 && cx < width && cy > 0.0 && cy < height)) {
    throw ArgumentError("principal point outside the image");
  }
  const Eigen::Matrix3d r = cam_from_lidar.linear();
  if ((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
      r.determinant() < 0.0) {
    throw ArgumentError("camera extrinsic rotation is not orthonormal");
  }
}

CameraModel read_camera(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CameraModel cam;
  try {
    const auto j = nlohmann::json::parse(in);
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    const auto& t = j.at("T_cam_lidar");
    if (!t.is_array() || t.size() != 16) throw ParseError("T_cam_lidar must have 16 entries");
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = t[static_cast<std::size_t>(4 * r + c)].get<double>();
    cam.cam_from_lidar.matrix() = m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid camera file: ") + e.what());
  }
  cam.validate();
  return cam;
}

void write_camera(const CameraModel& cam, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  std::vector<double> m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m.push_back(cam.cam_from_lidar.matrix()(r, c));
  j["T_cam_lidar"] = m;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::optional<Pixel> project_point(const Eigen::Vector3d& p_map, const Se3Pose& pose,
                                   const CameraModel& cam) {
  const Eigen::Vector3d p_lidar = pose.rotation.conjugate() * (p_map - pose.translation);
  const Eigen::Vector3d p_cam = cam.cam_from_lidar * p_lidar;
  if (p_cam.z() <= kMinDepth) return std::nullopt;
  return Pixel{cam.fx * p_cam.x() / p_cam.z() + cam.cx, cam.fy * p_cam.y() / p_cam.z() + cam.cy,
               p_cam.z()};
}

Eigen::Vector3d unproject(const Pixel& px, const Se3Pose& pose, const CameraModel& cam) {
  const Eigen::Vector3d p_cam((px.u - cam.cx) / cam.fx * px.depth,
                              (px.v - cam.cy) / cam.fy * px.depth, px.depth);
  const Eigen::Vector3d p_lidar = cam.cam_from_lidar.inverse() * p_cam;
  return pose.rotation * p_lidar + pose.translation;
}

SemanticOverlay tag_points(const PointCloud& map, std::span<const Se3Pose> trajectory,
                           std::span<const Detection> detections, const CameraModel& cam,
                           const TagConfig& cfg) {
  cam.validate();
  SemanticOverlay overlay;
  if (detections.empty() || map.empty()) return overlay;
  const PlanarIndex index(map, std::max(cfg.max_range / 4.0, 1.0));
  // index -> (confidence, class)
  std::map<std::size_t, std::pair<double, std::string>> best;

  struct Candidate {
    std::size_t index;
    long cell;
    double depth;
  };
  std::vector<Candidate> candidates;
  for (const auto& det : detections) {
    Se3Pose pose;
    try {
      pose = interpolate_pose(trajectory, det.t);
    } catch (const RangeError&) {
      ++overlay.skipped_detections;
      continue;
    }
    const auto cells_x = static_cast<long>(std::ceil(det.bbox.w / cfg.depth_cell_px));
    const auto cells_y = static_cast<long>(std::ceil(det.bbox.h / cfg.depth_cell_px));
    std::vector<double> zbuf(static_cast<std::size_t>(cells_x * cells_y),
                             std::numeric_limits<double>::infinity());
    candidates.clear();
    const double r2 = cfg.max_range * cfg.max_range;
    index.for_each_near(pose.translation.x(), pose.translation.y(), cfg.max_range,
                        [&](std::size_t i) {
                          const Eigen::Vector3d p = map.points[i].xyz();
                          if ((p - pose.translation).squaredNorm() > r2) return;
                          const auto px = project_point(p, pose, cam);
                          if (!px) return;
                          if (!(px->u >= 0.0 && px->u < cam.width && px->v >= 0.0 &&
                                px->v < cam.height)) {
                            return;
                          }
                          if (!det.bbox.contains(px->u, px->v)) return;
                          const long cx = std::min(
                              cells_x - 1,
                              static_cast<long>((px->u - det.bbox.x) / cfg.depth_cell_px));
                          const long cy = std::min(
                              cells_y - 1,
                              static_cast<long>((px->v - det.bbox.y) / cfg.depth_cell_px));
                          const long cell = cy * cells_x + cx;
                          auto& z = zbuf[static_cast<std::size_t>(cell)];
                          z = std::min(z, px->depth);
                          candidates.push_back({i, cell, px->depth});
                        });
    for (const auto& c : candidates) {
      if (c.depth > zbuf[static_cast<std::size_t>(c.cell)] + cfg.depth_tolerance) continue;
      auto [it, inserted] = best.try_emplace(c.index, det.conf, det.class_name);
      if (!inserted && det.conf > it->second.first) it->second = {det.conf, det.class_name};
    }
  }
  overlay.points.reserve(best.size());
  for (const auto& [i, v] : best) overlay.points.push_back({i, map.points[i], v.second, v.first});
  return overlay;
}

PointCloud overlay_to_cloud(const PointCloud& map, const SemanticOverlay& overlay) {
  PointCloud out = map;
  out.colors.assign(map.size(), Rgb{128, 128, 128});
  if (map.has_intensity) {
    for (std::size_t i = 0; i < map.size(); ++i) {
      const auto g = static_cast<std::uint8_t>(
          std::lround(std::clamp(static_cast<double>(map.points[i].intensity), 0.0, 255.0)));
      out.colors[i] = {g, g, g};
    }
  }
  for (const auto& t : overlay.points) {
    if (t.index >= map.size()) throw ArgumentError("overlay point not in map");
    const auto red = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(t.confidence, 0.0, 1.0)));
    out.colors[t.index] = {red, 0, 0};
  }
  return out;
}

GridField rasterize_overlay(const SemanticOverlay& overlay, double resolution,
                            const GeoAnchor& anchor) {
  if (overlay.empty()) throw DegenerateError("cannot rasterize an empty overlay");
  anchor.validate();
  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_x;
  for (const auto& t : overlay.points) {
    min_x = std::min(min_x, t.point.x);
    max_x = std::max(max_x, t.point.x);
    min_y = std::min(min_y, t.point.y);
    max_y = std::max(max_y, t.point.y);
  }
  GridField field(GridGeometry::covering(min_x, min_y, max_x, max_y, resolution), kNoData);
  field.anchor = anchor;
  for (const auto& t : overlay.points) {
    if (auto idx = field.geometry.cell_of(t.point.x, t.point.y)) {
      field.values[*idx] = std::max(field.values[*idx], t.confidence);
    }
  }
  return field;
}

std::string kml_document(const SemanticOverlay& overlay, const GeoAnchor& anchor,
                         double cluster_radius) {
  anchor.validate();
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(overlay.points.size());
  for (const auto& t : overlay.points) pts.push_back(t.point.xyz());
  std::ostringstream kml;
  kml << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<kml xmlns=\"http://www.opengis.net/kml/2.2\">\n"
      << "<Document>\n"
      << "<name>semantic overlay</name>\n";
  for (const auto& members : detail::cluster_by_radius(pts, cluster_radius, true)) {
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    const TaggedPoint* top = nullptr;
    for (std::size_t i : members) {
      centroid += pts[i];
      if (!top || overlay.points[i].confidence > top->confidence) top = &overlay.points[i];
    }
    centroid /= static_cast<double>(members.size());
    const auto lla = geodesy::enu_to_wgs84(centroid, anchor);
    kml << "<Placemark>\n"
        << "<name>" << xml_escape(top->class_name) << " " << fixed(top->confidence, 2)
        << "</name>\n"
        << "<description>points: " << members.size()
        << "; max confidence: " << fixed(top->confidence, 3) << "</description>\n"
        << "<Point><coordinates>" << fixed(lla.lon, 9) << "," << fixed(lla.lat, 9)
        << ",0</coordinates></Point>\n"
        << "</Placemark>\n";
  }
  kml << "</Document>\n</kml>\n";
  return kml.str();
}

void write_kml(const SemanticOverlay& overlay, const GeoAnchor& anchor, double cluster_radius,
               const std::filesystem::path& path) {
  if (overlay.empty()) throw DegenerateError("cannot export an empty overlay");
  const std::string doc = kml_document(overlay, anchor, cluster_radius);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc;
}

}  // namespace forestgeo::geotag
