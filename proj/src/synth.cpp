#include "forestgeo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <unordered_map>

#include "forestgeo/detail/rng.hpp"
#include "forestgeo/errors.hpp"
#include "forestgeo/geometry.hpp"

namespace forestgeo::synth {
namespace {

using detail::Rng;
constexpr double kPi = std::numbers::pi;

// Fraction of tree height above which the aerial sensor sees the crown, and below
// which the terrestrial sensor does.
constexpr double kAerialCrownFloor = 0.6;
constexpr double kTerrestrialCrownCeiling = 0.7;
constexpr double kTrunkTop = 0.6;
constexpr double kCanopyPenetration = 0.25;
constexpr double kRangeNoise = 0.02;  // m
constexpr double kDecoyRadius = 0.5;
constexpr double kDecoyHeight = 0.6;

/// Trees bucketed on a coarse grid for "which crowns cover (x, y)" queries.
class TreeIndex {
 public:
  TreeIndex(const std::vector<Tree>& trees, double reach) : trees_(trees), cell_(reach) {
    for (std::size_t i = 0; i < trees.size(); ++i) {
      buckets_[key(cell(trees[i].position.x()), cell(trees[i].position.y()))].push_back(i);
    }
  }

  /// Index of the tree with the highest visible crown at (x, y), or -1.
  int top_crown(double x, double y, double& height) const {
    int best = -1;
    height = 0.0;
    const long cx = cell(x), cy = cell(y);
    for (long dx = -1; dx <= 1; ++dx) {
      for (long dy = -1; dy <= 1; ++dy) {
        auto it = buckets_.find(key(cx + dx, cy + dy));
        if (it == buckets_.end()) continue;
        for (std::size_t i : it->second) {
          const double h = crown_height(trees_[i], x, y);
          if (h < kAerialCrownFloor * trees_[i].height) continue;
          if (h > height || (h == height && static_cast<int>(i) < best)) {
            height = h;
            best = static_cast<int>(i);
          }
        }
      }
    }
    return best;
  }

 private:
  long cell(double v) const { return static_cast<long>(std::floor(v / cell_)); }
  static std::uint64_t key(long a, long b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
  }

  const std::vector<Tree>& trees_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets_;
};

float intensity(Rng& rng, double mean) {
  return static_cast<float>(std::clamp(rng.normal(mean, 8.0), 0.0, 255.0));
}

std::vector<Eigen::Vector2d> decoy_lattice(const ForestSpec& spec) {
  std::vector<Eigen::Vector2d> out;
  if (spec.decoy_spacing <= 0.0) return out;
  const double hx = spec.extent_x / 2.0 - kDecoyRadius;
  const double hy = spec.extent_y / 2.0 - kDecoyRadius;
  const auto nx = static_cast<long>(std::floor(hx / spec.decoy_spacing));
  const auto ny = static_cast<long>(std::floor(hy / spec.decoy_spacing));
  for (long j = -ny; j <= ny; ++j) {
    for (long i = -nx; i <= nx; ++i) {
      out.emplace_back(static_cast<double>(i) * spec.decoy_spacing,
                       static_cast<double>(j) * spec.decoy_spacing);
    }
  }
  return out;
}

/// Points on a vertical cylinder surface, stratified over (angle, height) so that any
/// height band receives close to density * area points.
void sample_cylinder(Rng& rng, const Eigen::Vector2d& center, double radius, double z0,
                     double z1, double density, std::vector<Eigen::Vector3d>& out) {
  const double pitch = 1.0 / std::sqrt(density);
  const auto rings = std::max<long>(1, std::lround((z1 - z0) / pitch));
  const auto cols = std::max<long>(3, std::lround(2.0 * kPi * radius / pitch));
  const double dz = (z1 - z0) / static_cast<double>(rings);
  const double da = 2.0 * kPi / static_cast<double>(cols);
  for (long k = 0; k < rings; ++k) {
    for (long a = 0; a < cols; ++a) {
      const double ang = (static_cast<double>(a) + rng.uniform()) * da;
      const double z = z0 + (static_cast<double>(k) + rng.uniform()) * dz;
      const double r = radius + rng.normal(0.0, 0.01);
      out.emplace_back(center.x() + r * std::cos(ang), center.y() + r * std::sin(ang), z);
    }
  }
}

}  // namespace

void ForestSpec::validate() const {
  auto ordered = [](double lo, double hi, const char* what) {
    if (!(lo > 0.0 && hi >= lo && std::isfinite(hi))) {
      throw ArgumentError(std::string(what) + " range must be positive and ordered");
    }
  };
  if (!(extent_x > 0.0 && extent_y > 0.0)) throw ArgumentError("extent must be positive");
  if (n_trees < 1) throw ArgumentError("n_trees must be at least 1");
  ordered(trunk_radius_min, trunk_radius_max, "trunk radius");
  ordered(crown_radius_min, crown_radius_max, "crown radius");
  ordered(height_min, height_max, "height");
  if (!(point_density > 0.0 && aerial_density > 0.0 && understory_density >= 0.0)) {
    throw ArgumentError("point densities must be positive");
  }
  if (!std::isfinite(slope)) throw ArgumentError("slope must be finite");
  if (decoy_spacing < 0.0) throw ArgumentError("decoy spacing must be non-negative");
  if (!(invasive_fraction >= 0.0 && invasive_fraction <= 1.0)) {
    throw ArgumentError("invasive fraction must be in [0, 1]");
  }
  if (!(max_offset >= 0.0 && max_yaw >= 0.0 && max_yaw <= kPi && max_dz >= 0.0)) {
    throw ArgumentError("alignment offset bounds must be non-negative");
  }
  anchor.validate();
}

double ground_height(const ForestSpec& spec, double x, double /*y*/) { return spec.slope * x; }

double crown_height(const Tree& tree, double x, double y) {
  const double dx = x - tree.position.x();
  const double dy = y - tree.position.y();
  const double c = std::cos(tree.crown_angle), s = std::sin(tree.crown_angle);
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return tree.height * std::exp(-(u * u / (2.0 * tree.crown_sigma_x * tree.crown_sigma_x) +
                                  v * v / (2.0 * tree.crown_sigma_y * tree.crown_sigma_y)));
}

SyntheticScene generate_forest(const ForestSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  SyntheticScene scene;
  scene.spec = spec;

  // Poisson-disk placement by dart throwing.
  {
    Rng rng = root.split("placement");
    const double spacing = 2.0 * spec.crown_radius_max * 0.6;
    const double hx = spec.extent_x / 2.0 - spec.crown_radius_max;
    const double hy = spec.extent_y / 2.0 - spec.crown_radius_max;
    if (!(hx > 0.0 && hy > 0.0)) throw ArgumentError("extent too small for the crown size");
    const std::size_t max_attempts = 2000 * spec.n_trees;
    std::size_t attempts = 0;
    while (scene.trees.size() < spec.n_trees) {
      if (++attempts > max_attempts) {
        throw ArgumentError("extent too small for " + std::to_string(spec.n_trees) +
                            " trees at the minimum spacing");
      }
      const Eigen::Vector2d p(rng.uniform(-hx, hx), rng.uniform(-hy, hy));
      const bool clear = std::all_of(scene.trees.begin(), scene.trees.end(), [&](const Tree& t) {
        return (t.position - p).norm() >= spacing;
      });
      if (!clear) continue;
      Tree tree;
      tree.position = p;
      scene.trees.push_back(tree);
    }
  }
  {
    Rng rng = root.split("trees");
    for (auto& tree : scene.trees) {
      tree.trunk_radius = rng.uniform(spec.trunk_radius_min, spec.trunk_radius_max);
      const double crown = rng.uniform(spec.crown_radius_min, spec.crown_radius_max);
      tree.crown_sigma_x = crown * rng.uniform(0.8, 1.0);
      tree.crown_sigma_y = crown * rng.uniform(0.8, 1.0);
      tree.crown_angle = rng.uniform(0.0, kPi);
      tree.height = rng.uniform(spec.height_min, spec.height_max);
      tree.invasive = rng.uniform() < spec.invasive_fraction;
    }
  }
  for (const auto& tree : scene.trees) scene.trunk_truth.positions.push_back(tree.position);
  const auto decoys = decoy_lattice(spec);

  // Aerial view: crown tops and ground, on a jittered grid.
  {
    Rng rng = root.split("aerial");
    const TreeIndex index(scene.trees, 4.0 * spec.crown_radius_max);
    const double pitch = 1.0 / std::sqrt(spec.aerial_density);
    const auto nx = static_cast<long>(std::floor(spec.extent_x / pitch));
    const auto ny = static_cast<long>(std::floor(spec.extent_y / pitch));
    auto& cloud = scene.aerial_cloud;
    cloud.has_intensity = true;
    cloud.frame = Frame::kEnu;
    cloud.anchor = spec.anchor;
    cloud.points.reserve(static_cast<std::size_t>(nx * ny));
    for (long j = 0; j < ny; ++j) {
      for (long i = 0; i < nx; ++i) {
        const double x = -spec.extent_x / 2.0 + (static_cast<double>(i) + rng.uniform()) * pitch;
        const double y = -spec.extent_y / 2.0 + (static_cast<double>(j) + rng.uniform()) * pitch;
        const double g = ground_height(spec, x, y);
        double h = 0.0;
        int label = index.top_crown(x, y, h);
        if (label >= 0 && rng.uniform() < kCanopyPenetration) label = kLabelGround;
        if (label < 0) {
          h = 0.0;
          label = kLabelGround;
          for (const auto& d : decoys) {
            if ((Eigen::Vector2d(x, y) - d).norm() <= kDecoyRadius) {
              h = kDecoyHeight;
              label = kLabelDecoy;
              break;
            }
          }
        }
        const double mean_i = label >= 0 ? 110.0 : (label == kLabelDecoy ? 120.0 : 50.0);
        cloud.points.push_back({x, y, g + h + rng.normal(0.0, kRangeNoise), intensity(rng, mean_i)});
        scene.aerial_labels.push_back(label);
      }
    }
  }

  // Terrestrial view in ENU, moved into the map frame at the end.
  {
    Rng rng = root.split("terrestrial");
    auto& cloud = scene.terrestrial_cloud;
    cloud.has_intensity = true;
    cloud.frame = Frame::kMap;
    auto add = [&](double x, double y, double z, double mean_i, int label) {
      cloud.points.push_back({x, y, z, intensity(rng, mean_i)});
      scene.terrestrial_labels.push_back(label);
    };

    const double ground_density = 0.2 * spec.point_density;
    const double pitch = 1.0 / std::sqrt(ground_density);
    const auto nx = static_cast<long>(std::floor(spec.extent_x / pitch));
    const auto ny = static_cast<long>(std::floor(spec.extent_y / pitch));
    for (long j = 0; j < ny; ++j) {
      for (long i = 0; i < nx; ++i) {
        const double x = -spec.extent_x / 2.0 + (static_cast<double>(i) + rng.uniform()) * pitch;
        const double y = -spec.extent_y / 2.0 + (static_cast<double>(j) + rng.uniform()) * pitch;
        add(x, y, ground_height(spec, x, y) + rng.normal(0.0, kRangeNoise), 40.0, kLabelGround);
      }
    }

    const auto n_under =
        static_cast<long>(std::lround(spec.extent_x * spec.extent_y * spec.understory_density));
    for (long k = 0; k < n_under; ++k) {
      const double x = rng.uniform(-spec.extent_x / 2.0, spec.extent_x / 2.0);
      const double y = rng.uniform(-spec.extent_y / 2.0, spec.extent_y / 2.0);
      add(x, y, ground_height(spec, x, y) + rng.uniform(0.1, 0.8), 70.0, kLabelUnderstory);
    }

    std::vector<Eigen::Vector3d> surface;
    for (const auto& d : decoys) {
      surface.clear();
      const double g = ground_height(spec, d.x(), d.y());
      sample_cylinder(rng, d, kDecoyRadius, g, g + kDecoyHeight, 0.5 * spec.point_density,
                      surface);
      for (const auto& p : surface) add(p.x(), p.y(), p.z(), 120.0, kLabelDecoy);
    }

    for (std::size_t i = 0; i < scene.trees.size(); ++i) {
      const auto& tree = scene.trees[i];
      const int label = static_cast<int>(i);
      const double g = ground_height(spec, tree.position.x(), tree.position.y());
      surface.clear();
      sample_cylinder(rng, tree.position, tree.trunk_radius, g, g + kTrunkTop * tree.height,
                      spec.point_density, surface);
      for (const auto& p : surface) {
        // Reflective tape band on marked (invasive) trees.
        const double above = p.z() - g;
        const bool tape = tree.invasive && above >= 1.25 && above <= 1.35;
        add(p.x(), p.y(), p.z(), tape ? 240.0 : 90.0, label);
      }
      const auto n_crown = static_cast<long>(
          std::lround(0.5 * spec.point_density * tree.crown_sigma_x * tree.crown_sigma_y));
      const double c = std::cos(tree.crown_angle), s = std::sin(tree.crown_angle);
      for (long k = 0; k < n_crown; ++k) {
        const double u = tree.crown_sigma_x * rng.normal();
        const double v = tree.crown_sigma_y * rng.normal();
        const double z =
            g + rng.uniform(0.5, kTerrestrialCrownCeiling) * tree.height;
        add(tree.position.x() + c * u - s * v, tree.position.y() + s * u + c * v, z, 60.0, label);
      }
    }

    Rng arng = root.split("alignment");
    const double tx = spec.max_offset > 0.0 ? arng.uniform(-spec.max_offset, spec.max_offset) : 0.0;
    const double ty = spec.max_offset > 0.0 ? arng.uniform(-spec.max_offset, spec.max_offset) : 0.0;
    const double psi = spec.max_yaw > 0.0 ? arng.uniform(-spec.max_yaw, spec.max_yaw) : 0.0;
    scene.true_alignment = Se2Transform(tx, ty, psi);
    scene.true_dz = spec.max_dz > 0.0 ? arng.uniform(-spec.max_dz, spec.max_dz) : 0.0;
    cloud = transform_cloud(cloud, scene.true_alignment.inverse(), -scene.true_dz);
  }
  return scene;
}

bool OdomNoiseSpec::is_zero() const {
  return scale_bias == 0.0 && yaw_drift == 0.0 && sigma_xy == 0.0 && sigma_z == 0.0 &&
         sigma_yaw == 0.0;
}

namespace {

/// Lawn-mower path: rows along x joined by semicircles, parameterized by arc length.
class LawnMower {
 public:
  LawnMower(const ForestSpec& forest, const TrajectorySpec& spec) {
    const double w = forest.extent_x - 2.0 * spec.margin;
    const double h = forest.extent_y - 2.0 * spec.margin;
    if (!(w > 0.0 && h >= 0.0)) throw ArgumentError("margin leaves no room for a path");
    for (int n = 1; n <= 200; ++n) {
      const double sp = n > 1 ? h / (n - 1) : 0.0;
      const double row = w - sp;
      if (row <= 0.0) continue;
      const double total = n * row + (n - 1) * kPi * sp / 2.0;
      if (total >= spec.length) {
        rows_ = n;
        spacing_ = sp;
        row_length_ = row;
        x0_ = -forest.extent_x / 2.0 + spec.margin + sp / 2.0;
        y0_ = -forest.extent_y / 2.0 + spec.margin;
        return;
      }
    }
    throw ArgumentError("a " + std::to_string(spec.length) + " m path does not fit the scene");
  }

  /// Planar position and heading at arc length s.
  void at(double s, double& x, double& y, double& yaw) const {
    const double r = spacing_ / 2.0;
    const double turn = kPi * r;
    for (int j = 0; j < rows_; ++j) {
      const double yj = y0_ + j * spacing_;
      const bool east = j % 2 == 0;
      if (s <= row_length_ || j == rows_ - 1) {
        x = east ? x0_ + s : x0_ + row_length_ - s;
        y = yj;
        yaw = east ? 0.0 : kPi;
        return;
      }
      s -= row_length_;
      if (s <= turn) {
        const double phi = s / r;
        const double cx = east ? x0_ + row_length_ : x0_;
        const double cy = yj + r;
        const double a = east ? -kPi / 2.0 + phi : -kPi / 2.0 - phi;
        x = cx + r * std::cos(a);
        y = cy + r * std::sin(a);
        yaw = wrap_angle(east ? a + kPi / 2.0 : a - kPi / 2.0);
        return;
      }
      s -= turn;
    }
  }

 private:
  int rows_ = 1;
  double spacing_ = 0.0;
  double row_length_ = 0.0;
  double x0_ = 0.0;
  double y0_ = 0.0;
};

Eigen::Quaterniond yaw_quat(double yaw) {
  return Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()));
}

}  // namespace

TrajectoryData generate_trajectory(const SyntheticScene& scene, const TrajectorySpec& spec,
                                   std::uint64_t seed) {
  return generate_trajectory(scene.spec, spec, seed);
}

TrajectoryData generate_trajectory(const ForestSpec& forest, const TrajectorySpec& spec,
                                   std::uint64_t seed) {
  if (!(spec.length > 0.0 && spec.speed > 0.0 && spec.rate_hz > 0.0)) {
    throw ArgumentError("trajectory length, speed and rate must be positive");
  }
  const auto& g = spec.gnss;
  if (!(g.sigma_min > 0.0 && g.sigma_max >= g.sigma_min && g.segment_min > 0.0 &&
        g.segment_max >= g.segment_min && g.rate_hz > 0.0 && g.rate_hz <= spec.rate_hz &&
        g.vertical_factor > 0.0)) {
    throw ArgumentError("invalid GNSS noise spec");
  }
  const LawnMower path(forest, spec);
  const Rng root(seed);
  TrajectoryData out;

  const double step = spec.speed / spec.rate_hz;
  const auto n = static_cast<std::size_t>(std::floor(spec.length / step + 1e-9)) + 1;
  out.truth.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    double x = 0.0, y = 0.0, yaw = 0.0;
    path.at(static_cast<double>(k) * step, x, y, yaw);
    Se3Pose p;
    p.t = static_cast<double>(k) / spec.rate_hz;
    p.translation = {x, y, ground_height(forest, x, y) + spec.sensor_height};
    p.rotation = yaw_quat(yaw);
    out.truth.push_back(p);
  }

  if (spec.odom.is_zero()) {
    out.odometry = out.truth;
  } else {
    Rng rng = root.split("odometry");
    const auto& o = spec.odom;
    out.odometry.push_back(out.truth.front());
    for (std::size_t k = 1; k < n; ++k) {
      const auto& a = out.truth[k - 1];
      const auto& b = out.truth[k];
      const Eigen::Quaterniond rel_q = a.rotation.conjugate() * b.rotation;
      Eigen::Vector3d rel_t = a.rotation.conjugate() * (b.translation - a.translation);
      const double dist = rel_t.norm();
      rel_t *= 1.0 + o.scale_bias;
      rel_t += Eigen::Vector3d(rng.normal(0.0, o.sigma_xy), rng.normal(0.0, o.sigma_xy),
                               rng.normal(0.0, o.sigma_z));
      const double dyaw = o.yaw_drift * dist + rng.normal(0.0, o.sigma_yaw);
      const auto& prev = out.odometry.back();
      Se3Pose p;
      p.t = b.t;
      p.translation = prev.translation + prev.rotation * rel_t;
      p.rotation = (prev.rotation * rel_q * yaw_quat(dyaw)).normalized();
      out.odometry.push_back(p);
    }
  }

  {
    Rng seg_rng = root.split("gnss-segments");
    Rng rng = root.split("gnss-noise");
    const auto stride =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(spec.rate_hz / g.rate_hz)));
    double segment_end = -1.0;
    double sigma = g.sigma_min;
    for (std::size_t k = 0; k < n; k += stride) {
      const auto& truth = out.truth[k];
      if (truth.t >= segment_end) {
        segment_end = truth.t + seg_rng.uniform(g.segment_min, g.segment_max);
        sigma = g.sigma_min == g.sigma_max
                    ? g.sigma_min
                    : std::exp(seg_rng.uniform(std::log(g.sigma_min), std::log(g.sigma_max)));
      }
      const double sz = g.vertical_factor * sigma;
      GnssFix fix;
      fix.t = truth.t;
      fix.position = truth.translation +
                     Eigen::Vector3d(sigma * rng.normal(), sigma * rng.normal(), sz * rng.normal());
      fix.covariance = Eigen::Vector3d(sigma * sigma, sigma * sigma, sz * sz).asDiagonal();
      out.gnss.push_back(fix);
    }
  }
  return out;
}

geotag::CameraModel default_camera() {
  geotag::CameraModel cam;
  cam.fx = cam.fy = 600.0;
  cam.width = 1280;
  cam.height = 720;
  cam.cx = 640.0;
  cam.cy = 360.0;
  Eigen::Matrix3d r;
  r << 0, -1, 0,
       0, 0, -1,
       1, 0, 0;
  cam.cam_from_lidar.linear() = r;
  cam.cam_from_lidar.translation() = Eigen::Vector3d(0.0, 0.05, -0.1);
  return cam;
}

std::vector<Detection> generate_detections(const SyntheticScene& scene,
                                           std::span<const Se3Pose> truth,
                                           const geotag::CameraModel& cam,
                                           const DetectionSpec& spec, std::uint64_t seed) {
  cam.validate();
  if (!(spec.interval > 0.0 && spec.max_range > 0.0 && spec.conf_min >= 0.0 &&
        spec.conf_max <= 1.0 && spec.conf_min <= spec.conf_max)) {
    throw ArgumentError("invalid detection spec");
  }
  std::vector<Detection> out;
  if (truth.empty()) return out;
  Rng rng = Rng(seed).split("detections");
  const double t0 = truth.front().t, t1 = truth.back().t;
  const auto frames = static_cast<long>(std::floor((t1 - t0) / spec.interval + 1e-9));
  for (long f = 0; f <= frames; ++f) {
    const double t = t0 + static_cast<double>(f) * spec.interval;
    const Se3Pose pose = interpolate_pose(truth, t);
    char image_id[32];
    std::snprintf(image_id, sizeof(image_id), "img_%06ld", f);
    for (const auto& tree : scene.trees) {
      if (!tree.invasive) continue;
      const Eigen::Vector2d d = tree.position - pose.translation.head<2>();
      if (d.norm() > spec.max_range) continue;
      const double g = ground_height(scene.spec, tree.position.x(), tree.position.y());
      const double reach = std::max(tree.crown_sigma_x, tree.crown_sigma_y);
      double u0 = 1e300, v0 = 1e300, u1 = -1e300, v1 = -1e300;
      bool visible = true;
      for (int k = 0; k < 16 && visible; ++k) {
        const double a = 2.0 * kPi * k / 16.0;
        for (int h = 0; h <= 4; ++h) {
          const Eigen::Vector3d p(tree.position.x() + reach * std::cos(a),
                                  tree.position.y() + reach * std::sin(a),
                                  g + tree.height * h / 4.0);
          const auto px = geotag::project_point(p, pose, cam);
          if (!px) {
            visible = false;
            break;
          }
          u0 = std::min(u0, px->u);
          u1 = std::max(u1, px->u);
          v0 = std::min(v0, px->v);
          v1 = std::max(v1, px->v);
        }
      }
      if (!visible) continue;
      const double full = (u1 - u0) * (v1 - v0);
      u0 = std::max(u0, 0.0);
      v0 = std::max(v0, 0.0);
      u1 = std::min(u1, static_cast<double>(cam.width));
      v1 = std::min(v1, static_cast<double>(cam.height));
      if (u1 <= u0 || v1 <= v0 || (u1 - u0) * (v1 - v0) < 0.2 * full) continue;
      Detection det;
      det.t = t;
      det.image_id = image_id;
      det.class_name = spec.class_name;
      det.conf = rng.uniform(spec.conf_min, spec.conf_max);
      det.bbox = {u0, v0, u1 - u0, v1 - v0};
      out.push_back(det);
    }
  }
  return out;
}

}  // namespace forestgeo::synth
