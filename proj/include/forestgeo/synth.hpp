#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "forestgeo/geotag.hpp"
#include "forestgeo/types.hpp"

namespace forestgeo::synth {

struct ForestSpec {
  double extent_x = 100.0;  // m, scene centered on the origin
  double extent_y = 100.0;
  std::size_t n_trees = 50;
  double trunk_radius_min = 0.2, trunk_radius_max = 0.4;  // m
  double crown_radius_min = 2.0, crown_radius_max = 4.0;  // m
  double height_min = 8.0, height_max = 20.0;             // m
  double slope = 0.0;             // dz/dx of the ground plane
  double point_density = 50.0;    // terrestrial trunk surface, pts/m^2
  double aerial_density = 10.0;   // aerial samples per m^2 of ground plane
  double understory_density = 0.5;
  /// Spacing of a regular lattice of short posts seen by both sensors; 0 disables.
  double decoy_spacing = 0.0;
  double invasive_fraction = 0.2;
  /// Bounds of the random SE(2) offset between the terrestrial map frame and the
  /// aerial frame, and of the vertical offset.
  double max_offset = 7.0;                     // m
  double max_yaw = 0.5235987755982988;         // rad
  double max_dz = 3.0;                         // m
  GeoAnchor anchor{40.0, -80.0, 300.0, 0};
  std::uint64_t seed = 7;

  void validate() const;
};

struct Tree {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double trunk_radius = 0.0;
  double crown_sigma_x = 0.0;  // m, along the crown's own axes
  double crown_sigma_y = 0.0;
  double crown_angle = 0.0;    // rad
  double height = 0.0;
  bool invasive = false;
};

// Point labels: tree index, or one of these.
inline constexpr int kLabelGround = -1;
inline constexpr int kLabelUnderstory = -2;
inline constexpr int kLabelDecoy = -3;

struct SyntheticScene {
  ForestSpec spec;
  std::vector<Tree> trees;
  PointCloud aerial_cloud;       // ENU frame
  PointCloud terrestrial_cloud;  // terrestrial map frame
  std::vector<int> aerial_labels;
  std::vector<int> terrestrial_labels;
  TrunkSet trunk_truth;          // ENU frame
  /// Maps terrestrial map coordinates into the aerial frame.
  Se2Transform true_alignment;
  double true_dz = 0.0;          // aerial z = terrestrial z + true_dz
  /// Filled by callers that also generate a trajectory.
  std::vector<Se3Pose> ground_truth_traj;
};

/// Ground elevation of the scene at (x, y) in the ENU frame.
double ground_height(const ForestSpec& spec, double x, double y);
/// Canopy height above ground of one tree's crown surface at (x, y).
double crown_height(const Tree& tree, double x, double y);

SyntheticScene generate_forest(const ForestSpec& spec);

struct OdomNoiseSpec {
  double scale_bias = 0.0;      // fractional forward-distance error
  double yaw_drift = 0.0;       // rad per meter travelled
  double sigma_xy = 0.0;        // m per step
  double sigma_z = 0.0;         // m per step
  double sigma_yaw = 0.0;       // rad per step

  bool is_zero() const;
};

struct GnssNoiseSpec {
  /// Horizontal sigma per segment, log-uniform in [sigma_min, sigma_max].
  double sigma_min = 0.02;
  double sigma_max = 0.02;
  double segment_min = 20.0;  // s
  double segment_max = 60.0;
  double vertical_factor = 1.5;
  double rate_hz = 1.0;
};

struct TrajectorySpec {
  double length = 1000.0;       // m
  double speed = 1.0;           // m/s
  double rate_hz = 10.0;
  double sensor_height = 1.5;   // m above ground
  double margin = 5.0;          // m from the scene edge
  OdomNoiseSpec odom;
  GnssNoiseSpec gnss;
};

struct TrajectoryData {
  std::vector<Se3Pose> truth;
  std::vector<Se3Pose> odometry;
  std::vector<GnssFix> gnss;  // clean apart from the specified noise
};

/// Lawn-mower path with semicircular turns. Throws ArgumentError when the path
/// does not fit inside the scene.
TrajectoryData generate_trajectory(const ForestSpec& forest, const TrajectorySpec& spec,
                                   std::uint64_t seed);
TrajectoryData generate_trajectory(const SyntheticScene& scene, const TrajectorySpec& spec,
                                   std::uint64_t seed);

/// Forward-looking camera: optical axis along the sensor x axis, image y down.
geotag::CameraModel default_camera();

struct DetectionSpec {
  double interval = 1.0;        // s between images
  double max_range = 25.0;      // m
  double conf_min = 0.6, conf_max = 0.95;
  std::string class_name = "tree_of_heaven";
};

/// Boxes around the crowns of invasive trees visible from the ground-truth path.
std::vector<Detection> generate_detections(const SyntheticScene& scene,
                                           std::span<const Se3Pose> truth,
                                           const geotag::CameraModel& cam,
                                           const DetectionSpec& spec, std::uint64_t seed);

}  // namespace forestgeo::synth
