#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "forestgeo/config.hpp"
#include "forestgeo/geotag.hpp"
#include "forestgeo/synth.hpp"

namespace forestgeo {

/// A synthetic scene with everything the pipeline consumes.
struct SceneBundle {
  synth::SyntheticScene scene;
  synth::TrajectoryData trajectory;
  std::vector<Detection> detections;
  geotag::CameraModel camera;
};

/// Scene, trajectory and detections for the end-to-end demo.
SceneBundle make_demo_bundle(const synth::ForestSpec& forest, const synth::TrajectorySpec& traj);
synth::TrajectorySpec demo_trajectory_spec();

/// Writes aerial.ply, terrestrial.ply, trunks.csv, truth_trajectory.csv, odometry.csv,
/// gnss.csv, detections.jsonl, camera.json, scene.json and demo.toml into `dir`.
void write_scene_bundle(const SceneBundle& bundle, const std::filesystem::path& dir);

struct PipelineResult {
  std::vector<std::string> outputs;  // file names inside the output directory
  std::string report_json;
};

/// pgo -> fields -> align (optional) -> geotag -> eval. Writes fused.csv,
/// overlay.ply, layer.tif, layer.kml, report.json and manifest.json.
PipelineResult run_pipeline(const PipelineConfig& cfg, std::ostream* log = nullptr);

}  // namespace forestgeo
