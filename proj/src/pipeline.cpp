#include "forestgeo/pipeline.hpp"

#include <fstream>
#include <iterator>
#include <numbers>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "forestgeo/align.hpp"
#include "forestgeo/errors.hpp"
#include "forestgeo/eval.hpp"
#include "forestgeo/fields.hpp"
#include "forestgeo/geometry.hpp"
#include "forestgeo/geotiff.hpp"
#include "forestgeo/grid.hpp"
#include "forestgeo/io.hpp"
#include "forestgeo/pgo.hpp"

#ifndef FORESTGEO_VERSION
#define FORESTGEO_VERSION "0.0.0"
#endif

namespace forestgeo {
namespace {

using json = nlohmann::ordered_json;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void require_file(const std::filesystem::path& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("paths.") + what, std::string("config key 'paths.") + what + "' is required");
  if (!std::filesystem::is_regular_file(path)) {
    throw IoError(std::string("missing input file: ") + path.string());
  }
}

json ate_json(const eval::AteReport& r) {
  return {{"mean_m", r.mean}, {"std_m", r.std}, {"n_matched", r.n_matched}};
}

std::string mode_name(pgo::GnssMode m) {
  switch (m) {
    case pgo::GnssMode::kNone: return "none";
    case pgo::GnssMode::kConstantScaling: return "constant";
    default: return "covariance";
  }
}

}  // namespace

synth::TrajectorySpec demo_trajectory_spec() {
  synth::TrajectorySpec t;
  t.length = 1000.0;
  t.odom.scale_bias = 0.01;
  t.odom.yaw_drift = 1e-4;
  t.odom.sigma_xy = 0.005;
  t.odom.sigma_z = 0.002;
  t.odom.sigma_yaw = 5e-4;
  t.gnss.sigma_min = 0.05;
  t.gnss.sigma_max = 1.0;
  return t;
}

SceneBundle make_demo_bundle(const synth::ForestSpec& forest, const synth::TrajectorySpec& traj) {
  SceneBundle b;
  b.scene = synth::generate_forest(forest);
  b.trajectory = synth::generate_trajectory(b.scene, traj, forest.seed);
  b.scene.ground_truth_traj = b.trajectory.truth;
  b.camera = synth::default_camera();
  b.detections = synth::generate_detections(b.scene, b.trajectory.truth, b.camera, {}, forest.seed);
  return b;
}

void write_scene_bundle(const SceneBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& s = b.scene;
  io::write_ply(s.aerial_cloud, dir / "aerial.ply");
  io::write_ply(s.terrestrial_cloud, dir / "terrestrial.ply");
  {
    std::ofstream out(dir / "trunks.csv", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "trunks.csv").string());
    out << "id,x,y,trunk_radius,height,invasive\n";
    for (std::size_t i = 0; i < s.trees.size(); ++i) {
      const auto& t = s.trees[i];
      out << i << ',' << io::format_double(t.position.x()) << ','
          << io::format_double(t.position.y()) << ',' << io::format_double(t.trunk_radius) << ','
          << io::format_double(t.height) << ',' << (t.invasive ? 1 : 0) << '\n';
    }
  }
  io::write_trajectory(b.trajectory.truth, dir / "truth_trajectory.csv");
  io::write_trajectory(b.trajectory.odometry, dir / "odometry.csv");
  io::write_gnss(b.trajectory.gnss, s.spec.anchor, dir / "gnss.csv");
  io::write_detections(b.detections, dir / "detections.jsonl");
  geotag::write_camera(b.camera, dir / "camera.json");
  {
    json j;
    j["seed"] = s.spec.seed;
    j["n_trees"] = s.trees.size();
    j["extent_m"] = {s.spec.extent_x, s.spec.extent_y};
    j["anchor"] = {{"lat0", s.spec.anchor.lat0}, {"lon0", s.spec.anchor.lon0},
                   {"alt0", s.spec.anchor.alt0}, {"epsg", s.spec.anchor.projected_epsg()}};
    j["true_alignment"] = {{"tx", s.true_alignment.tx()},
                           {"ty", s.true_alignment.ty()},
                           {"yaw_deg", s.true_alignment.psi() * kRadToDeg},
                           {"dz", s.true_dz}};
    std::ofstream out(dir / "scene.json", std::ios::trunc);
    out << j.dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "demo.toml", std::ios::trunc);
    out << "# Pipeline run over this synthetic scene.\n"
        << "seed = " << s.spec.seed << "\n\n"
        << "[paths]\n"
        << "aerial = \"aerial.ply\"\n"
        << "terrestrial = \"terrestrial.ply\"\n"
        << "odometry = \"odometry.csv\"\n"
        << "gnss = \"gnss.csv\"\n"
        << "detections = \"detections.jsonl\"\n"
        << "camera = \"camera.json\"\n"
        << "reference = \"truth_trajectory.csv\"\n"
        << "output = \"out\"\n\n"
        << "[anchor]\n"
        << "lat0 = " << io::format_double(s.spec.anchor.lat0) << "\n"
        << "lon0 = " << io::format_double(s.spec.anchor.lon0) << "\n"
        << "alt0 = " << io::format_double(s.spec.anchor.alt0) << "\n\n"
        << "[fields]\n"
        << "chm_resolution = 0.5\n"
        << "field_resolution = 0.5\n"
        << "bandwidth = 1.0\n"
        << "scales = [1, 2, 3, 4]\n\n"
        << "[align]\n"
        << "enabled = true\n"
        << "starts = 64\n\n"
        << "[pgo]\n"
        << "mode = \"covariance\"\n"
        << "kernel = \"huber\"\n"
        << "delta = 1.0\n\n"
        << "[geotag]\n"
        << "max_range = 40\n"
        << "raster_resolution = 0.5\n";
  }
}

PipelineResult run_pipeline(const PipelineConfig& cfg, std::ostream* log) {
  cfg.validate();
  const auto& p = cfg.paths;
  require_file(p.aerial, "aerial");
  require_file(p.terrestrial, "terrestrial");
  require_file(p.odometry, "odometry");
  require_file(p.gnss, "gnss");
  require_file(p.detections, "detections");
  require_file(p.camera, "camera");
  if (!p.reference.empty()) require_file(p.reference, "reference");
  if (!p.dbh.empty()) require_file(p.dbh, "dbh");
  auto say = [&](const std::string& msg) {
    if (log) *log << msg << '\n';
  };

  const auto out_dir = p.output;
  std::filesystem::create_directories(out_dir);
  json report;
  report["version"] = FORESTGEO_VERSION;
  report["seed"] = cfg.seed;

  // Pose graph.
  say("[pgo] reading odometry and GNSS");
  const auto odometry = io::read_trajectory(p.odometry);
  const auto gnss = io::read_gnss(p.gnss, cfg.anchor);
  const GeoAnchor anchor = gnss.anchor;
  pgo::GraphConfig gcfg;
  gcfg.mode = cfg.pgo.mode;
  gcfg.kernel = cfg.pgo.kernel;
  gcfg.sigma_constant = cfg.pgo.sigma_constant;
  const auto graph = pgo::build_graph(odometry, gnss.fixes, gcfg);
  pgo::SolverConfig scfg;
  scfg.max_iterations = cfg.pgo.max_iterations;
  const auto fused = pgo::optimize(graph, scfg);
  io::write_trajectory(fused.poses, out_dir / "fused.csv");
  say("[pgo] " + std::to_string(graph.nodes.size()) + " nodes, " +
      std::to_string(graph.gnss.size()) + " GNSS factors, cost " +
      io::format_double(fused.initial_cost) + " -> " + io::format_double(fused.final_cost));
  report["pgo"] = {{"mode", mode_name(cfg.pgo.mode)},
                   {"kernel", cfg.pgo.kernel.kind == pgo::KernelKind::kHuber ? "huber" : "squared"},
                   {"delta", cfg.pgo.kernel.delta},
                   {"nodes", graph.nodes.size()},
                   {"gnss_factors", graph.gnss.size()},
                   {"initial_cost", fused.initial_cost},
                   {"final_cost", fused.final_cost},
                   {"iterations", fused.iterations}};

  // Likelihood fields.
  say("[fields] building aerial and terrestrial likelihood fields");
  const auto aerial_cloud = io::read_ply(p.aerial);
  const auto terr_cloud = io::read_ply(p.terrestrial);
  const auto aerial_ground = fields::estimate_ground(aerial_cloud, cfg.fields.ground_cell);
  const auto chm = fields::compute_chm(aerial_cloud, aerial_ground, cfg.fields.chm_resolution);
  const auto aerial_field = fields::aerial_likelihood(chm, cfg.fields.scales);
  const auto terr_ground = fields::estimate_ground(terr_cloud, cfg.fields.ground_cell);
  const auto trunks = fields::extract_trunks(terr_cloud, terr_ground);
  report["fields"] = {{"chm_width", chm.width()},
                      {"chm_height", chm.height()},
                      {"chm_max_m", *std::max_element(chm.values.begin(), chm.values.end())},
                      {"trunks", trunks.size()}};
  say("[fields] " + std::to_string(trunks.size()) + " trunk hypotheses");

  // Alignment.
  Se2Transform theta;
  double dz = 0.0;
  json align_json = {{"enabled", cfg.align.enabled}};
  if (cfg.align.enabled) {
    if (trunks.empty()) throw DegenerateError("no trunks found in the terrestrial cloud");
    double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
    for (const auto& pt : terr_cloud.points) {
      min_x = std::min(min_x, pt.x);
      max_x = std::max(max_x, pt.x);
      min_y = std::min(min_y, pt.y);
      max_y = std::max(max_y, pt.y);
    }
    const auto geometry =
        GridGeometry::covering(min_x, min_y, max_x, max_y, cfg.fields.field_resolution);
    const auto terr_field = fields::terrestrial_likelihood(trunks, cfg.fields.bandwidth, geometry);
    align::MultiStartConfig mcfg;
    mcfg.starts = cfg.align.starts;
    mcfg.seed = cfg.seed;
    mcfg.nmi.bins = cfg.align.bins;
    mcfg.nmi.min_overlap_fraction = cfg.align.min_overlap;
    say("[align] multi-start NMI search, " + std::to_string(mcfg.starts) + " starts");
    const auto result = align::align_multistart(aerial_field, terr_field, cfg.align.region, mcfg);
    theta = result.theta;
    dz = align::vertical_align(aerial_cloud, terr_cloud, theta, cfg.fields.ground_cell);
    align_json["tx"] = theta.tx();
    align_json["ty"] = theta.ty();
    align_json["yaw_deg"] = theta.psi() * kRadToDeg;
    align_json["dz"] = dz;
    align_json["nmi"] = result.objective;
    say("[align] tx " + io::format_double(theta.tx()) + " ty " + io::format_double(theta.ty()) +
        " yaw " + io::format_double(theta.psi() * kRadToDeg) + " deg, dz " +
        io::format_double(dz));
  }
  report["align"] = align_json;
  PointCloud map = transform_cloud(terr_cloud, theta, dz);
  map.frame = Frame::kEnu;
  map.anchor = anchor;

  // Geotagging and export.
  say("[geotag] projecting detections");
  const auto detections = io::read_detections(p.detections);
  const auto camera = geotag::read_camera(p.camera);
  geotag::TagConfig tcfg;
  tcfg.max_range = cfg.geotag.max_range;
  const auto overlay = geotag::tag_points(map, fused.poses, detections, camera, tcfg);
  std::vector<std::string> outputs = {"fused.csv"};
  io::write_ply(geotag::overlay_to_cloud(map, overlay), out_dir / "overlay.ply");
  outputs.push_back("overlay.ply");
  json geo = {{"detections", detections.size()},
              {"skipped_detections", overlay.skipped_detections},
              {"tagged_points", overlay.points.size()}};
  if (!overlay.empty()) {
    const auto layer = geotag::rasterize_overlay(overlay, cfg.geotag.raster_resolution, anchor);
    geotiff::write_geotiff(layer, anchor, out_dir / "layer.tif");
    geotag::write_kml(overlay, anchor, cfg.geotag.cluster_radius, out_dir / "layer.kml");
    outputs.push_back("layer.tif");
    outputs.push_back("layer.kml");
    std::size_t tagged_cells = 0;
    for (double v : layer.values) tagged_cells += v != geotag::kNoData;
    geo["raster_cells"] = layer.values.size();
    geo["tagged_cells"] = tagged_cells;
    geo["epsg"] = anchor.projected_epsg();
  } else {
    say("[geotag] no points tagged; raster and KML skipped");
  }
  report["geotag"] = geo;

  // Evaluation.
  json ev = json::object();
  if (!p.reference.empty()) {
    const auto reference = io::read_trajectory(p.reference);
    ev["ate_fused"] = ate_json(eval::ate(fused.poses, reference));
    ev["ate_odometry"] = ate_json(eval::ate(odometry, reference));
    ev["std_convention"] = "population";
  }
  if (!p.dbh.empty()) {
    const auto records = eval::read_dbh_records(p.dbh);
    ev["mre_dbh"] = eval::mre_dbh(records);
    ev["dbh_records"] = records.size();
  }
  report["eval"] = ev;

  PipelineResult result;
  result.report_json = report.dump(2) + "\n";
  {
    std::ofstream out(out_dir / "report.json", std::ios::trunc);
    if (!out) throw IoError("cannot write report.json");
    out << result.report_json;
  }
  outputs.push_back("report.json");

  json manifest;
  manifest["version"] = FORESTGEO_VERSION;
  manifest["seed"] = cfg.seed;
  manifest["config_hash"] = hex64(fnv1a(canonical_text(cfg)));
  json inputs = json::array();
  for (const auto* path : {&p.aerial, &p.terrestrial, &p.odometry, &p.gnss, &p.detections,
                           &p.camera, &p.reference, &p.dbh}) {
    if (path->empty()) continue;
    inputs.push_back({{"name", path->filename().string()}, {"fnv1a", hex64(fnv1a(slurp(*path)))}});
  }
  manifest["inputs"] = inputs;
  json outs = json::array();
  for (const auto& name : outputs) {
    outs.push_back({{"name", name}, {"fnv1a", hex64(fnv1a(slurp(out_dir / name)))}});
  }
  manifest["outputs"] = outs;
  {
    std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write manifest.json");
    out << manifest.dump(2) << '\n';
  }
  outputs.push_back("manifest.json");
  result.outputs = outputs;
  say("[pipeline] wrote " + std::to_string(outputs.size()) + " files to " + out_dir.string());
  return result;
}

}  // namespace forestgeo
