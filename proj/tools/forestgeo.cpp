// Command-line front end: one subcommand per module plus the chained pipeline.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "forestgeo/align.hpp"
#include "forestgeo/config.hpp"
#include "forestgeo/corrupt.hpp"
#include "forestgeo/errors.hpp"
#include "forestgeo/eval.hpp"
#include "forestgeo/fields.hpp"
#include "forestgeo/geotag.hpp"
#include "forestgeo/geotiff.hpp"
#include "forestgeo/grid.hpp"
#include "forestgeo/io.hpp"
#include "forestgeo/pgo.hpp"
#include "forestgeo/pipeline.hpp"
#include "forestgeo/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace forestgeo;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::optional<GeoAnchor> parse_anchor(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  if (v.size() != 3) throw ArgumentError("--anchor expects lat lon alt");
  GeoAnchor a{v[0], v[1], v[2], 0};
  a.validate();
  return a;
}

pgo::GnssMode parse_mode(const std::string& s) {
  if (s == "none") return pgo::GnssMode::kNone;
  if (s == "constant") return pgo::GnssMode::kConstantScaling;
  return pgo::GnssMode::kCovarianceAware;
}

void write_trunks_csv(const TrunkSet& trunks, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "id,x,y\n";
  for (std::size_t i = 0; i < trunks.size(); ++i) {
    out << i << ',' << io::format_double(trunks.positions[i].x()) << ','
        << io::format_double(trunks.positions[i].y()) << '\n';
  }
}

GridGeometry cloud_geometry(const PointCloud& cloud, double resolution) {
  if (cloud.empty()) throw DegenerateError("empty point cloud");
  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
  for (const auto& p : cloud.points) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  return GridGeometry::covering(min_x, min_y, max_x, max_y, resolution);
}

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw IoError("cannot write " + out);
  f << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forest mapping toolkit: GNSS pose-graph fusion, aerial-terrestrial alignment, "
               "geotagging and GIS export"};
  app.set_version_flag("--version", FORESTGEO_VERSION);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  // synth ------------------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic scenes");
  synth_cmd->require_subcommand(1);
  auto* forest_cmd = synth_cmd->add_subcommand(
      "forest", "Forest scene, trajectory, GNSS and detections written to a directory");
  synth::ForestSpec fspec;
  synth::TrajectorySpec tspec = demo_trajectory_spec();
  std::vector<double> extent{fspec.extent_x, fspec.extent_y};
  std::string synth_out;
  forest_cmd->add_option("--trees", fspec.n_trees, "Number of trees");
  forest_cmd->add_option("--extent", extent, "Scene size in x and y, m")->expected(2);
  forest_cmd->add_option("--seed", fspec.seed, "Random seed");
  forest_cmd->add_option("--slope", fspec.slope, "Ground slope dz/dx");
  forest_cmd->add_option("--density", fspec.point_density, "Terrestrial trunk density, pts/m^2");
  forest_cmd->add_option("--aerial-density", fspec.aerial_density, "Aerial density, pts/m^2");
  forest_cmd->add_option("--decoy-spacing", fspec.decoy_spacing,
                         "Spacing of a lattice of decoy posts, m (0 = none)");
  forest_cmd->add_option("--length", tspec.length, "Trajectory length, m");
  forest_cmd->add_option("--out", synth_out, "Output directory")->required();

  // fields -------------------------------------------------------------------
  auto* fields_cmd = app.add_subcommand("fields", "Aerial LoG and terrestrial KDE likelihood fields");
  std::string f_aerial, f_terr, f_out;
  PipelineConfig::Fields fcfg;
  fields_cmd->add_option("--aerial", f_aerial, "Aerial PLY")->required();
  fields_cmd->add_option("--terrestrial", f_terr, "Terrestrial PLY")->required();
  fields_cmd->add_option("--chm-resolution", fcfg.chm_resolution, "CHM cell size, m");
  fields_cmd->add_option("--field-resolution", fcfg.field_resolution, "KDE cell size, m");
  fields_cmd->add_option("--bandwidth", fcfg.bandwidth, "KDE bandwidth h, m");
  fields_cmd->add_option("--scales", fcfg.scales.sigmas, "LoG scales, m");
  fields_cmd->add_option("--out", f_out, "Output directory")->required();

  // align --------------------------------------------------------------------
  auto* align_cmd = app.add_subcommand("align", "Multi-start NMI alignment of a terrestrial cloud to an aerial cloud");
  std::string a_aerial, a_terr, a_out;
  PipelineConfig::Align acfg;
  PipelineConfig::Fields afcfg;
  std::uint64_t a_seed = 7;
  std::vector<double> a_tx{-7.0, 7.0}, a_ty{-7.0, 7.0}, a_psi{-30.0, 30.0};
  align_cmd->add_option("--aerial", a_aerial, "Aerial PLY (target)")->required();
  align_cmd->add_option("--terrestrial", a_terr, "Terrestrial PLY (moving)")->required();
  align_cmd->add_option("--tx-range", a_tx, "Search bounds in tx, m")->expected(2);
  align_cmd->add_option("--ty-range", a_ty, "Search bounds in ty, m")->expected(2);
  align_cmd->add_option("--psi-range-deg", a_psi, "Search bounds in yaw, deg")->expected(2);
  align_cmd->add_option("--starts", acfg.starts, "Number of starts K");
  align_cmd->add_option("--bins", acfg.bins, "Histogram bins per axis");
  align_cmd->add_option("--seed", a_seed, "Random seed for the starts");
  align_cmd->add_option("--chm-resolution", afcfg.chm_resolution, "CHM cell size, m");
  align_cmd->add_option("--field-resolution", afcfg.field_resolution, "KDE cell size, m");
  align_cmd->add_option("--bandwidth", afcfg.bandwidth, "KDE bandwidth h, m");
  align_cmd->add_option("--out", a_out, "JSON output (default stdout)");

  // pgo ----------------------------------------------------------------------
  auto* pgo_cmd = app.add_subcommand("pgo", "Fuse odometry and GNSS by pose-graph optimization");
  std::string p_odom, p_gnss, p_out, p_mode = "covariance", p_kernel = "huber";
  std::vector<double> p_anchor;
  double p_delta = 1.0, p_sigma = 2.0;
  pgo_cmd->add_option("--odometry", p_odom, "Odometry trajectory CSV")->required();
  pgo_cmd->add_option("--gnss", p_gnss, "GNSS CSV")->required();
  pgo_cmd->add_option("--mode", p_mode, "GNSS factor mode")
      ->check(CLI::IsMember({"none", "constant", "covariance"}));
  pgo_cmd->add_option("--kernel", p_kernel, "GNSS loss")->check(CLI::IsMember({"huber", "squared"}));
  pgo_cmd->add_option("--delta", p_delta, "Huber threshold on the whitened residual");
  pgo_cmd->add_option("--sigma-constant", p_sigma, "GNSS sigma for constant mode, m");
  pgo_cmd->add_option("--anchor", p_anchor, "ENU anchor lat lon alt (default: first fix)")
      ->expected(3);
  pgo_cmd->add_option("--out", p_out, "Fused trajectory CSV")->required();

  // corrupt-gnss -------------------------------------------------------------
  auto* corrupt_cmd = app.add_subcommand("corrupt-gnss", "Inject spikes, dropouts and offsets");
  std::string c_in, c_out, c_mode = "deceptive";
  std::vector<double> c_anchor;
  pgo::CorruptionSpec cspec;
  std::uint64_t c_seed = 7;
  corrupt_cmd->add_option("--in", c_in, "Input GNSS CSV")->required();
  corrupt_cmd->add_option("--out", c_out, "Output GNSS CSV")->required();
  corrupt_cmd->add_option("--spikes", cspec.spike_probability, "Spike probability per fix");
  corrupt_cmd->add_option("--dropouts", cspec.dropout_rate, "Dropout windows per minute");
  corrupt_cmd->add_option("--offsets", cspec.offset_rate, "Offset segments per minute");
  corrupt_cmd->add_option("--mode", c_mode, "Reported covariance of corrupted fixes")
      ->check(CLI::IsMember({"honest", "deceptive"}));
  corrupt_cmd->add_option("--anchor", c_anchor, "ENU anchor lat lon alt")->expected(3);
  corrupt_cmd->add_option("--seed", c_seed, "Random seed");

  // geotag -------------------------------------------------------------------
  auto* geotag_cmd = app.add_subcommand("geotag", "Tag map points with detections and export layers");
  std::string g_map, g_traj, g_det, g_cam, g_out;
  std::vector<double> g_anchor;
  PipelineConfig::Geotag gcfg;
  geotag_cmd->add_option("--map", g_map, "Map PLY in the trajectory frame")->required();
  geotag_cmd->add_option("--trajectory", g_traj, "Trajectory CSV")->required();
  geotag_cmd->add_option("--detections", g_det, "Detections JSON lines")->required();
  geotag_cmd->add_option("--camera", g_cam, "Camera calibration JSON")->required();
  geotag_cmd->add_option("--anchor", g_anchor, "ENU anchor lat lon alt")->expected(3)->required();
  geotag_cmd->add_option("--max-range", gcfg.max_range, "Tagging range, m");
  geotag_cmd->add_option("--resolution", gcfg.raster_resolution, "Raster cell size, m");
  geotag_cmd->add_option("--cluster-radius", gcfg.cluster_radius, "KML clustering radius, m");
  geotag_cmd->add_option("--out", g_out, "Output directory")->required();

  // eval ---------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Trajectory and DBH metrics as JSON");
  eval_cmd->require_subcommand(1);
  auto* ate_cmd = eval_cmd->add_subcommand("ate", "Absolute trajectory error (population std)");
  std::string e_est, e_ref, e_out;
  bool e_umeyama = false;
  ate_cmd->add_option("--est", e_est, "Estimated trajectory CSV")->required();
  ate_cmd->add_option("--ref", e_ref, "Reference trajectory CSV")->required();
  ate_cmd->add_flag("--umeyama", e_umeyama, "Rigidly align before differencing");
  ate_cmd->add_option("--out", e_out, "JSON output (default stdout)");
  auto* mre_cmd = eval_cmd->add_subcommand("mre", "DBH mean relative error");
  std::string m_dbh, m_out;
  mre_cmd->add_option("--dbh", m_dbh, "CSV with header id,dbh_est_m,dbh_gt_m")->required();
  mre_cmd->add_option("--out", m_out, "JSON output (default stdout)");

  // pipeline -----------------------------------------------------------------
  auto* pipe_cmd = app.add_subcommand("pipeline", "pgo -> fields -> align -> geotag -> eval");
  std::string cfg_path, pipe_out;
  std::optional<std::uint64_t> pipe_seed;
  std::vector<std::string> overrides;
  pipe_cmd->add_option("--config", cfg_path, "Config file")->required();
  pipe_cmd->add_option("--seed", pipe_seed, "Override the config seed");
  pipe_cmd->add_option("--out", pipe_out, "Override paths.output");
  pipe_cmd->add_option("--set", overrides, "Override any key: section.key=value");
  bool quiet = false;
  pipe_cmd->add_flag("--quiet", quiet, "No progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*forest_cmd) {
      fspec.extent_x = extent.at(0);
      fspec.extent_y = extent.at(1);
      const auto bundle = make_demo_bundle(fspec, tspec);
      write_scene_bundle(bundle, synth_out);
      std::cout << "wrote scene with " << bundle.scene.trees.size() << " trees to " << synth_out
                << '\n';
    } else if (*fields_cmd) {
      const auto aerial = io::read_ply(f_aerial);
      const auto terr = io::read_ply(f_terr);
      fs::create_directories(f_out);
      const auto chm = fields::compute_chm(aerial, fields::estimate_ground(aerial, fcfg.ground_cell),
                                           fcfg.chm_resolution);
      const auto af = fields::aerial_likelihood(chm, fcfg.scales);
      const auto tground = fields::estimate_ground(terr, fcfg.ground_cell);
      const auto trunks = fields::extract_trunks(terr, tground);
      const auto tf = fields::terrestrial_likelihood(trunks, fcfg.bandwidth,
                                                     cloud_geometry(terr, fcfg.field_resolution));
      write_grid_dump(chm, fs::path(f_out) / "chm.bin");
      write_grid_dump(af, fs::path(f_out) / "aerial_field.bin");
      write_grid_dump(tf, fs::path(f_out) / "terrestrial_field.bin");
      write_trunks_csv(trunks, fs::path(f_out) / "trunks.csv");
      std::cout << "trunks: " << trunks.size() << '\n';
    } else if (*align_cmd) {
      const auto aerial = io::read_ply(a_aerial);
      const auto terr = io::read_ply(a_terr);
      const auto af = fields::aerial_likelihood(
          fields::compute_chm(aerial, fields::estimate_ground(aerial, afcfg.ground_cell),
                              afcfg.chm_resolution),
          afcfg.scales);
      const auto trunks = fields::extract_trunks(terr, fields::estimate_ground(terr, afcfg.ground_cell));
      const auto tf = fields::terrestrial_likelihood(
          trunks, afcfg.bandwidth, cloud_geometry(terr, afcfg.field_resolution));
      align::SearchRegion region{a_tx[0], a_tx[1], a_ty[0], a_ty[1], a_psi[0] * kDeg, a_psi[1] * kDeg};
      align::MultiStartConfig m;
      m.starts = acfg.starts;
      m.seed = a_seed;
      m.nmi.bins = acfg.bins;
      const auto r = align::align_multistart(af, tf, region, m);
      const double dz = align::vertical_align(aerial, terr, r.theta, afcfg.ground_cell);
      json candidates = json::array();
      for (const auto& c : r.candidates) {
        candidates.push_back({{"tx", c.theta.tx()}, {"ty", c.theta.ty()},
                              {"psi_rad", c.theta.psi()}, {"nmi", c.objective}});
      }
      emit({{"tx", r.theta.tx()},
            {"ty", r.theta.ty()},
            {"psi_rad", r.theta.psi()},
            {"z_offset", dz},
            {"nmi", r.objective},
            {"candidates", candidates}},
           a_out);
    } else if (*pgo_cmd) {
      const auto odom = io::read_trajectory(p_odom);
      const auto gnss = io::read_gnss(p_gnss, parse_anchor(p_anchor));
      pgo::GraphConfig g;
      g.mode = parse_mode(p_mode);
      g.kernel.kind = p_kernel == "huber" ? pgo::KernelKind::kHuber : pgo::KernelKind::kSquared;
      g.kernel.delta = p_delta;
      g.sigma_constant = p_sigma;
      const auto result = pgo::optimize(pgo::build_graph(odom, gnss.fixes, g));
      io::write_trajectory(result.poses, p_out);
      std::cout << "cost " << io::format_double(result.initial_cost) << " -> "
                << io::format_double(result.final_cost) << " in " << result.iterations
                << " iterations\n";
    } else if (*corrupt_cmd) {
      const auto gnss = io::read_gnss(c_in, parse_anchor(c_anchor));
      cspec.mode = c_mode == "honest" ? pgo::CovarianceMode::kHonest : pgo::CovarianceMode::kDeceptive;
      const auto r = pgo::corrupt_gnss_detailed(gnss.fixes, cspec, c_seed);
      io::write_gnss(r.fixes, gnss.anchor, c_out);
      std::cout << "spiked " << r.spiked << ", dropout windows " << r.dropout_windows.size()
                << ", offset windows " << r.offset_windows.size() << '\n';
    } else if (*geotag_cmd) {
      const auto anchor = *parse_anchor(g_anchor);
      auto map = io::read_ply(g_map);
      const auto traj = io::read_trajectory(g_traj);
      const auto dets = io::read_detections(g_det);
      const auto cam = geotag::read_camera(g_cam);
      geotag::TagConfig t;
      t.max_range = gcfg.max_range;
      const auto overlay = geotag::tag_points(map, traj, dets, cam, t);
      fs::create_directories(g_out);
      io::write_ply(geotag::overlay_to_cloud(map, overlay), fs::path(g_out) / "overlay.ply");
      if (!overlay.empty()) {
        geotiff::write_geotiff(geotag::rasterize_overlay(overlay, gcfg.raster_resolution, anchor),
                               anchor, fs::path(g_out) / "layer.tif");
        geotag::write_kml(overlay, anchor, gcfg.cluster_radius, fs::path(g_out) / "layer.kml");
      }
      std::cout << "tagged " << overlay.points.size() << " points, skipped "
                << overlay.skipped_detections << " detections\n";
    } else if (*ate_cmd) {
      const auto est = io::read_trajectory(e_est);
      const auto ref = io::read_trajectory(e_ref);
      const auto r = eval::ate(est, ref, e_umeyama ? eval::AlignMode::kUmeyama : eval::AlignMode::kNone);
      emit({{"mean_m", r.mean},
            {"std_m", r.std},
            {"std_convention", "population"},
            {"n_matched", r.n_matched},
            {"align", e_umeyama ? "umeyama" : "none"}},
           e_out);
    } else if (*mre_cmd) {
      const auto records = eval::read_dbh_records(m_dbh);
      emit({{"mre", eval::mre_dbh(records)}, {"n", records.size()}}, m_out);
    } else if (*pipe_cmd) {
      auto cfg = load_config(cfg_path);
      for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError(o, "--set expects key=value, got '" + o + "'");
        apply_setting(cfg, o.substr(0, eq), o.substr(eq + 1), fs::current_path());
      }
      if (pipe_seed) cfg.seed = *pipe_seed;
      if (!pipe_out.empty()) cfg.paths.output = pipe_out;
      cfg.validate();
      run_pipeline(cfg, quiet ? nullptr : &std::cerr);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
