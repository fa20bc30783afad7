// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run everything
//   acceptance 3 5        run a subset

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "forestgeo/align.hpp"
#include "forestgeo/corrupt.hpp"
#include "forestgeo/detail/rng.hpp"
#include "forestgeo/eval.hpp"
#include "forestgeo/fields.hpp"
#include "forestgeo/geometry.hpp"
#include "forestgeo/geotag.hpp"
#include "forestgeo/geotiff.hpp"
#include "forestgeo/icp2d.hpp"
#include "forestgeo/io.hpp"
#include "forestgeo/pgo.hpp"
#include "forestgeo/pipeline.hpp"
#include "forestgeo/synth.hpp"
#include "oracles.hpp"
#include "scenes.hpp"

namespace fs = std::filesystem;
using namespace forestgeo;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("forestgeo_accept_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// 1 ---------------------------------------------------------------------------

Outcome huber_exactness() {
  double worst = 0.0;
  int n = 0;
  for (int i = 0; i < 100; ++i) {
    const double delta = 0.05 + 0.05 * i;
    for (int j = 0; j < 100; ++j) {
      // Hit the branch point exactly on some rows.
      const double r = j == 0 ? delta : j == 1 ? -delta : -10.0 + 20.0 * j / 99.0;
      const double want = oracle::huber(r, delta);
      worst = std::max(worst, std::abs(pgo::huber_rho(r, delta) - want) / std::max(1.0, want));
      ++n;
    }
  }
  double jump = 0.0, kink = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double d = 0.05 + 0.05 * i;
    const double eps = 1e-9 * d, h = 1e-6 * d;
    // Across the branch point the loss rises by 2 delta eps, with no step on top.
    const double rise = pgo::huber_rho(d + eps, d) - pgo::huber_rho(d - eps, d);
    jump = std::max(jump, std::abs(rise - 2 * d * eps) / std::max(1.0, d * d));
    // One-sided slopes either side of the branch point must agree (value delta).
    const double left = (pgo::huber_rho(d, d) - pgo::huber_rho(d - h, d)) / h;
    const double right = (pgo::huber_rho(d + h, d) - pgo::huber_rho(d, d)) / h;
    kink = std::max(kink, std::abs(left - right) / d);
  }
  return {n == 10000 && worst <= 1e-12 && jump < 1e-12 && kink < 1e-5,
          fmt("%d pairs, max rel err %.2e; jump at |r|=delta %.1e, slope gap %.1e", n, worst,
              jump, kink)};
}

// 2 ---------------------------------------------------------------------------

Outcome field_oracles() {
  detail::Rng rng(2);
  double worst_aerial = 0.0;
  const std::vector<double> sigmas{1.0, 2.0, 3.0, 4.0};
  for (int trial = 0; trial < 3; ++trial) {
    GridField chm(GridGeometry{0.0, 0.0, 0.5, 32, 32});
    for (int b = 0; b < 6; ++b) {
      const Eigen::Vector2d c(rng.uniform(0, 16), rng.uniform(0, 16));
      const double h = rng.uniform(5, 20), w = rng.uniform(1, 3);
      for (std::size_t r = 0; r < 32; ++r)
        for (std::size_t q = 0; q < 32; ++q)
          chm.at(q, r) = std::max(chm.at(q, r),
                                  h * std::exp(-(chm.geometry.cell_center(q, r) - c).squaredNorm() / (2 * w * w)));
    }
    const auto got = fields::aerial_likelihood(chm, {sigmas});
    const auto want = oracle::dense_aerial(chm, sigmas);
    double scale = 0.0, err = 0.0;
    for (std::size_t i = 0; i < got.values.size(); ++i) {
      scale = std::max(scale, std::abs(want.values[i]));
      err = std::max(err, std::abs(got.values[i] - want.values[i]));
    }
    worst_aerial = std::max(worst_aerial, err / scale);
  }

  const GridGeometry g{-20.0, -15.0, 0.25, 160, 120};
  TrunkSet trunks;
  for (int i = 0; i < 50; ++i) trunks.positions.emplace_back(rng.uniform(-20, 20), rng.uniform(-15, 15));
  const double h = 1.0;
  const auto raw = fields::kde_field(trunks, h, g);
  const auto norm = fields::terrestrial_likelihood(trunks, h, g);
  double peak = 0.0;
  for (std::size_t r = 0; r < g.height; ++r)
    for (std::size_t c = 0; c < g.width; ++c)
      peak = std::max(peak, oracle::kde_at(trunks.positions, h, g.cell_center(c, r)));
  double worst_kde = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto c = rng.below(g.width), r = rng.below(g.height);
    const double want = oracle::kde_at(trunks.positions, h, g.cell_center(c, r));
    worst_kde = std::max(worst_kde, std::abs(raw.at(c, r) - want));
    worst_kde = std::max(worst_kde, std::abs(norm.at(c, r) - want / peak));
  }
  return {worst_aerial < 1e-6 && worst_kde <= 1e-9,
          fmt("aerial vs dense oracle rel err %.2e; KDE at 100 probes abs err %.2e", worst_aerial,
              worst_kde)};
}

// 3, 4 ------------------------------------------------------------------------

struct AlignInputs {
  GridField aerial;
  GridField terrestrial;
};

AlignInputs align_inputs(const synth::SyntheticScene& s, double resolution) {
  AlignInputs in;
  const auto ag = fields::estimate_ground(s.aerial_cloud);
  in.aerial = fields::aerial_likelihood(fields::compute_chm(s.aerial_cloud, ag, resolution), {});
  const auto tg = fields::estimate_ground(s.terrestrial_cloud);
  const auto trunks = fields::extract_trunks(s.terrestrial_cloud, tg);
  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
  for (const auto& p : s.terrestrial_cloud.points) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  in.terrestrial = fields::terrestrial_likelihood(
      trunks, 1.0, GridGeometry::covering(min_x, min_y, max_x, max_y, resolution));
  return in;
}

Outcome alignment_recovery() {
  std::vector<double> trans, yaw;
  int within = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    synth::ForestSpec spec;  // 50 trees on 100 x 100 m, |t| <= 7 m, |psi| <= 30 deg
    spec.seed = seed;
    const auto scene = synth::generate_forest(spec);
    const auto in = align_inputs(scene, 0.5);
    align::MultiStartConfig cfg;
    cfg.starts = 64;
    cfg.seed = seed;
    const auto r = align::align_multistart(in.aerial, in.terrestrial, {}, cfg);
    const auto e = eval::se2_error(r.theta, scene.true_alignment);
    trans.push_back(e.translation);
    yaw.push_back(std::abs(e.yaw_deg));
    if (e.translation <= 1.5) ++within;
  }
  const double mt = median(trans), my = median(yaw);
  return {mt <= 0.5 && my <= 2.0 && within >= 18,
          fmt("median %.3f m / %.3f deg, %d/20 within 1.5 m, worst %.2f m", mt, my, within,
              *std::max_element(trans.begin(), trans.end()))};
}

// Stem-height structure (0.3-2 m above ground), thinned to one point per 0.25 m cell.
std::vector<Eigen::Vector2d> structure_points(const PointCloud& cloud) {
  const auto ground = fields::estimate_ground(cloud);
  std::set<std::pair<long, long>> seen;
  std::vector<Eigen::Vector2d> out;
  for (const auto& p : cloud.points) {
    const double above = p.z - ground.sample_clamped(p.x, p.y);
    if (above < 0.3 || above > 2.0) continue;
    const auto key = std::make_pair(static_cast<long>(std::floor(p.x / 0.25)),
                                    static_cast<long>(std::floor(p.y / 0.25)));
    if (seen.insert(key).second) out.emplace_back(p.x, p.y);
  }
  return out;
}

Outcome nmi_beats_icp() {
  int wins = 0;
  std::string per;
  for (std::uint64_t seed = 101; seed <= 105; ++seed) {
    synth::ForestSpec spec;
    spec.seed = seed;
    spec.decoy_spacing = 3.0;
    const auto scene = synth::generate_forest(spec);
    const auto in = align_inputs(scene, 0.5);
    align::MultiStartConfig cfg;
    cfg.seed = seed;
    const auto nmi = align::align_multistart(in.aerial, in.terrestrial, {}, cfg);
    const auto icp = align::icp2d_baseline(structure_points(scene.terrestrial_cloud),
                                           structure_points(scene.aerial_cloud),
                                           Se2Transform::identity());
    const double en = eval::se2_error(nmi.theta, scene.true_alignment).translation;
    const double ei = eval::se2_error(icp, scene.true_alignment).translation;
    if (en < ei) ++wins;
    per += fmt("%s%.2f/%.2f", per.empty() ? "" : ", ", en, ei);
  }
  return {wins >= 4, fmt("NMI better in %d/5 (NMI/ICP m: %s)", wins, per.c_str())};
}

// 5, 6 ------------------------------------------------------------------------

synth::TrajectorySpec benchmark_spec(double sigma_min, double sigma_max) {
  auto t = demo_trajectory_spec();  // 1 km, 10 Hz odometry with bias and drift, 1 Hz GNSS
  t.gnss.sigma_min = sigma_min;
  t.gnss.sigma_max = sigma_max;
  return t;
}

pgo::CorruptionSpec benchmark_corruption(pgo::CovarianceMode mode) {
  pgo::CorruptionSpec c;
  c.spike_probability = 0.05;  // ~10 m spikes
  c.dropout_rate = 0.5;        // 15-30 s windows
  c.offset_rate = 0.5;         // 10 m for 10 s
  c.mode = mode;
  return c;
}

double fused_ate(const synth::TrajectoryData& d, std::span<const GnssFix> gnss, pgo::GnssMode mode,
                 pgo::KernelKind kernel) {
  pgo::GraphConfig g;
  g.mode = mode;
  g.kernel.kind = kernel;
  g.kernel.delta = 1.0;
  const auto r = pgo::optimize(pgo::build_graph(d.odometry, gnss, g));
  return eval::ate(r.poses, d.truth).mean;
}

Outcome robust_kernel_effect() {
  const synth::ForestSpec forest;
  std::vector<double> huber, squared;
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto d = synth::generate_trajectory(forest, benchmark_spec(0.05, 1.0), seed);
    const auto bad = pgo::corrupt_gnss(d.gnss, benchmark_corruption(pgo::CovarianceMode::kDeceptive),
                                       1000 + seed);
    huber.push_back(fused_ate(d, bad, pgo::GnssMode::kCovarianceAware, pgo::KernelKind::kHuber));
    squared.push_back(fused_ate(d, bad, pgo::GnssMode::kCovarianceAware, pgo::KernelKind::kSquared));
    if (huber.back() < squared.back()) ++wins;
  }
  const double mh = mean(huber), ms = mean(squared);
  const double gain = (ms - mh) / ms;
  return {wins >= 9 && gain >= 0.10,
          fmt("Huber better in %d/10; mean ATE %.3f m (Huber) vs %.3f m (squared), %.1f%% better",
              wins, mh, ms, 100.0 * gain)};
}

Outcome ablation_ordering() {
  const synth::ForestSpec forest;
  int ordered = 0;
  std::vector<double> none, constant, cov;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto d = synth::generate_trajectory(forest, benchmark_spec(0.05, 2.0), seed);
    const auto bad = pgo::corrupt_gnss(d.gnss, benchmark_corruption(pgo::CovarianceMode::kHonest),
                                       2000 + seed);
    none.push_back(fused_ate(d, bad, pgo::GnssMode::kNone, pgo::KernelKind::kHuber));
    constant.push_back(fused_ate(d, bad, pgo::GnssMode::kConstantScaling, pgo::KernelKind::kHuber));
    cov.push_back(fused_ate(d, bad, pgo::GnssMode::kCovarianceAware, pgo::KernelKind::kHuber));
    const double a = none.back(), b = constant.back(), c = cov.back();
    if (a > b && b > c && (a - b) > 0.1 * a && (b - c) > 0.1 * b) ++ordered;
  }
  return {ordered >= 9,
          fmt("ordered with >10%% gaps in %d/10; mean ATE none %.3f, constant %.3f, covariance %.3f m",
              ordered, mean(none), mean(constant), mean(cov))};
}

// 7 ---------------------------------------------------------------------------

Se3Pose random_pose(detail::Rng& rng, double t) {
  Se3Pose p;
  p.t = t;
  p.translation = {rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-3, 3)};
  p.rotation = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
  return p;
}

Eigen::Vector3d random_axis(detail::Rng& rng) {
  return Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
}

Outcome solver_correctness() {
  detail::Rng rng(7);
  const double h = 1e-6;
  double worst = 0.0;
  auto rel = [](const auto& a, const auto& n) { return (a - n).norm() / std::max(1.0, n.norm()); };
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_pose(rng, 0.0), b = random_pose(rng, 1.0);
    pgo::OdometryFactor f;
    f.delta_translation = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-1, 1)};
    f.delta_rotation = (a.rotation.conjugate() * b.rotation) *
                       Eigen::Quaterniond(Eigen::AngleAxisd(rng.uniform(-1.5, 1.5), random_axis(rng)));
    const auto lin = pgo::linearize_odometry(a, b, f);
    pgo::Matrix6d nf, nt;
    pgo::Matrix36d ng;
    pgo::GnssFactor g;
    g.fix.position = {rng.uniform(-20, 20), rng.uniform(-20, 20), 0.0};
    for (int k = 0; k < 6; ++k) {
      pgo::Vector6d d = pgo::Vector6d::Zero();
      d(k) = h;
      nf.col(k) = (pgo::linearize_odometry(pgo::retract(a, d), b, f).residual -
                   pgo::linearize_odometry(pgo::retract(a, -d), b, f).residual) / (2 * h);
      nt.col(k) = (pgo::linearize_odometry(a, pgo::retract(b, d), f).residual -
                   pgo::linearize_odometry(a, pgo::retract(b, -d), f).residual) / (2 * h);
      ng.col(k) = (pgo::linearize_gnss(pgo::retract(a, d), g).residual -
                   pgo::linearize_gnss(pgo::retract(a, -d), g).residual) / (2 * h);
    }
    worst = std::max({worst, rel(lin.jac_from, nf), rel(lin.jac_to, nt),
                      rel(pgo::linearize_gnss(a, g).jac, ng)});
  }

  // Monotone accepted costs on corrupted benchmark runs, both kernels.
  bool monotone = true;
  const synth::ForestSpec forest;
  auto spec = benchmark_spec(0.05, 1.0);
  spec.length = 300.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto d = synth::generate_trajectory(forest, spec, seed);
    const auto bad = pgo::corrupt_gnss(d.gnss, benchmark_corruption(pgo::CovarianceMode::kDeceptive), seed);
    for (auto kind : {pgo::KernelKind::kHuber, pgo::KernelKind::kSquared}) {
      pgo::GraphConfig g;
      g.kernel.kind = kind;
      const auto r = pgo::optimize(pgo::build_graph(d.odometry, bad, g));
      for (std::size_t i = 1; i < r.accepted_costs.size(); ++i)
        monotone = monotone && r.accepted_costs[i] <= r.accepted_costs[i - 1];
    }
  }

  // Zero residual: odometry and GNSS both exactly on the truth.
  spec.odom = {};
  spec.gnss.sigma_min = spec.gnss.sigma_max = 0.1;
  auto d = synth::generate_trajectory(forest, spec, 9);
  for (std::size_t k = 0; k < d.gnss.size(); ++k) d.gnss[k].position = d.truth[10 * k].translation;
  const auto z = pgo::optimize(pgo::build_graph(d.odometry, d.gnss));
  return {worst < 1e-5 && monotone && z.final_cost < 1e-10,
          fmt("Jacobian rel err %.2e at 100 states; accepted costs %s; zero-residual cost %.1e", worst,
              monotone ? "monotone" : "NOT monotone", z.final_cost)};
}

// 8 ---------------------------------------------------------------------------

Outcome geotag_correctness() {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto s = scenes::geotag_scene(seed);
    const std::vector<Detection> dets{s.detection};
    const auto o = geotag::tag_points(s.map, s.trajectory, dets, s.camera);
    std::vector<bool> tagged(s.map.size(), false);
    for (const auto& t : o.points) tagged[t.index] = true;
    for (std::size_t i = 0; i < s.map.size(); ++i) {
      if (tagged[i] && s.target[i]) ++tp;
      if (tagged[i] && !s.target[i]) ++fp;
      if (!tagged[i] && s.target[i]) ++fn;
    }
  }
  const double precision = tp ? double(tp) / double(tp + fp) : 0.0;
  const double recall = tp ? double(tp) / double(tp + fn) : 0.0;

  const auto dir = scratch_dir("geotiff");
  GeoAnchor anchor{40.4433, -79.9436, 250.0, 0};
  detail::Rng rng(8);
  GridField f(GridGeometry{-31.5, -12.0, 0.5, 91, 57});
  for (auto& v : f.values)
    v = rng.uniform() < 0.3 ? geotag::kNoData : static_cast<double>(static_cast<float>(rng.uniform()));
  geotiff::write_geotiff(f, anchor, dir / "layer.tif");
  const auto r = geotiff::read_geotiff(dir / "layer.tif");
  const bool exact = r.south_up() == f.values && r.nodata == "-1";
  const double north = f.geometry.origin_y + f.geometry.resolution * f.geometry.height;
  const auto ll = oracle::offset_latlon(anchor.lat0, anchor.lon0, f.geometry.origin_x, north);
  const auto want = oracle::utm_series(ll.x(), ll.y(), 17, true);
  const double tie = std::hypot(r.tiepoint[3] - want.easting, r.tiepoint[4] - want.northing);
  fs::remove_all(dir);
  return {precision >= 0.95 && recall >= 0.95 && exact && tie <= 0.5 && r.projected_cs() == 32617,
          fmt("precision %.4f, recall %.4f; GeoTIFF round-trip %s; tiepoint off by %.3f m", precision,
              recall, exact ? "exact" : "NOT exact", tie)};
}

// 9 ---------------------------------------------------------------------------

Outcome mre_formula() {
  const std::vector<eval::DbhRecord> r{{"a", 0.5, 0.5}, {"b", 0.6, 0.5}};
  const double m = eval::mre_dbh(r);
  const bool exact = m == 0.1;
  detail::Rng rng(9);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<eval::DbhRecord> a;
    for (int i = 0; i < 11; ++i) a.push_back({"t", rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)});
    const double k = rng.uniform(0.01, 100.0);
    auto b = a;
    for (auto& x : b) {
      x.dbh_est *= k;
      x.dbh_gt *= k;
    }
    worst = std::max(worst, std::abs(eval::mre_dbh(a) - eval::mre_dbh(b)));
  }
  return {exact && worst <= 1e-12,
          fmt("MRE = %.17g; scale invariance max diff %.1e", m, worst)};
}

// 10, 11 ----------------------------------------------------------------------

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + FORESTGEO_CLI + "\" " + args + " >\"" +
                          log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct EndToEnd {
  fs::path root;
  int code_a = -1, code_b = -1;
  double seconds_a = 0.0;
};

const EndToEnd& end_to_end() {
  static EndToEnd e = [] {
    EndToEnd r;
    r.root = scratch_dir("pipeline");
    synth::ForestSpec forest;  // 50 trees, 100 x 100 m
    write_scene_bundle(make_demo_bundle(forest, demo_trajectory_spec()), r.root / "scene");
    const auto cfg = (r.root / "scene" / "demo.toml").string();
    const auto t0 = std::chrono::steady_clock::now();
    r.code_a = run_cli("pipeline --quiet --seed 7 --config \"" + cfg + "\" --out \"" +
                           (r.root / "a").string() + "\"",
                       r.root / "a.log");
    r.seconds_a = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.code_b = run_cli("pipeline --quiet --seed 7 --config \"" + cfg + "\" --out \"" +
                           (r.root / "b").string() + "\"",
                       r.root / "b.log");
    return r;
  }();
  return e;
}

Outcome determinism() {
  const auto& e = end_to_end();
  if (e.code_a != 0 || e.code_b != 0) return {false, fmt("pipeline exit codes %d, %d", e.code_a, e.code_b)};
  std::size_t files = 0, differ = 0;
  for (const auto& entry : fs::directory_iterator(e.root / "a")) {
    ++files;
    const auto other = e.root / "b" / entry.path().filename();
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) ++differ;
  }
  return {files >= 6 && differ == 0, fmt("%zu output files, %zu differ", files, differ)};
}

Outcome end_to_end_run() {
  const auto& e = end_to_end();
  if (e.code_a != 0) return {false, fmt("pipeline exit code %d, see %s", e.code_a, (e.root / "a.log").c_str())};
  const auto out = e.root / "a";
  std::string missing;
  for (const char* f : {"fused.csv", "overlay.ply", "layer.tif", "report.json"})
    if (!fs::exists(out / f) || fs::file_size(out / f) == 0) missing += std::string(" ") + f;
  if (!missing.empty()) return {false, "missing:" + missing};

  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  const auto cloud = io::read_ply(out / "overlay.ply");
  const auto red = std::count_if(cloud.colors.begin(), cloud.colors.end(),
                                 [](const Rgb& c) { return c.r > 0 && c.g == 0 && c.b == 0; });
  const auto layer = geotiff::read_geotiff(out / "layer.tif");
  std::string ate = "n/a";
  if (report["eval"].contains("ate_fused"))
    ate = fmt("%.3f m fused vs %.3f m odometry", report["eval"]["ate_fused"]["mean_m"].get<double>(),
              report["eval"]["ate_odometry"]["mean_m"].get<double>());
  return {e.seconds_a < 120.0 && red > 0 && layer.width > 0,
          fmt("%.1f s; %td tagged points, %ux%u raster; ATE %s", e.seconds_a, red, layer.width,
              layer.height, ate.c_str())};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0 = none stated
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "Huber exactness", 1.0, huber_exactness},
      {2, "Field oracles", 10.0, field_oracles},
      {3, "Alignment recovery", 300.0, alignment_recovery},
      {4, "NMI beats ICP on decoy scenes", 120.0, nmi_beats_icp},
      {5, "Robust-kernel effect", 180.0, robust_kernel_effect},
      {6, "Ablation ordering", 180.0, ablation_ordering},
      {7, "Solver correctness", 0.0, solver_correctness},
      {8, "Geotag correctness", 0.0, geotag_correctness},
      {9, "MRE formula", 0.0, mre_formula},
      {10, "Determinism", 0.0, determinism},
      {11, "Desk-scale end-to-end", 0.0, end_to_end_run},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = o.pass;
    std::string budget;
    if (c.budget_s > 0.0) {
      budget = fmt(" / %.0f s budget", c.budget_s);
      if (s >= c.budget_s) pass = false;
    }
    std::printf("[%s] %2d %s: %s (%.2f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), s, budget.c_str());
    std::fflush(stdout);
    if (!pass) ++failed;
  }
  if (wanted.empty() || wanted.count(10) || wanted.count(11)) {
    fs::remove_all(fs::temp_directory_path() /
                   ("forestgeo_accept_pipeline_" + std::to_string(::getpid())));
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
