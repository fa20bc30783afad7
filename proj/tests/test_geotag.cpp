#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

#include "doctest.h"
#include "forestgeo/detail/rng.hpp"
#include "forestgeo/errors.hpp"
#include "forestgeo/geodesy.hpp"
#include "forestgeo/geometry.hpp"
#include "forestgeo/geotag.hpp"
#include "forestgeo/geotiff.hpp"
#include "forestgeo/synth.hpp"
#include "oracles.hpp"
#include "scenes.hpp"
#include "test_util.hpp"

using namespace forestgeo;
using doctest::Approx;

namespace {

Se3Pose pose_at(const Eigen::Vector3d& t, double yaw, double time = 0.0) {
  Se3Pose p;
  p.t = time;
  p.translation = t;
  p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()));
  return p;
}

// Map point whose camera-frame coordinates are `c`.
Eigen::Vector3d from_camera(const Eigen::Vector3d& c, const Se3Pose& pose,
                            const geotag::CameraModel& cam) {
  return pose.isometry() * (cam.cam_from_lidar.inverse() * c);
}

geotag::SemanticOverlay overlay_of(std::initializer_list<std::pair<Eigen::Vector3d, double>> pts) {
  geotag::SemanticOverlay o;
  std::size_t i = 0;
  for (const auto& [p, c] : pts) o.points.push_back({i++, {p.x(), p.y(), p.z(), 0.0f}, "tree", c});
  return o;
}

GeoAnchor test_anchor() {
  GeoAnchor a;
  a.lat0 = 40.4433;
  a.lon0 = -79.9436;
  a.alt0 = 250.0;
  return a;
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("project_point: optical axis lands on the principal point") {
  const auto cam = synth::default_camera();
  const auto pose = pose_at({3, -2, 1.5}, 0.7);
  const auto px = geotag::project_point(from_camera({0, 0, 5}, pose, cam), pose, cam);
  REQUIRE(px);
  CHECK(px->u == Approx(cam.cx).epsilon(1e-12));
  CHECK(px->v == Approx(cam.cy).epsilon(1e-12));
  CHECK(px->depth == Approx(5.0));
}

TEST_CASE("project_point: inverse construction") {
  const auto cam = synth::default_camera();
  const auto pose = pose_at({0, 0, 0}, 0.0);
  const double u0 = 100, v0 = 650, z = 7.5;
  const Eigen::Vector3d c(z * (u0 - cam.cx) / cam.fx, z * (v0 - cam.cy) / cam.fy, z);
  const auto px = geotag::project_point(from_camera(c, pose, cam), pose, cam);
  REQUIRE(px);
  CHECK(px->u == Approx(u0));
  CHECK(px->v == Approx(v0));
}

TEST_CASE("project_point: behind the camera") {
  const auto cam = synth::default_camera();
  const auto pose = pose_at({1, 1, 1}, -2.0);
  CHECK_FALSE(geotag::project_point(from_camera({0.3, 0.2, -1}, pose, cam), pose, cam));
  CHECK_FALSE(geotag::project_point(from_camera({0, 0, 0.09}, pose, cam), pose, cam));
  CHECK(geotag::project_point(from_camera({0, 0, 0.11}, pose, cam), pose, cam));
}

TEST_CASE("unproject inverts project_point") {
  const auto cam = synth::default_camera();
  detail::Rng rng(17);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const auto pose = pose_at({rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(0, 3)},
                              rng.uniform(-3.1, 3.1));
    const double z = rng.uniform(0.5, 40);
    const Eigen::Vector3d c(z * (rng.uniform(0, cam.width) - cam.cx) / cam.fx,
                            z * (rng.uniform(0, cam.height) - cam.cy) / cam.fy, z);
    const Eigen::Vector3d p = from_camera(c, pose, cam);
    const auto px = geotag::project_point(p, pose, cam);
    REQUIRE(px);
    worst = std::max(worst, (geotag::unproject(*px, pose, cam) - p).norm());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("camera validation and JSON round-trip") {
  const auto cam = synth::default_camera();
  CHECK_NOTHROW(cam.validate());
  auto bad = cam;
  bad.fx = 0;
  CHECK_THROWS(bad.validate());
  bad = cam;
  bad.cx = cam.width;
  CHECK_THROWS(bad.validate());

  testutil::TempDir dir("camera");
  geotag::write_camera(cam, dir / "cam.json");
  const auto back = geotag::read_camera(dir / "cam.json");
  CHECK(back.fx == cam.fx);
  CHECK(back.cy == cam.cy);
  CHECK(back.width == cam.width);
  CHECK(back.height == cam.height);
  CHECK(back.cam_from_lidar.matrix() == cam.cam_from_lidar.matrix());
}

TEST_CASE("tag_points: zero detections gives an empty overlay") {
  const auto s = scenes::geotag_scene(1);
  const auto o = geotag::tag_points(s.map, s.trajectory, {}, s.camera);
  CHECK(o.empty());
  CHECK(o.skipped_detections == 0);
}

TEST_CASE("tag_points: exactly the detected crown is tagged") {
  const auto s = scenes::geotag_scene(2);
  const std::vector<Detection> dets{s.detection};
  const auto o = geotag::tag_points(s.map, s.trajectory, dets, s.camera);
  std::set<std::size_t> tagged;
  for (const auto& t : o.points) {
    tagged.insert(t.index);
    CHECK(t.confidence == 0.9);
    CHECK(t.class_name == "tree_of_heaven");
  }
  std::size_t expected = 0, missing = 0;
  for (std::size_t i = 0; i < s.map.size(); ++i) {
    if (!s.target[i]) continue;
    ++expected;
    if (!tagged.count(i)) ++missing;
  }
  std::size_t wrong = 0;
  for (std::size_t i : tagged) wrong += s.target[i] ? 0 : 1;
  CHECK(expected == 20000);
  CHECK(missing == 0);
  CHECK(wrong == 0);
  CHECK(std::is_sorted(o.points.begin(), o.points.end(),
                       [](const auto& a, const auto& b) { return a.index < b.index; }));
}

TEST_CASE("tag_points: without the depth test the occluded crown would be tagged") {
  const auto s = scenes::geotag_scene(3);
  const std::vector<Detection> dets{s.detection};
  geotag::TagConfig loose;
  loose.depth_tolerance = 100.0;
  const auto o = geotag::tag_points(s.map, s.trajectory, dets, s.camera, loose);
  std::size_t wrong = 0;
  for (const auto& t : o.points) wrong += s.target[t.index] ? 0 : 1;
  CHECK(wrong > 1000);
}

TEST_CASE("tag_points: overlapping detections keep the max confidence") {
  const auto s = scenes::geotag_scene(4);
  auto low = s.detection;
  low.conf = 0.4;
  auto high = s.detection;
  high.conf = 0.9;
  for (const auto& order : {std::vector<Detection>{low, high}, std::vector<Detection>{high, low}}) {
    const auto o = geotag::tag_points(s.map, s.trajectory, order, s.camera);
    REQUIRE_FALSE(o.empty());
    for (const auto& t : o.points) CHECK(t.confidence == 0.9);
  }
}

TEST_CASE("tag_points: detections outside the trajectory are skipped and counted") {
  const auto s = scenes::geotag_scene(5);
  auto late = s.detection;
  late.t = 10.0;
  auto early = s.detection;
  early.t = -1.0;
  const std::vector<Detection> dets{early, s.detection, late};
  const auto o = geotag::tag_points(s.map, s.trajectory, dets, s.camera);
  CHECK(o.skipped_detections == 2);
  CHECK(o.points.size() == 20000);
}

TEST_CASE("tag_points never tags outside the image or beyond range") {
  const auto cam = synth::default_camera();
  detail::Rng rng(23);
  PointCloud map;
  for (int i = 0; i < 20000; ++i)
    map.points.push_back({rng.uniform(-60, 60), rng.uniform(-60, 60), rng.uniform(0, 10), 0.0f});
  std::vector<Se3Pose> traj{pose_at({0, 0, 1.5}, 0.3, 0.0), pose_at({4, 1, 1.5}, 0.5, 4.0)};
  std::vector<Detection> dets;
  for (int k = 0; k < 8; ++k) {
    Detection d;
    d.t = rng.uniform(0, 4);
    d.class_name = "x";
    d.conf = rng.uniform(0, 1);
    // Boxes deliberately hang over the image border.
    d.bbox = {rng.uniform(-200, 1100), rng.uniform(-200, 500), rng.uniform(100, 600),
              rng.uniform(100, 400)};
    dets.push_back(d);
  }
  std::sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  geotag::TagConfig cfg;
  cfg.max_range = 25.0;
  const auto o = geotag::tag_points(map, traj, dets, cam, cfg);
  REQUIRE_FALSE(o.empty());
  for (const auto& t : o.points) {
    bool justified = false;
    for (const auto& d : dets) {
      const auto pose = interpolate_pose(traj, d.t);
      const auto px = geotag::project_point(t.point.xyz(), pose, cam);
      if (!px || (t.point.xyz() - pose.translation).norm() > cfg.max_range) continue;
      if (px->u < 0 || px->u >= cam.width || px->v < 0 || px->v >= cam.height) continue;
      if (d.bbox.contains(px->u, px->v)) justified = true;
    }
    CHECK(justified);
  }
}

TEST_CASE("overlay_to_cloud colors") {
  PointCloud map;
  map.has_intensity = true;
  map.points = {{0, 0, 0, 10.0f}, {1, 0, 0, 200.0f}, {2, 0, 0, 255.0f}};

  const auto grey = geotag::overlay_to_cloud(map, {});
  REQUIRE(grey.colors.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(grey.colors[i].r == grey.colors[i].g);
    CHECK(grey.colors[i].g == grey.colors[i].b);
  }
  CHECK(grey.colors[1].r == 200);

  geotag::SemanticOverlay full;
  for (std::size_t i = 0; i < 3; ++i) full.points.push_back({i, map.points[i], "t", 1.0});
  for (const auto& c : geotag::overlay_to_cloud(map, full).colors) {
    CHECK(c.r == 255);
    CHECK(c.g == 0);
    CHECK(c.b == 0);
  }

  geotag::SemanticOverlay half;
  half.points.push_back({1, map.points[1], "t", 0.5});
  const auto h = geotag::overlay_to_cloud(map, half);
  CHECK(std::abs(int(h.colors[1].r) - 128) <= 1);
  CHECK(h.colors[0].r == 10);
}

TEST_CASE("rasterize_overlay examples") {
  const auto anchor = test_anchor();
  SUBCASE("single point") {
    const auto f = geotag::rasterize_overlay(overlay_of({{{3.2, 4.1, 0}, 0.7}}), 0.5, anchor);
    std::size_t set = 0;
    for (double v : f.values) {
      if (v == geotag::kNoData) continue;
      ++set;
      CHECK(v == 0.7);
    }
    CHECK(set == 1);
    REQUIRE(f.anchor);
  }
  SUBCASE("max rule in a shared cell") {
    const auto f = geotag::rasterize_overlay(
        overlay_of({{{3.1, 4.1, 0}, 0.3}, {{3.2, 4.2, 1}, 0.8}}), 0.5, anchor);
    CHECK(*std::max_element(f.values.begin(), f.values.end()) == 0.8);
    CHECK(std::count(f.values.begin(), f.values.end(), 0.3) == 0);
  }
  SUBCASE("10 m apart is 20 cells") {
    const auto f = geotag::rasterize_overlay(
        overlay_of({{{0.1, 0.1, 0}, 0.5}, {{10.1, 0.1, 0}, 0.6}}), 0.5, anchor);
    const auto a = f.geometry.cell_of(0.1, 0.1);
    const auto b = f.geometry.cell_of(10.1, 0.1);
    REQUIRE(a);
    REQUIRE(b);
    CHECK(*b - *a == 20);
    CHECK(f.values[*a] == 0.5);
    CHECK(f.values[*b] == 0.6);
  }
  SUBCASE("lower duplicate does not change the raster") {
    auto base = overlay_of({{{1, 1, 0}, 0.6}, {{5, 2, 0}, 0.9}});
    auto more = base;
    more.points.push_back({2, {1.05, 1.02, 0, 0.0f}, "tree", 0.2});
    CHECK(geotag::rasterize_overlay(base, 0.5, anchor).values ==
          geotag::rasterize_overlay(more, 0.5, anchor).values);
  }
  CHECK_THROWS_AS(geotag::rasterize_overlay({}, 0.5, anchor), DegenerateError);
}

TEST_CASE("GeoTIFF round-trip of a 2x2 field") {
  GridField f(GridGeometry{10.0, 20.0, 0.5, 2, 2});
  f.values = {0, 1, 2, 3};
  testutil::TempDir dir("tiff");
  geotiff::write_geotiff(f, test_anchor(), dir / "a.tif");
  const auto r = geotiff::read_geotiff(dir / "a.tif");
  CHECK(r.width == 2);
  CHECK(r.height == 2);
  CHECK(r.north_up == std::vector<float>{2, 3, 0, 1});
  CHECK(r.south_up() == f.values);
  CHECK(r.pixel_scale[0] == 0.5);
  CHECK(r.pixel_scale[1] == 0.5);
  CHECK(r.pixel_scale[2] == 0.0);
  CHECK(r.model_type() == 1);
  CHECK(r.projected_cs() == 32617);
  CHECK(r.nodata == "-1");
}

TEST_CASE("GeoTIFF float32 values survive exactly, including nodata") {
  detail::Rng rng(31);
  GridField f(GridGeometry{-40.0, -12.5, 0.25, 37, 23});
  for (auto& v : f.values) v = rng.uniform(0, 1) < 0.2 ? geotag::kNoData
                                                        : static_cast<float>(rng.uniform(0, 1));
  f.anchor = test_anchor();
  testutil::TempDir dir("tiff2");
  geotiff::write_geotiff(f, dir / "b.tif");
  CHECK(geotiff::read_geotiff(dir / "b.tif").south_up() == f.values);
  f.anchor.reset();
  CHECK_THROWS_AS(geotiff::write_geotiff(f, dir / "c.tif"), ArgumentError);
}

TEST_CASE("GeoTIFF tiepoint matches an independent UTM computation") {
  const auto anchor = test_anchor();
  for (const auto& g : {GridGeometry{-35.0, -20.0, 0.5, 140, 90}, GridGeometry{0.0, 0.0, 0.25, 8, 8},
                        GridGeometry{120.0, -250.0, 1.0, 60, 400}}) {
    const double north_edge = g.origin_y + g.resolution * static_cast<double>(g.height);
    const auto ll = oracle::offset_latlon(anchor.lat0, anchor.lon0, g.origin_x, north_edge);
    const auto expect = oracle::utm_series(ll.x(), ll.y(), 17, true);

    GridField f(g, 0.0);
    testutil::TempDir dir("tie");
    geotiff::write_geotiff(f, anchor, dir / "t.tif");
    const auto r = geotiff::read_geotiff(dir / "t.tif");
    CHECK(std::abs(r.tiepoint[3] - expect.easting) < 0.5);
    CHECK(std::abs(r.tiepoint[4] - expect.northing) < 0.5);
    CHECK(r.tiepoint[0] == 0.0);
    CHECK(r.tiepoint[1] == 0.0);
  }
}

TEST_CASE("GeoTIFF in the southern hemisphere") {
  GeoAnchor a;
  a.lat0 = -33.86;
  a.lon0 = 151.21;
  GridField f(GridGeometry{0.0, 0.0, 1.0, 3, 3}, 0.25);
  testutil::TempDir dir("south");
  geotiff::write_geotiff(f, a, dir / "s.tif");
  const auto r = geotiff::read_geotiff(dir / "s.tif");
  CHECK(r.projected_cs() == 32756);
  const auto ll = oracle::offset_latlon(a.lat0, a.lon0, 0.0, 3.0);
  const auto expect = oracle::utm_series(ll.x(), ll.y(), 56, false);
  CHECK(std::abs(r.tiepoint[3] - expect.easting) < 0.5);
  CHECK(std::abs(r.tiepoint[4] - expect.northing) < 0.5);
}

TEST_CASE("KML placemarks") {
  const auto anchor = test_anchor();
  const std::regex coord("<coordinates>([-0-9.]+),([-0-9.]+),0</coordinates>");

  SUBCASE("one point at its own lat/lon") {
    const auto doc = geotag::kml_document(overlay_of({{{12, -7, 3}, 0.8}}), anchor, 3.0);
    CHECK(count(doc, "<Placemark>") == 1);
    std::smatch m;
    REQUIRE(std::regex_search(doc, m, coord));
    const auto lla = geodesy::enu_to_wgs84({12, -7, 3}, anchor);
    CHECK(std::stod(m[1]) == Approx(lla.lon).epsilon(1e-9));
    CHECK(std::stod(m[2]) == Approx(lla.lat).epsilon(1e-9));
  }
  SUBCASE("two points 1 m apart merge at the midpoint") {
    const auto doc = geotag::kml_document(
        overlay_of({{{0, 0, 0}, 0.4}, {{1, 0, 0}, 0.9}}), anchor, 3.0);
    CHECK(count(doc, "<Placemark>") == 1);
    CHECK(doc.find("0.90") != std::string::npos);
    std::smatch m;
    REQUIRE(std::regex_search(doc, m, coord));
    const auto mid = geodesy::enu_to_wgs84({0.5, 0, 0}, anchor);
    const double dx = (std::stod(m[1]) - mid.lon) * oracle::parallel_arc(anchor.lat0, 1.0);
    const double dy = (std::stod(m[2]) - mid.lat) * oracle::meridian_arc(anchor.lat0, anchor.lat0 + 1);
    CHECK(std::hypot(dx, dy) < 0.01);
  }
  SUBCASE("two points 10 m apart stay separate") {
    const auto doc = geotag::kml_document(
        overlay_of({{{0, 0, 0}, 0.4}, {{10, 0, 0}, 0.9}}), anchor, 3.0);
    CHECK(count(doc, "<Placemark>") == 2);
  }
}

TEST_CASE("KML is well formed") {
  auto o = overlay_of({{{0, 0, 0}, 0.4}, {{10, 0, 0}, 0.9}, {{30, 5, 0}, 0.7}});
  o.points[1].class_name = "a<b&c";
  const auto doc = geotag::kml_document(o, test_anchor(), 3.0);
  CHECK(doc.rfind("<?xml", 0) == 0);
  CHECK(doc.find("xmlns=\"http://www.opengis.net/kml/2.2\"") != std::string::npos);
  for (const std::string tag : {"kml", "Document", "Placemark", "name", "description", "Point",
                                "coordinates"}) {
    const auto open = count(doc, "<" + tag + ">") + count(doc, "<" + tag + " ");
    CHECK_MESSAGE(open == count(doc, "</" + tag + ">"), tag);
  }
  CHECK(count(doc, "<Placemark>") == 3);
  CHECK(count(doc, "<Point>") == 3);
  CHECK(doc.find("a<b") == std::string::npos);
  CHECK(doc.find("a&lt;b&amp;c") != std::string::npos);

  testutil::TempDir dir("kml");
  CHECK_THROWS(geotag::write_kml({}, test_anchor(), 3.0, dir / "x.kml"));
  geotag::write_kml(o, test_anchor(), 3.0, dir / "x.kml");
  CHECK(testutil::slurp(dir / "x.kml") == doc);
}
