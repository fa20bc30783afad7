#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "forestgeo/corrupt.hpp"
#include "forestgeo/detail/rng.hpp"
#include "forestgeo/errors.hpp"
#include "forestgeo/eval.hpp"
#include "forestgeo/geometry.hpp"
#include "forestgeo/pgo.hpp"
#include "oracles.hpp"

using namespace forestgeo;
using doctest::Approx;

namespace {

Se3Pose random_pose(detail::Rng& rng, double t = 0.0) {
  Se3Pose p;
  p.t = t;
  p.translation = {rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-3, 3)};
  p.rotation = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
  return p;
}

template <int Rows>
double relative_jacobian_error(const Eigen::Matrix<double, Rows, 6>& analytic,
                               const Eigen::Matrix<double, Rows, 6>& numeric) {
  return (analytic - numeric).norm() / std::max(1.0, numeric.norm());
}

// Straight line along x at 1 m per node, with a small forward-scale bias in odometry.
struct Line {
  std::vector<Se3Pose> truth, odometry;
  std::vector<GnssFix> gnss;
};

Line make_line(std::size_t n, double bias, double gnss_sigma, std::uint64_t seed) {
  detail::Rng rng(seed);
  Line l;
  for (std::size_t i = 0; i < n; ++i) {
    Se3Pose p;
    p.t = static_cast<double>(i);
    p.translation = {static_cast<double>(i), 0.0, 0.0};
    l.truth.push_back(p);
    Se3Pose o = p;
    o.translation.x() *= 1.0 + bias;
    l.odometry.push_back(o);
    GnssFix f;
    f.t = p.t;
    f.position = p.translation + Eigen::Vector3d(rng.normal(0, gnss_sigma), rng.normal(0, gnss_sigma),
                                                 rng.normal(0, gnss_sigma));
    f.covariance = Eigen::Matrix3d::Identity() * gnss_sigma * gnss_sigma;
    l.gnss.push_back(f);
  }
  return l;
}

double ate_mean(const std::vector<Se3Pose>& est, const std::vector<Se3Pose>& ref) {
  return eval::ate(est, ref).mean;
}

}  // namespace

TEST_CASE("huber examples and continuity") {
  CHECK(pgo::huber_rho(0.5, 1.0) == 0.125);
  CHECK(pgo::huber_rho(2.0, 1.0) == 1.5);
  CHECK(pgo::huber_rho(-2.0, 1.0) == 1.5);
  for (double d : {0.1, 1.0, 3.7}) {
    CHECK(pgo::huber_rho(d, d) == Approx(d * d / 2).epsilon(1e-15));
    const double h = 1e-7;
    const double left = (pgo::huber_rho(d, d) - pgo::huber_rho(d - h, d)) / h;
    const double right = (pgo::huber_rho(d + h, d) - pgo::huber_rho(d, d)) / h;
    CHECK(std::abs(left - right) < 1e-6);
    CHECK(std::abs(pgo::huber_rho(d + 1e-12, d) - pgo::huber_rho(d - 1e-12, d)) < 1e-10);
  }
}

TEST_CASE("huber matches the branch-wise formula") {
  detail::Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double r = rng.uniform(-10, 10), d = rng.uniform(0.01, 5);
    REQUIRE(std::abs(pgo::huber_rho(r, d) - oracle::huber(r, d)) <= 1e-12 * std::max(1.0, oracle::huber(r, d)));
  }
}

TEST_CASE("robust weights") {
  const pgo::RobustKernel sq{pgo::KernelKind::kSquared, 1.0};
  const pgo::RobustKernel hu{pgo::KernelKind::kHuber, 1.0};
  CHECK(pgo::robust_weight(0.0, sq) == 1.0);
  CHECK(pgo::robust_weight(123.0, sq) == 1.0);
  CHECK(pgo::robust_weight(4.0, hu) == 0.25);
  CHECK(pgo::robust_weight(0.0, hu) == 1.0);
  double prev = 1.0;
  for (double r = 0.0; r < 50.0; r += 0.01) {
    const double w = pgo::robust_weight(r, hu);
    REQUIRE(w > 0.0);
    REQUIRE(w <= 1.0);
    REQUIRE(w <= prev);
    prev = w;
  }
  const pgo::RobustKernel bad{pgo::KernelKind::kHuber, 0.0};
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
}

TEST_CASE("build_graph examples") {
  std::vector<Se3Pose> odo(10);
  for (int i = 0; i < 10; ++i) {
    odo[i].t = i * 0.1;
    odo[i].translation.x() = i * 0.2;
  }
  const auto g0 = pgo::build_graph(odo, {});
  CHECK(g0.odometry.size() == 9);
  CHECK(g0.gnss.empty());
  CHECK(g0.prior.has_value());

  GnssFix near, far;
  near.t = 0.35;
  near.covariance = Eigen::Vector3d(4, 4, 9).asDiagonal();
  std::vector<Se3Pose> sparse{odo[0], odo[9]};
  sparse[1].t = 5.0;
  far.t = 2.5;
  const auto g1 = pgo::build_graph(sparse, std::vector<GnssFix>{far});
  CHECK(g1.gnss.empty());
  const auto g2 = pgo::build_graph(odo, std::vector<GnssFix>{near});
  REQUIRE(g2.gnss.size() == 1);
  CHECK(g2.gnss[0].node == 3);
  CHECK(g2.gnss[0].information(0, 0) == Approx(0.25));
  CHECK(g2.gnss[0].information(1, 1) == Approx(0.25));
  CHECK(g2.gnss[0].information(2, 2) == Approx(1.0 / 9.0));
  CHECK_FALSE(g2.prior.has_value());

  pgo::GraphConfig cfg;
  cfg.mode = pgo::GnssMode::kConstantScaling;
  cfg.sigma_constant = 2.0;
  const auto g3 = pgo::build_graph(odo, std::vector<GnssFix>{near}, cfg);
  CHECK(g3.gnss[0].information(2, 2) == Approx(0.25));

  cfg.mode = pgo::GnssMode::kNone;
  CHECK(pgo::build_graph(odo, std::vector<GnssFix>{near}, cfg).gnss.empty());
  CHECK_THROWS_AS(pgo::build_graph({}, {}), ArgumentError);

  GnssFix bad = near;
  bad.covariance(0, 0) = -1;
  CHECK_THROWS_AS(pgo::build_graph(odo, std::vector<GnssFix>{bad}), ArgumentError);
}

TEST_CASE("analytic Jacobians match central differences") {
  detail::Rng rng(7);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_pose(rng), b = random_pose(rng, 1.0);
    pgo::OdometryFactor f;
    f.delta_translation = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-1, 1)};
    f.delta_rotation = Eigen::Quaterniond(Eigen::AngleAxisd(rng.uniform(-1, 1), Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized()));
    // Keep the rotation error away from pi, where the logarithm is not smooth.
    f.delta_rotation = (a.rotation.conjugate() * b.rotation) *
                       Eigen::Quaterniond(Eigen::AngleAxisd(rng.uniform(-1.5, 1.5), Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized()));
    const auto lin = pgo::linearize_odometry(a, b, f);
    pgo::Matrix6d num_from, num_to;
    for (int k = 0; k < 6; ++k) {
      pgo::Vector6d d = pgo::Vector6d::Zero();
      d(k) = h;
      num_from.col(k) = (pgo::linearize_odometry(pgo::retract(a, d), b, f).residual -
                         pgo::linearize_odometry(pgo::retract(a, -d), b, f).residual) / (2 * h);
      num_to.col(k) = (pgo::linearize_odometry(a, pgo::retract(b, d), f).residual -
                       pgo::linearize_odometry(a, pgo::retract(b, -d), f).residual) / (2 * h);
    }
    REQUIRE(relative_jacobian_error<6>(lin.jac_from, num_from) < 1e-5);
    REQUIRE(relative_jacobian_error<6>(lin.jac_to, num_to) < 1e-5);

    pgo::GnssFactor g;
    g.fix.position = {rng.uniform(-20, 20), rng.uniform(-20, 20), 0};
    const auto gl = pgo::linearize_gnss(a, g);
    pgo::Matrix36d num;
    for (int k = 0; k < 6; ++k) {
      pgo::Vector6d d = pgo::Vector6d::Zero();
      d(k) = h;
      num.col(k) = (pgo::linearize_gnss(pgo::retract(a, d), g).residual -
                    pgo::linearize_gnss(pgo::retract(a, -d), g).residual) / (2 * h);
    }
    REQUIRE(relative_jacobian_error<3>(gl.jac, num) < 1e-5);
  }
}

TEST_CASE("zero-residual input stays put") {
  const auto l = make_line(50, 0.0, 0.0, 1);
  std::vector<GnssFix> exact;
  for (const auto& p : l.odometry) {
    GnssFix f;
    f.t = p.t;
    f.position = p.translation;
    f.covariance = Eigen::Matrix3d::Identity() * 0.01;
    exact.push_back(f);
  }
  const auto r = pgo::optimize(pgo::build_graph(l.odometry, exact));
  CHECK(r.final_cost < 1e-10);
  for (std::size_t i = 0; i < r.poses.size(); ++i) {
    CHECK((r.poses[i].translation - l.odometry[i].translation).norm() < 1e-9);
  }
}

TEST_CASE("clean GNSS removes odometry bias") {
  const auto l = make_line(100, 0.02, 0.1, 2);
  const auto r = pgo::optimize(pgo::build_graph(l.odometry, l.gnss));
  const double before = ate_mean(l.odometry, l.truth);
  const double after = ate_mean(r.poses, l.truth);
  CHECK(after < 0.5 * before);
}

TEST_CASE("accepted steps never increase cost") {
  detail::Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto l = make_line(60, rng.uniform(-0.05, 0.05), 0.3, 10 + trial);
    for (auto& p : l.odometry) {
      p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(rng.normal(0, 0.05), Eigen::Vector3d::UnitZ()));
    }
    l.gnss[30].position.y() += 15;
    pgo::GraphConfig cfg;
    cfg.kernel.kind = trial % 2 ? pgo::KernelKind::kHuber : pgo::KernelKind::kSquared;
    const auto r = pgo::optimize(pgo::build_graph(l.odometry, l.gnss, cfg));
    REQUIRE(r.accepted_costs.size() >= 1);
    CHECK(r.accepted_costs.front() == r.initial_cost);
    for (std::size_t i = 1; i < r.accepted_costs.size(); ++i) {
      REQUIRE(r.accepted_costs[i] <= r.accepted_costs[i - 1]);
    }
    CHECK(r.final_cost <= r.initial_cost);
  }
}

TEST_CASE("a 10 m spike hurts squared loss more than Huber") {
  auto l = make_line(100, 0.02, 0.1, 4);
  l.gnss[50].position += Eigen::Vector3d(6, 8, 0);
  pgo::GraphConfig cfg;
  cfg.kernel = {pgo::KernelKind::kSquared, 1.0};
  const auto sq = pgo::optimize(pgo::build_graph(l.odometry, l.gnss, cfg));
  cfg.kernel = {pgo::KernelKind::kHuber, 1.0};
  const auto hu = pgo::optimize(pgo::build_graph(l.odometry, l.gnss, cfg));
  CHECK(ate_mean(hu.poses, l.truth) < ate_mean(sq.poses, l.truth));
}

TEST_CASE("Huber displacement plateaus while squared grows with the spike") {
  const double sigma = 0.5;
  const auto l = make_line(60, 0.0, 0.0, 5);
  std::vector<GnssFix> clean;
  for (const auto& p : l.truth) {
    GnssFix f;
    f.t = p.t;
    f.position = p.translation;
    f.covariance = Eigen::Matrix3d::Identity() * sigma * sigma;
    clean.push_back(f);
  }
  auto solve = [&](double magnitude, pgo::KernelKind kind) {
    auto fixes = clean;
    fixes[30].position.y() += magnitude;
    pgo::GraphConfig cfg;
    cfg.kernel = {kind, 1.0};
    return pgo::optimize(pgo::build_graph(l.odometry, fixes, cfg)).poses[30].translation;
  };
  const auto base_h = solve(0.0, pgo::KernelKind::kHuber);
  const auto base_s = solve(0.0, pgo::KernelKind::kSquared);
  std::vector<double> moves_h, moves_s;
  for (double m : {10.0, 50.0, 100.0}) {
    moves_h.push_back((solve(m, pgo::KernelKind::kHuber) - base_h).norm());
    moves_s.push_back((solve(m, pgo::KernelKind::kSquared) - base_s).norm());
  }
  for (double d : moves_h) CHECK(d < 1.0 * sigma * 2);
  CHECK(moves_s[1] > 2 * moves_s[0]);
  CHECK(moves_s[2] > 1.5 * moves_s[1]);
  CHECK(moves_h[2] < 1.5 * moves_h[0] + 1e-6);
}

TEST_CASE("disconnected graphs are rejected") {
  const auto l = make_line(10, 0.0, 0.1, 6);
  auto g = pgo::build_graph(l.odometry, l.gnss);
  g.odometry.erase(g.odometry.begin() + 4);
  CHECK_THROWS_AS(pgo::optimize(g), DegenerateError);
  auto bad = pgo::build_graph(l.odometry, l.gnss);
  bad.odometry[0].information(0, 0) = -1;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
}

TEST_CASE("corruption with zero rates is the identity") {
  const auto l = make_line(120, 0.0, 0.1, 7);
  const auto out = pgo::corrupt_gnss(l.gnss, {}, 3);
  REQUIRE(out.size() == l.gnss.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].position == l.gnss[i].position);
    CHECK(out[i].covariance == l.gnss[i].covariance);
  }
}

TEST_CASE("deceptive spikes move every fix by about 10 m") {
  const auto l = make_line(300, 0.0, 0.1, 8);
  pgo::CorruptionSpec spec;
  spec.spike_probability = 1.0;
  const auto r = pgo::corrupt_gnss_detailed(l.gnss, spec, 4);
  CHECK(r.spiked == l.gnss.size());
  double sum = 0;
  for (std::size_t i = 0; i < r.fixes.size(); ++i) {
    const double d = (r.fixes[i].position - l.gnss[i].position).norm();
    CHECK(d > 2.0);
    sum += d;
    CHECK(r.fixes[i].covariance == l.gnss[i].covariance);
  }
  CHECK(sum / static_cast<double>(r.fixes.size()) == Approx(10.0).epsilon(0.05));

  spec.mode = pgo::CovarianceMode::kHonest;
  const auto h = pgo::corrupt_gnss_detailed(l.gnss, spec, 4);
  for (std::size_t i = 0; i < h.fixes.size(); ++i) {
    const double d2 = (h.fixes[i].position - l.gnss[i].position).squaredNorm();
    CHECK(h.fixes[i].covariance(0, 0) == Approx(l.gnss[i].covariance(0, 0) + d2));
  }
}

TEST_CASE("dropouts remove contiguous 15-30 s windows") {
  const auto l = make_line(1200, 0.0, 0.1, 9);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    pgo::CorruptionSpec spec;
    spec.dropout_rate = 1.0;
    const auto r = pgo::corrupt_gnss_detailed(l.gnss, spec, seed);
    REQUIRE(!r.dropout_windows.empty());
    CHECK(r.fixes.size() < l.gnss.size());
    for (const auto& [a, b] : r.dropout_windows) {
      CHECK(b - a >= 15.0);
      CHECK(b - a <= 30.0);
      for (const auto& f : r.fixes) REQUIRE((f.t < a || f.t >= b));
    }
  }
}

TEST_CASE("offset segments shift 10 m horizontally for 10 s") {
  const auto l = make_line(1200, 0.0, 0.0, 10);
  pgo::CorruptionSpec spec;
  spec.offset_rate = 1.0;
  const auto r = pgo::corrupt_gnss_detailed(l.gnss, spec, 5);
  REQUIRE(!r.offset_windows.empty());
  for (const auto& [a, b] : r.offset_windows) CHECK(b - a == Approx(10.0));
  std::size_t moved = 0;
  for (std::size_t i = 0; i < r.fixes.size(); ++i) {
    const Eigen::Vector3d d = r.fixes[i].position - l.gnss[i].position;
    if (d.norm() > 0) {
      ++moved;
      CHECK(d.head<2>().norm() == Approx(10.0));
      CHECK(d.z() == 0.0);
    }
  }
  CHECK(moved > 0);
}

TEST_CASE("corruption is deterministic in the seed") {
  const auto l = make_line(600, 0.0, 0.1, 11);
  pgo::CorruptionSpec spec;
  spec.spike_probability = 0.05;
  spec.dropout_rate = 1.0;
  spec.offset_rate = 1.0;
  const auto a = pgo::corrupt_gnss(l.gnss, spec, 42);
  const auto b = pgo::corrupt_gnss(l.gnss, spec, 42);
  const auto c = pgo::corrupt_gnss(l.gnss, spec, 43);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].position == b[i].position);
  bool differs = a.size() != c.size();
  for (std::size_t i = 0; !differs && i < a.size(); ++i) differs = a[i].position != c[i].position;
  CHECK(differs);
}
