#include "forestgeo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

#include "forestgeo/errors.hpp"
#include "forestgeo/geodesy.hpp"

namespace forestgeo {

double wrap_angle(double a) {
  constexpr double kPi = std::numbers::pi;
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

// --- types.hpp members -------------------------------------------------------

void GeoAnchor::validate() const {
  if (!(lat0 >= -90.0 && lat0 <= 90.0) || !(lon0 >= -180.0 && lon0 <= 180.0) ||
      !std::isfinite(alt0)) {
    throw RangeError("geo anchor out of range: lat " + std::to_string(lat0) + ", lon " +
                     std::to_string(lon0));
  }
}

int GeoAnchor::projected_epsg() const {
  return epsg != 0 ? epsg : geodesy::utm_epsg_for(lat0, lon0);
}

void PointCloud::validate() const {
  if (frame == Frame::kEnu && !anchor) throw ArgumentError("ENU cloud without a geo anchor");
  if (!colors.empty() && colors.size() != points.size()) {
    throw ArgumentError("color count does not match point count");
  }
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw ArgumentError("non-finite point coordinate");
    }
    if (has_intensity && !(p.intensity >= 0.0f && p.intensity <= 255.0f)) {
      throw ArgumentError("intensity outside [0, 255]");
    }
  }
}

Eigen::Isometry3d Se3Pose::isometry() const {
  Eigen::Isometry3d iso = Eigen::Isometry3d::Identity();
  iso.linear() = rotation.toRotationMatrix();
  iso.translation() = translation;
  return iso;
}

Se2Transform::Se2Transform(double tx, double ty, double psi)
    : tx_(tx), ty_(ty), psi_(wrap_angle(psi)) {}

Eigen::Matrix2d Se2Transform::rotation() const {
  const double c = std::cos(psi_), s = std::sin(psi_);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

Eigen::Vector2d Se2Transform::apply(const Eigen::Vector2d& p) const {
  const double c = std::cos(psi_), s = std::sin(psi_);
  return {c * p.x() - s * p.y() + tx_, s * p.x() + c * p.y() + ty_};
}

Se2Transform Se2Transform::inverse() const {
  const double c = std::cos(psi_), s = std::sin(psi_);
  return {-(c * tx_ + s * ty_), -(-s * tx_ + c * ty_), -psi_};
}

Se2Transform operator*(const Se2Transform& a, const Se2Transform& b) {
  const Eigen::Vector2d t = a.apply(b.translation());
  return {t.x(), t.y(), a.psi() + b.psi()};
}

bool GnssFix::covariance_valid() const {
  if (!covariance.allFinite()) return false;
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-9) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(covariance);
  return es.eigenvalues().minCoeff() > 0.0;
}

// --- trajectories ------------------------------------------------------------

void validate_trajectory(std::span<const Se3Pose> trajectory) {
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const auto& p = trajectory[i];
    if (std::abs(p.rotation.norm() - 1.0) > 1e-9) {
      throw ArgumentError("pose " + std::to_string(i) + ": quaternion is not unit");
    }
    if (i > 0 && !(p.t > trajectory[i - 1].t)) {
      throw ArgumentError("pose " + std::to_string(i) + ": timestamps not strictly increasing");
    }
  }
}

Se3Pose interpolate_pose(std::span<const Se3Pose> trajectory, double t) {
  if (trajectory.empty() || !(t >= trajectory.front().t) || !(t <= trajectory.back().t)) {
    throw RangeError("time " + std::to_string(t) + " outside trajectory range");
  }
  auto it = std::lower_bound(trajectory.begin(), trajectory.end(), t,
                             [](const Se3Pose& p, double v) { return p.t < v; });
  if (it->t == t) return *it;
  const Se3Pose& b = *it;
  const Se3Pose& a = *(it - 1);
  const double s = (t - a.t) / (b.t - a.t);
  Se3Pose out;
  out.t = t;
  out.translation = (1.0 - s) * a.translation + s * b.translation;
  out.rotation = a.rotation.slerp(s, b.rotation).normalized();
  return out;
}

PointCloud transform_cloud(const PointCloud& cloud, const Se2Transform& t, double dz) {
  PointCloud out = cloud;
  for (auto& p : out.points) {
    const Eigen::Vector2d q = t.apply({p.x, p.y});
    p.x = q.x();
    p.y = q.y();
    p.z += dz;
  }
  return out;
}

// --- SO(3) -------------------------------------------------------------------

namespace so3 {

Eigen::Matrix3d hat(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Matrix3d exp(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  if (theta < 1e-12) return Eigen::Matrix3d::Identity() + hat(phi);
  return Eigen::AngleAxisd(theta, phi / theta).toRotationMatrix();
}

Eigen::Vector3d log(const Eigen::Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  double angle = aa.angle();
  Eigen::Vector3d axis = aa.axis();
  if (angle > std::numbers::pi) {
    angle = 2.0 * std::numbers::pi - angle;
    axis = -axis;
  }
  if (angle < 1e-12) {
    // First-order: R ~ I + hat(phi)
    return {0.5 * (r(2, 1) - r(1, 2)), 0.5 * (r(0, 2) - r(2, 0)), 0.5 * (r(1, 0) - r(0, 1))};
  }
  return angle * axis;
}

Eigen::Matrix3d right_jacobian_inverse(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d w = hat(phi);
  if (theta < 1e-6) return Eigen::Matrix3d::Identity() + 0.5 * w + (1.0 / 12.0) * w * w;
  const double coef =
      1.0 / (theta * theta) - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Eigen::Matrix3d::Identity() + 0.5 * w + coef * w * w;
}

}  // namespace so3

}  // namespace forestgeo
