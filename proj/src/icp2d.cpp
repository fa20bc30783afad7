#include "forestgeo/icp2d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "forestgeo/errors.hpp"

namespace forestgeo::align {
namespace {

void check_set(std::span<const Eigen::Vector2d> pts, const char* name) {
  if (pts.size() < 3) {
    throw DegenerateError(std::string(name) + " set needs at least 3 points");
  }
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const double major = es.eigenvalues()(1), minor = es.eigenvalues()(0);
  if (!(major > 0.0) || minor <= 1e-10 * major) {
    throw DegenerateError(std::string(name) + " set is collinear");
  }
}

// Exact nearest neighbour over a uniform grid, searched in square rings around the
// query cell. Ties go to the lower target index.
class GridIndex {
 public:
  explicit GridIndex(std::span<const Eigen::Vector2d> pts) : pts_(pts) {
    min_ = max_ = pts[0];
    for (const auto& p : pts) {
      min_ = min_.cwiseMin(p);
      max_ = max_.cwiseMax(p);
    }
    const Eigen::Vector2d span = (max_ - min_).cwiseMax(1e-9);
    cell_ = std::max(std::sqrt(2.0 * span.x() * span.y() / static_cast<double>(pts.size())), 1e-6);
    nx_ = static_cast<long>(span.x() / cell_) + 1;
    ny_ = static_cast<long>(span.y() / cell_) + 1;
    start_.assign(static_cast<std::size_t>(nx_ * ny_) + 1, 0);
    std::vector<std::size_t> cell_of(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      cell_of[i] = static_cast<std::size_t>(clamp_y(col(pts[i].y() - min_.y())) * nx_ +
                                            clamp_x(col(pts[i].x() - min_.x())));
      ++start_[cell_of[i] + 1];
    }
    for (std::size_t c = 1; c < start_.size(); ++c) start_[c] += start_[c - 1];
    items_.resize(pts.size());
    auto fill = start_;
    for (std::size_t i = 0; i < pts.size(); ++i) items_[fill[cell_of[i]]++] = i;
  }

  std::size_t nearest(const Eigen::Vector2d& q, double& best_d2) const {
    const long cx = col(q.x() - min_.x()), cy = col(q.y() - min_.y());
    const long reach = std::max({std::abs(cx), std::abs(cx - nx_), std::abs(cy), std::abs(cy - ny_)}) + 1;
    std::size_t best = 0;
    best_d2 = std::numeric_limits<double>::infinity();
    auto visit = [&](long x, long y) {
      if (x < 0 || y < 0 || x >= nx_ || y >= ny_) return;
      const auto c = static_cast<std::size_t>(y * nx_ + x);
      for (std::size_t k = start_[c]; k < start_[c + 1]; ++k) {
        const std::size_t i = items_[k];
        const double d2 = (pts_[i] - q).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
          best_d2 = d2;
          best = i;
        }
      }
    };
    for (long r = 0; r <= reach; ++r) {
      if (r == 0) {
        visit(cx, cy);
      } else {
        for (long x = cx - r; x <= cx + r; ++x) {
          visit(x, cy - r);
          visit(x, cy + r);
        }
        for (long y = cy - r + 1; y <= cy + r - 1; ++y) {
          visit(cx - r, y);
          visit(cx + r, y);
        }
      }
      const double bound = static_cast<double>(r) * cell_;
      if (best_d2 <= bound * bound) break;
    }
    return best;
  }

 private:
  long col(double v) const { return static_cast<long>(std::floor(v / cell_)); }
  long clamp_x(long v) const { return std::clamp(v, 0L, nx_ - 1); }
  long clamp_y(long v) const { return std::clamp(v, 0L, ny_ - 1); }

  std::span<const Eigen::Vector2d> pts_;
  Eigen::Vector2d min_, max_;
  double cell_ = 1.0;
  long nx_ = 1, ny_ = 1;
  std::vector<std::size_t> start_, items_;
};

}  // namespace

Se2Transform fit_rigid_2d(std::span<const Eigen::Vector2d> source,
                          std::span<const Eigen::Vector2d> target) {
  const auto n = static_cast<double>(source.size());
  Eigen::Vector2d ms = Eigen::Vector2d::Zero(), mt = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    ms += source[i];
    mt += target[i];
  }
  ms /= n;
  mt /= n;
  Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    h += (target[i] - mt) * (source[i] - ms).transpose();
  }
  const Eigen::JacobiSVD<Eigen::Matrix2d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix2d d = Eigen::Matrix2d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(1, 1) = -1.0;
  const Eigen::Matrix2d r = svd.matrixU() * d * svd.matrixV().transpose();
  const Eigen::Vector2d t = mt - r * ms;
  return {t.x(), t.y(), std::atan2(r(1, 0), r(0, 0))};
}

IcpResult icp2d(std::span<const Eigen::Vector2d> source, std::span<const Eigen::Vector2d> target,
                const Se2Transform& init, const IcpConfig& cfg) {
  check_set(source, "source");
  check_set(target, "target");
  IcpResult out{init, std::numeric_limits<double>::infinity(), 0};
  const GridIndex index(target);
  std::vector<Eigen::Vector2d> moved(source.size()), matched(source.size());
  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    double total = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
      moved[i] = out.transform.apply(source[i]);
      double best = 0.0;
      matched[i] = target[index.nearest(moved[i], best)];
      total += std::sqrt(best);
    }
    const double mean = total / static_cast<double>(source.size());
    out.mean_distance = mean;
    out.iterations = iter + 1;
    if (std::abs(previous - mean) < cfg.tolerance) break;
    previous = mean;
    out.transform = fit_rigid_2d(source, matched);
  }
  return out;
}

Se2Transform icp2d_baseline(std::span<const Eigen::Vector2d> source,
                            std::span<const Eigen::Vector2d> target, const Se2Transform& init) {
  return icp2d(source, target, init).transform;
}

}  // namespace forestgeo::align
