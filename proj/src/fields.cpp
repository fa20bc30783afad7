#include "forestgeo/fields.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "forestgeo/detail/cluster.hpp"
#include "forestgeo/errors.hpp"

namespace forestgeo::fields {
namespace {

GridGeometry cloud_geometry(const PointCloud& cloud, double resolution) {
  if (cloud.empty()) throw ArgumentError("point cloud is empty");
  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_x;
  for (const auto& p : cloud.points) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }
  return GridGeometry::covering(min_x, min_y, max_x, max_y, resolution);
}

// Linear interpolation between order statistics.
double percentile(std::vector<double>& v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double f = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - f) + v[hi] * f;
}

void fill_nearest(GridField& field, const std::vector<std::uint8_t>& observed) {
  const auto& g = field.geometry;
  const auto w = static_cast<long>(g.width), h = static_cast<long>(g.height);
  const GridField source = field;
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      if (observed[g.index(c, r)]) continue;
      long best_d2 = std::numeric_limits<long>::max();
      double best = 0.0;
      for (long ring = 1; ring <= std::max(w, h); ++ring) {
        if (ring * ring > best_d2) break;
        for (long dr = -ring; dr <= ring; ++dr) {
          const long step = (dr == -ring || dr == ring) ? 1 : 2 * ring;
          for (long dc = -ring; dc <= ring; dc += step) {
            const long rr = r + dr, cc = c + dc;
            if (rr < 0 || cc < 0 || rr >= h || cc >= w) continue;
            if (!observed[g.index(cc, rr)]) continue;
            const long d2 = dr * dr + dc * dc;
            if (d2 < best_d2) {
              best_d2 = d2;
              best = source.at(cc, rr);
            }
          }
        }
      }
      field.at(c, r) = best;
    }
  }
}

GridField median3x3(const GridField& in) {
  GridField out = in;
  const auto& g = in.geometry;
  std::vector<double> window;
  window.reserve(9);
  for (std::size_t r = 0; r < g.height; ++r) {
    for (std::size_t c = 0; c < g.width; ++c) {
      window.clear();
      for (long dr = -1; dr <= 1; ++dr) {
        for (long dc = -1; dc <= 1; ++dc) {
          const long rr = static_cast<long>(r) + dr, cc = static_cast<long>(c) + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<long>(g.height) ||
              cc >= static_cast<long>(g.width)) {
            continue;
          }
          window.push_back(in.at(cc, rr));
        }
      }
      std::sort(window.begin(), window.end());
      const std::size_t n = window.size();
      out.at(c, r) = n % 2 ? window[n / 2] : 0.5 * (window[n / 2 - 1] + window[n / 2]);
    }
  }
  return out;
}

// 1D convolution along rows (horizontal) or columns with edge replication.
std::vector<double> convolve_axis(const std::vector<double>& in, const GridGeometry& g,
                                  const std::vector<double>& kernel, bool along_rows) {
  const long radius = static_cast<long>(kernel.size() / 2);
  const long w = static_cast<long>(g.width), h = static_cast<long>(g.height);
  std::vector<double> out(in.size(), 0.0);
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      double acc = 0.0;
      for (long k = -radius; k <= radius; ++k) {
        long cc = c, rr = r;
        if (along_rows) cc = std::clamp(c + k, 0L, w - 1);
        else rr = std::clamp(r + k, 0L, h - 1);
        acc += kernel[static_cast<std::size_t>(k + radius)] * in[static_cast<std::size_t>(rr * w + cc)];
      }
      out[static_cast<std::size_t>(r * w + c)] = acc;
    }
  }
  return out;
}

}  // namespace

void ScaleSet::validate() const {
  if (sigmas.empty()) throw ArgumentError("scale set is empty");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] > 0.0) || !std::isfinite(sigmas[i])) {
      throw ArgumentError("scales must be positive");
    }
    if (i > 0 && !(sigmas[i] > sigmas[i - 1])) {
      throw ArgumentError("scales must be strictly increasing");
    }
  }
}

GroundEstimate estimate_ground_detailed(const PointCloud& cloud, double cell) {
  const GridGeometry g = cloud_geometry(cloud, cell);
  std::vector<std::vector<double>> bins(g.cells());
  for (const auto& p : cloud.points) {
    if (auto idx = g.cell_of(p.x, p.y)) bins[*idx].push_back(p.z);
  }
  GroundEstimate out{GridField(g), std::vector<std::uint8_t>(g.cells(), 0)};
  bool any = false;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (bins[i].empty()) continue;
    out.elevation.values[i] = percentile(bins[i], 0.05);
    out.observed[i] = 1;
    any = true;
  }
  if (!any) throw DegenerateError("no points fall inside the ground grid");
  fill_nearest(out.elevation, out.observed);
  out.elevation = median3x3(out.elevation);
  return out;
}

GridField estimate_ground(const PointCloud& cloud, double cell) {
  return estimate_ground_detailed(cloud, cell).elevation;
}

GridField compute_chm(const PointCloud& cloud, const GridField& ground, double resolution) {
  if (!(resolution > 0.0)) throw ArgumentError("CHM resolution must be positive");
  const GridGeometry g = cloud_geometry(cloud, resolution);
  GridField top(g, -std::numeric_limits<double>::infinity());
  for (const auto& p : cloud.points) {
    if (auto idx = g.cell_of(p.x, p.y)) top.values[*idx] = std::max(top.values[*idx], p.z);
  }
  GridField chm(g, 0.0);
  for (std::size_t r = 0; r < g.height; ++r) {
    for (std::size_t c = 0; c < g.width; ++c) {
      const double z = top.at(c, r);
      if (!std::isfinite(z)) continue;
      const Eigen::Vector2d x = g.cell_center(c, r);
      chm.at(c, r) = std::max(0.0, z - ground.sample_clamped(x.x(), x.y()));
    }
  }
  chm.anchor = cloud.anchor;
  return chm;
}

GridField log_response(const GridField& chm, double sigma) {
  const double res = chm.resolution();
  if (!(sigma >= res)) {
    throw ArgumentError("LoG scale " + std::to_string(sigma) +
                        " m is below the grid resolution " + std::to_string(res) + " m");
  }
  const auto radius = static_cast<long>(std::ceil(kKernelTruncation * sigma / res));
  std::vector<double> gauss(static_cast<std::size_t>(2 * radius + 1));
  std::vector<double> second(gauss.size());
  const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * sigma);
  const double s2 = sigma * sigma;
  for (long k = -radius; k <= radius; ++k) {
    const double x = static_cast<double>(k) * res;
    const double gv = norm * std::exp(-x * x / (2.0 * s2));
    gauss[static_cast<std::size_t>(k + radius)] = gv;
    second[static_cast<std::size_t>(k + radius)] = (x * x / (s2 * s2) - 1.0 / s2) * gv;
  }
  // sigma^2 LoG = sigma^2 (G''(x) G(y) + G(x) G''(y)); res^2 is the cell area element.
  const double scale = s2 * res * res;
  const auto& g = chm.geometry;
  const auto a = convolve_axis(convolve_axis(chm.values, g, second, true), g, gauss, false);
  const auto b = convolve_axis(convolve_axis(chm.values, g, gauss, true), g, second, false);
  double sum_g = 0.0, sum_s = 0.0;
  for (std::size_t k = 0; k < gauss.size(); ++k) {
    sum_g += gauss[k];
    sum_s += second[k];
  }
  // Removing the kernel's residual DC gain makes the response of a constant field zero.
  const double dc = scale * 2.0 * sum_g * sum_s;
  GridField out(g);
  out.anchor = chm.anchor;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = scale * (a[i] + b[i]) - dc * chm.values[i];
  }
  return out;
}

GridField aerial_likelihood_raw(const GridField& chm, const ScaleSet& scales) {
  scales.validate();
  for (double v : chm.values) {
    if (!std::isfinite(v)) throw ArgumentError("CHM contains non-finite values");
  }
  if (scales.sigmas.front() < chm.resolution()) {
    throw ArgumentError("LoG scale below the grid resolution");
  }
  GridField out(chm.geometry, 0.0);
  out.anchor = chm.anchor;
  const auto [mn, mx] = std::minmax_element(chm.values.begin(), chm.values.end());
  if (*mn == *mx) return out;
  for (double sigma : scales.sigmas) {
    const GridField resp = log_response(chm, sigma);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      out.values[i] = std::max(out.values[i], std::abs(resp.values[i]));
    }
  }
  return out;
}

GridField aerial_likelihood(const GridField& chm, const ScaleSet& scales) {
  return normalize_field(aerial_likelihood_raw(chm, scales));
}

TrunkSet extract_trunks(const PointCloud& cloud, const GridField& ground,
                        const TrunkParams& params) {
  std::vector<Eigen::Vector3d> slice;
  for (const auto& p : cloud.points) {
    const double hag = p.z - ground.sample_clamped(p.x, p.y);
    if (hag >= params.slice_min && hag <= params.slice_max) slice.emplace_back(p.x, p.y, p.z);
  }
  TrunkSet trunks;
  for (const auto& members : detail::cluster_by_radius(slice, params.link_radius, true)) {
    if (members.size() < params.min_points) continue;
    double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
    double max_x = -min_x, max_y = -min_x;
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    for (std::size_t i : members) {
      const auto& q = slice[i];
      min_x = std::min(min_x, q.x());
      max_x = std::max(max_x, q.x());
      min_y = std::min(min_y, q.y());
      max_y = std::max(max_y, q.y());
      sum += q.head<2>();
    }
    if (std::max(max_x - min_x, max_y - min_y) > params.max_extent) continue;
    trunks.positions.push_back(sum / static_cast<double>(members.size()));
  }
  return trunks;
}

GridField kde_field(const TrunkSet& trunks, double bandwidth, const GridGeometry& geometry) {
  if (!(bandwidth > 0.0)) throw ArgumentError("KDE bandwidth must be positive");
  geometry.validate();
  GridField out(geometry, 0.0);
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  std::vector<double> ex(geometry.width), ey(geometry.height);
  // exp(-(dx^2 + dy^2) / 2h^2) factors into per-axis terms.
  for (const auto& p : trunks.positions) {
    for (std::size_t c = 0; c < geometry.width; ++c) {
      const double dx = geometry.origin_x + (static_cast<double>(c) + 0.5) * geometry.resolution - p.x();
      ex[c] = std::exp(-dx * dx * inv);
    }
    for (std::size_t r = 0; r < geometry.height; ++r) {
      const double dy = geometry.origin_y + (static_cast<double>(r) + 0.5) * geometry.resolution - p.y();
      ey[r] = std::exp(-dy * dy * inv);
    }
    for (std::size_t r = 0; r < geometry.height; ++r) {
      double* row = out.values.data() + r * geometry.width;
      const double fy = ey[r];
      for (std::size_t c = 0; c < geometry.width; ++c) row[c] += ex[c] * fy;
    }
  }
  return out;
}

GridField terrestrial_likelihood(const TrunkSet& trunks, double bandwidth,
                                 const GridGeometry& geometry) {
  if (trunks.empty()) throw DegenerateError("terrestrial field needs at least one trunk");
  return normalize_field(kde_field(trunks, bandwidth, geometry));
}

std::vector<Eigen::Vector3d> extract_markers(const PointCloud& cloud, const MarkerParams& params) {
  if (!cloud.has_intensity) throw ArgumentError("marker extraction requires intensity");
  std::vector<Eigen::Vector3d> bright;
  for (const auto& p : cloud.points) {
    if (p.intensity > params.intensity_threshold) bright.emplace_back(p.x, p.y, p.z);
  }
  std::vector<Eigen::Vector3d> centroids;
  for (const auto& members : detail::cluster_by_radius(bright, params.link_radius, false)) {
    if (members.size() < params.min_points) continue;
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (std::size_t i : members) sum += bright[i];
    centroids.push_back(sum / static_cast<double>(members.size()));
  }
  return centroids;
}

}  // namespace forestgeo::fields
