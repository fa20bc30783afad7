#include "forestgeo/align.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "forestgeo/detail/parallel.hpp"
#include "forestgeo/detail/rng.hpp"
#include "forestgeo/fields.hpp"
#include "forestgeo/geometry.hpp"

namespace forestgeo::align {
namespace {

constexpr double kEdgeSlack = 1e-9;  // in cell units

/// Maps target cell (c, r) to continuous moving-grid coordinates (u, v), where
/// integer (u, v) are moving cell centers. Affine in (c, r).
struct WarpMap {
  double u0, uc, ur;
  double v0, vc, vr;

  WarpMap(const GridField& moving, const Se2Transform& theta, const GridGeometry& target) {
    const Se2Transform inv = theta.inverse();
    const Eigen::Matrix2d rot = inv.rotation();
    const auto& m = moving.geometry;
    const double scale = target.resolution / m.resolution;
    const Eigen::Vector2d c00 = inv.apply(target.cell_center(0, 0));
    u0 = (c00.x() - m.origin_x) / m.resolution - 0.5;
    v0 = (c00.y() - m.origin_y) / m.resolution - 0.5;
    uc = rot(0, 0) * scale;
    vc = rot(1, 0) * scale;
    ur = rot(0, 1) * scale;
    vr = rot(1, 1) * scale;
  }
};

/// Bilinear sample at (u, v); false when outside the moving domain.
inline bool sample(const GridField& moving, double u, double v, double& out) {
  const auto& m = moving.geometry;
  const double umax = static_cast<double>(m.width - 1);
  const double vmax = static_cast<double>(m.height - 1);
  if (!(u >= -kEdgeSlack && u <= umax + kEdgeSlack && v >= -kEdgeSlack &&
        v <= vmax + kEdgeSlack)) {
    return false;
  }
  u = std::clamp(u, 0.0, umax);
  v = std::clamp(v, 0.0, vmax);
  const auto c0 = static_cast<std::size_t>(u);
  const auto r0 = static_cast<std::size_t>(v);
  const std::size_t c1 = std::min(c0 + 1, m.width - 1);
  const std::size_t r1 = std::min(r0 + 1, m.height - 1);
  const double fu = u - static_cast<double>(c0);
  const double fv = v - static_cast<double>(r0);
  const double* row0 = moving.values.data() + r0 * m.width;
  const double* row1 = moving.values.data() + r1 * m.width;
  const double a = row0[c0] * (1.0 - fu) + row0[c1] * fu;
  const double b = row1[c0] * (1.0 - fu) + row1[c1] * fu;
  out = a * (1.0 - fv) + b * fv;
  return true;
}

inline int bin_of(double v, int bins) {
  if (!(v > 0.0)) return 0;
  if (v >= 1.0) return bins - 1;
  return std::min(static_cast<int>(v * bins), bins - 1);
}

double entropy(std::span<const std::uint64_t> counts, double total) {
  double h = 0.0;
  for (std::uint64_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h;
}

/// NMI from a joint histogram (row index = A bin, column = B bin).
double nmi_from_joint(const std::vector<std::uint64_t>& joint, int bins, std::uint64_t n) {
  std::vector<std::uint64_t> ha(static_cast<std::size_t>(bins), 0), hb(ha.size(), 0);
  for (int i = 0; i < bins; ++i) {
    for (int j = 0; j < bins; ++j) {
      const std::uint64_t c = joint[static_cast<std::size_t>(i * bins + j)];
      ha[static_cast<std::size_t>(i)] += c;
      hb[static_cast<std::size_t>(j)] += c;
    }
  }
  const double total = static_cast<double>(n);
  const double h_a = entropy(ha, total);
  const double h_b = entropy(hb, total);
  const double h_ab = entropy(joint, total);
  const double denom = h_a + h_b;
  if (!(denom > 0.0)) return 0.0;
  return std::clamp(2.0 * (h_a + h_b - h_ab) / denom, 0.0, 1.0);
}

void check_overlap(std::uint64_t valid, std::size_t cells, const NmiConfig& cfg) {
  if (cells == 0 ||
      static_cast<double>(valid) < cfg.min_overlap_fraction * static_cast<double>(cells)) {
    throw OverlapError("overlap " + std::to_string(valid) + "/" + std::to_string(cells) +
                       " below the minimum fraction");
  }
}

/// Warp + histogram in one pass; identical arithmetic to warp_field followed by nmi.
double fused_nmi(const GridField& aerial, const std::vector<int>& aerial_bins,
                 const GridField& terrestrial, const Se2Transform& theta, const NmiConfig& cfg,
                 std::vector<std::uint64_t>& joint) {
  const auto& g = aerial.geometry;
  const WarpMap map(terrestrial, theta, g);
  std::fill(joint.begin(), joint.end(), 0);
  std::uint64_t valid = 0;
  for (std::size_t r = 0; r < g.height; ++r) {
    const double rr = static_cast<double>(r);
    for (std::size_t c = 0; c < g.width; ++c) {
      const double cc = static_cast<double>(c);
      const double u = map.u0 + map.uc * cc + map.ur * rr;
      const double v = map.v0 + map.vc * cc + map.vr * rr;
      double value;
      if (!sample(terrestrial, u, v, value)) continue;
      ++valid;
      ++joint[static_cast<std::size_t>(aerial_bins[r * g.width + c] * cfg.bins +
                                       bin_of(value, cfg.bins))];
    }
  }
  if (static_cast<double>(valid) < cfg.min_overlap_fraction * static_cast<double>(g.cells())) {
    return kDegenerate;
  }
  return nmi_from_joint(joint, cfg.bins, valid);
}

double theta_norm(const Se2Transform& t) {
  return std::sqrt(t.tx() * t.tx() + t.ty() * t.ty() + t.psi() * t.psi());
}

}  // namespace

void SearchRegion::validate() const {
  if (!(tx_min < tx_max) || !(ty_min < ty_max) || !(psi_min < psi_max)) {
    throw ArgumentError("search region needs min < max on every axis");
  }
}

bool SearchRegion::contains(const Se2Transform& t) const {
  return t.tx() >= tx_min && t.tx() <= tx_max && t.ty() >= ty_min && t.ty() <= ty_max &&
         t.psi() >= psi_min && t.psi() <= psi_max;
}

Se2Transform SearchRegion::clamp(double tx, double ty, double psi) const {
  return {std::clamp(tx, tx_min, tx_max), std::clamp(ty, ty_min, ty_max),
          std::clamp(psi, psi_min, psi_max)};
}

void NmiConfig::validate() const {
  if (bins < 2) throw ArgumentError("NMI needs at least 2 bins");
  if (!(min_overlap_fraction > 0.0 && min_overlap_fraction <= 1.0)) {
    throw ArgumentError("min_overlap_fraction must be in (0, 1]");
  }
}

WarpResult warp_field(const GridField& moving, const Se2Transform& theta,
                      const GridGeometry& target) {
  target.validate();
  WarpResult out{GridField(target, 0.0), std::vector<std::uint8_t>(target.cells(), 0)};
  out.field.anchor = moving.anchor;
  const WarpMap map(moving, theta, target);
  for (std::size_t r = 0; r < target.height; ++r) {
    const double rr = static_cast<double>(r);
    for (std::size_t c = 0; c < target.width; ++c) {
      const double cc = static_cast<double>(c);
      const double u = map.u0 + map.uc * cc + map.ur * rr;
      const double v = map.v0 + map.vc * cc + map.vr * rr;
      double value;
      if (sample(moving, u, v, value)) {
        out.field.values[target.index(c, r)] = value;
        out.mask[target.index(c, r)] = 1;
      }
    }
  }
  return out;
}

double nmi(const GridField& a, const GridField& b, std::span<const std::uint8_t> mask,
           const NmiConfig& cfg) {
  cfg.validate();
  if (a.values.size() != b.values.size()) throw ArgumentError("NMI fields differ in size");
  if (!mask.empty() && mask.size() != a.values.size()) {
    throw ArgumentError("NMI mask size mismatch");
  }
  std::vector<std::uint64_t> joint(static_cast<std::size_t>(cfg.bins * cfg.bins), 0);
  std::uint64_t valid = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    ++valid;
    ++joint[static_cast<std::size_t>(bin_of(a.values[i], cfg.bins) * cfg.bins +
                                     bin_of(b.values[i], cfg.bins))];
  }
  check_overlap(valid, a.values.size(), cfg);
  return nmi_from_joint(joint, cfg.bins, valid);
}

std::vector<double> evaluate_batch(const GridField& aerial, const GridField& terrestrial,
                                   std::span<const Se2Transform> thetas, const NmiConfig& cfg) {
  cfg.validate();
  std::vector<int> aerial_bins(aerial.values.size());
  for (std::size_t i = 0; i < aerial.values.size(); ++i) {
    aerial_bins[i] = bin_of(aerial.values[i], cfg.bins);
  }
  std::vector<double> out(thetas.size(), kDegenerate);
  detail::parallel_for(thetas.size(), [&](std::size_t i) {
    std::vector<std::uint64_t> joint(static_cast<std::size_t>(cfg.bins * cfg.bins));
    out[i] = fused_nmi(aerial, aerial_bins, terrestrial, thetas[i], cfg, joint);
  });
  return out;
}

std::vector<Se2Transform> latin_hypercube_starts(const SearchRegion& region, std::size_t count,
                                                 std::uint64_t seed) {
  region.validate();
  detail::Rng rng = detail::Rng(seed).split("latin-hypercube");
  const std::array<std::pair<double, double>, 3> bounds{{{region.tx_min, region.tx_max},
                                                         {region.ty_min, region.ty_max},
                                                         {region.psi_min, region.psi_max}}};
  std::array<std::vector<double>, 3> coords;
  for (std::size_t d = 0; d < 3; ++d) {
    std::vector<std::size_t> strata(count);
    std::iota(strata.begin(), strata.end(), 0);
    for (std::size_t i = count; i > 1; --i) std::swap(strata[i - 1], strata[rng.below(i)]);
    coords[d].resize(count);
    const auto [lo, hi] = bounds[d];
    for (std::size_t i = 0; i < count; ++i) {
      const double u = (static_cast<double>(strata[i]) + rng.uniform()) / static_cast<double>(count);
      coords[d][i] = lo + u * (hi - lo);
    }
  }
  std::vector<Se2Transform> starts;
  starts.reserve(count);
  for (std::size_t i = 0; i < count; ++i) starts.emplace_back(coords[0][i], coords[1][i], coords[2][i]);
  return starts;
}

NelderMeadResult refine(const GridField& aerial, const GridField& terrestrial,
                        const SearchRegion& region, const Se2Transform& start,
                        const MultiStartConfig& cfg) {
  using Vec = Eigen::Vector3d;
  std::vector<int> aerial_bins(aerial.values.size());
  for (std::size_t i = 0; i < aerial.values.size(); ++i) {
    aerial_bins[i] = bin_of(aerial.values[i], cfg.nmi.bins);
  }
  std::vector<std::uint64_t> joint(static_cast<std::size_t>(cfg.nmi.bins * cfg.nmi.bins));
  auto clamp = [&](const Vec& x) {
    return Vec(std::clamp(x.x(), region.tx_min, region.tx_max),
               std::clamp(x.y(), region.ty_min, region.ty_max),
               std::clamp(x.z(), region.psi_min, region.psi_max));
  };
  // Minimized cost: -NMI, +inf where the overlap is degenerate.
  auto cost = [&](const Vec& x) {
    const double v =
        fused_nmi(aerial, aerial_bins, terrestrial, Se2Transform(x.x(), x.y(), x.z()), cfg.nmi, joint);
    return v == kDegenerate ? std::numeric_limits<double>::infinity() : -v;
  };

  std::array<Vec, 4> simplex;
  std::array<double, 4> f;
  simplex[0] = clamp(Vec(start.tx(), start.ty(), start.psi()));
  const Vec steps(cfg.step_translation, cfg.step_translation, cfg.step_yaw);
  for (int k = 0; k < 3; ++k) {
    Vec p = simplex[0];
    p[k] += steps[k];
    // Step inward when the start sits on the upper bound.
    if (p[k] > (k == 0 ? region.tx_max : k == 1 ? region.ty_max : region.psi_max)) {
      p[k] = simplex[0][k] - steps[k];
    }
    simplex[static_cast<std::size_t>(k + 1)] = clamp(p);
  }
  for (std::size_t i = 0; i < 4; ++i) f[i] = cost(simplex[i]);

  int iter = 0;
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  for (; iter < cfg.max_iterations; ++iter) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
    const double best = f[order[0]], worst = f[order[3]];
    if (std::isinf(best)) break;  // no valid vertex at all
    if (std::isfinite(worst) && worst - best < cfg.tolerance) break;

    Vec centroid = Vec::Zero();
    for (int k = 0; k < 3; ++k) centroid += simplex[order[static_cast<std::size_t>(k)]];
    centroid /= 3.0;
    const std::size_t w = order[3];
    const Vec reflected = clamp(centroid + (centroid - simplex[w]));
    const double fr = cost(reflected);
    if (fr < f[order[0]]) {
      const Vec expanded = clamp(centroid + 2.0 * (centroid - simplex[w]));
      const double fe = cost(expanded);
      if (fe < fr) {
        simplex[w] = expanded;
        f[w] = fe;
      } else {
        simplex[w] = reflected;
        f[w] = fr;
      }
      continue;
    }
    if (fr < f[order[2]]) {
      simplex[w] = reflected;
      f[w] = fr;
      continue;
    }
    const bool outside = fr < f[w];
    const Vec contracted = outside ? clamp(centroid + 0.5 * (reflected - centroid))
                                   : clamp(centroid + 0.5 * (simplex[w] - centroid));
    const double fc = cost(contracted);
    if (fc < (outside ? fr : f[w])) {
      simplex[w] = contracted;
      f[w] = fc;
      continue;
    }
    const Vec& anchor = simplex[order[0]];
    for (std::size_t k = 1; k < 4; ++k) {
      const std::size_t i = order[k];
      simplex[i] = clamp(anchor + 0.5 * (simplex[i] - anchor));
      f[i] = cost(simplex[i]);
    }
  }
  const std::size_t best = static_cast<std::size_t>(std::min_element(f.begin(), f.end()) - f.begin());
  NelderMeadResult out;
  out.theta = Se2Transform(simplex[best].x(), simplex[best].y(), simplex[best].z());
  out.objective = std::isinf(f[best]) ? kDegenerate : -f[best];
  out.iterations = iter;
  return out;
}

AlignmentResult align_multistart(const GridField& aerial, const GridField& terrestrial,
                                 const SearchRegion& region, const MultiStartConfig& cfg) {
  region.validate();
  cfg.nmi.validate();
  if (cfg.starts < 1) throw ArgumentError("multi-start needs at least one start");
  const auto starts = latin_hypercube_starts(region, cfg.starts, cfg.seed);
  std::vector<NelderMeadResult> refined(starts.size());
  detail::parallel_for(starts.size(), [&](std::size_t i) {
    refined[i] = refine(aerial, terrestrial, region, starts[i], cfg);
  });
  AlignmentResult result;
  for (const auto& r : refined) {
    if (r.objective != kDegenerate) result.candidates.push_back({r.theta, r.objective});
  }
  if (result.candidates.empty()) {
    throw OverlapError("no start reached the minimum overlap with the aerial field");
  }
  std::stable_sort(result.candidates.begin(), result.candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     if (a.objective != b.objective) return a.objective > b.objective;
                     return theta_norm(a.theta) < theta_norm(b.theta);
                   });
  result.theta = result.candidates.front().theta;
  result.objective = result.candidates.front().objective;
  return result;
}

double vertical_align(const PointCloud& aerial_cloud, const PointCloud& terrestrial_cloud,
                      const Se2Transform& theta, double ground_cell) {
  const auto aerial = fields::estimate_ground_detailed(aerial_cloud, ground_cell);
  const auto terrestrial =
      fields::estimate_ground_detailed(transform_cloud(terrestrial_cloud, theta), ground_cell);
  const auto& tg = terrestrial.elevation.geometry;
  std::vector<double> diffs;
  for (std::size_t r = 0; r < tg.height; ++r) {
    for (std::size_t c = 0; c < tg.width; ++c) {
      if (!terrestrial.observed[tg.index(c, r)]) continue;
      const Eigen::Vector2d x = tg.cell_center(c, r);
      const auto idx = aerial.elevation.geometry.cell_of(x.x(), x.y());
      if (!idx || !aerial.observed[*idx]) continue;
      diffs.push_back(aerial.elevation.values[*idx] - terrestrial.elevation.at(c, r));
    }
  }
  if (diffs.empty()) throw DegenerateError("no overlapping ground cells for vertical alignment");
  const std::size_t mid = diffs.size() / 2;
  std::nth_element(diffs.begin(), diffs.begin() + static_cast<long>(mid), diffs.end());
  if (diffs.size() % 2) return diffs[mid];
  const double upper = diffs[mid];
  const double lower = *std::max_element(diffs.begin(), diffs.begin() + static_cast<long>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace forestgeo::align
