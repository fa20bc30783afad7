#include "forestgeo/detail/cluster.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <unordered_map>

namespace forestgeo::detail {
namespace {

struct DisjointSet {
  explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) parent[b] = a;
    else parent[a] = b;
  }
  std::vector<std::size_t> parent;
};

std::uint64_t key(std::int64_t x, std::int64_t y, std::int64_t z) {
  return (static_cast<std::uint64_t>(x & 0x1fffff) << 42) |
         (static_cast<std::uint64_t>(y & 0x1fffff) << 21) | static_cast<std::uint64_t>(z & 0x1fffff);
}

}  // namespace

std::vector<std::vector<std::size_t>> cluster_by_radius(std::span<const Eigen::Vector3d> points,
                                                        double radius, bool planar) {
  const std::size_t n = points.size();
  DisjointSet sets(n);
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets;
  auto cell = [&](double v) { return static_cast<std::int64_t>(std::floor(v / radius)); };
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = points[i];
    buckets[key(cell(p.x()), cell(p.y()), planar ? 0 : cell(p.z()))].push_back(i);
  }
  const double r2 = radius * radius;
  const int dz_span = planar ? 0 : 1;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = points[i];
    const std::int64_t cx = cell(p.x()), cy = cell(p.y()), cz = planar ? 0 : cell(p.z());
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dz = -dz_span; dz <= dz_span; ++dz) {
          auto it = buckets.find(key(cx + dx, cy + dy, cz + dz));
          if (it == buckets.end()) continue;
          for (std::size_t j : it->second) {
            if (j <= i) continue;
            Eigen::Vector3d d = points[j] - p;
            if (planar) d.z() = 0.0;
            if (d.squaredNorm() < r2) sets.unite(i, j);
          }
        }
      }
    }
  }
  std::vector<std::vector<std::size_t>> clusters;
  std::unordered_map<std::size_t, std::size_t> root_to_cluster;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = sets.find(i);
    auto [it, inserted] = root_to_cluster.try_emplace(root, clusters.size());
    if (inserted) clusters.emplace_back();
    clusters[it->second].push_back(i);
  }
  return clusters;
}

}  // namespace forestgeo::detail
