#include "forestgeo/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "forestgeo/errors.hpp"

namespace forestgeo {

std::optional<std::size_t> GridGeometry::cell_of(double x, double y) const {
  const double u = std::floor((x - origin_x) / resolution);
  const double v = std::floor((y - origin_y) / resolution);
  if (!(u >= 0.0 && v >= 0.0 && u < static_cast<double>(width) &&
        v < static_cast<double>(height))) {
    return std::nullopt;
  }
  return index(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
}

GridGeometry GridGeometry::covering(double min_x, double min_y, double max_x, double max_y,
                                    double resolution) {
  if (!(resolution > 0.0) || !std::isfinite(resolution)) {
    throw ArgumentError("grid resolution must be positive");
  }
  if (!(max_x >= min_x) || !(max_y >= min_y)) throw ArgumentError("empty grid extent");
  GridGeometry g;
  g.resolution = resolution;
  g.origin_x = std::floor(min_x / resolution) * resolution;
  g.origin_y = std::floor(min_y / resolution) * resolution;
  g.width = static_cast<std::size_t>(std::floor((max_x - g.origin_x) / resolution)) + 1;
  g.height = static_cast<std::size_t>(std::floor((max_y - g.origin_y) / resolution)) + 1;
  return g;
}

void GridGeometry::validate() const {
  if (!(resolution > 0.0) || !std::isfinite(resolution)) {
    throw ArgumentError("grid resolution must be positive");
  }
  if (width < 1 || height < 1) throw ArgumentError("grid must have at least one cell");
  if (!std::isfinite(origin_x) || !std::isfinite(origin_y)) {
    throw ArgumentError("grid origin must be finite");
  }
}

double GridField::sample_clamped(double x, double y) const {
  const auto& g = geometry;
  double u = (x - g.origin_x) / g.resolution - 0.5;
  double v = (y - g.origin_y) / g.resolution - 0.5;
  u = std::clamp(u, 0.0, static_cast<double>(g.width - 1));
  v = std::clamp(v, 0.0, static_cast<double>(g.height - 1));
  const auto c0 = static_cast<std::size_t>(u);
  const auto r0 = static_cast<std::size_t>(v);
  const std::size_t c1 = std::min(c0 + 1, g.width - 1);
  const std::size_t r1 = std::min(r0 + 1, g.height - 1);
  const double fu = u - static_cast<double>(c0);
  const double fv = v - static_cast<double>(r0);
  const double a = at(c0, r0) * (1.0 - fu) + at(c1, r0) * fu;
  const double b = at(c0, r1) * (1.0 - fu) + at(c1, r1) * fu;
  return a * (1.0 - fv) + b * fv;
}

GridField normalize_field(const GridField& field) {
  GridField out = field;
  if (out.values.empty()) return out;
  const auto [mn, mx] = std::minmax_element(out.values.begin(), out.values.end());
  const double lo = *mn, hi = *mx;
  if (!(hi > lo)) {
    std::fill(out.values.begin(), out.values.end(), 0.0);
    return out;
  }
  const double span = hi - lo;
  for (auto& v : out.values) v = (v - lo) / span;
  return out;
}

namespace {

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated grid dump");
  return v;
}

}  // namespace

void write_grid_dump(const GridField& field, const std::filesystem::path& path) {
  const auto& g = field.geometry;
  g.validate();
  if (g.width > std::numeric_limits<std::uint32_t>::max() ||
      g.height > std::numeric_limits<std::uint32_t>::max()) {
    throw ArgumentError("grid too large for dump format");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  put(out, g.origin_x);
  put(out, g.origin_y);
  put(out, g.resolution);
  put(out, static_cast<std::uint32_t>(g.width));
  put(out, static_cast<std::uint32_t>(g.height));
  for (double v : field.values) put(out, static_cast<float>(v));
  if (!out) throw IoError("write failed: " + path.string());
}

GridField read_grid_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  GridGeometry g;
  g.origin_x = get<double>(in);
  g.origin_y = get<double>(in);
  g.resolution = get<double>(in);
  g.width = get<std::uint32_t>(in);
  g.height = get<std::uint32_t>(in);
  g.validate();
  GridField field(g);
  for (auto& v : field.values) v = get<float>(in);
  return field;
}

}  // namespace forestgeo
