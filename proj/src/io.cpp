#include "forestgeo/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "forestgeo/errors.hpp"
#include "forestgeo/geodesy.hpp"

namespace forestgeo::io {

static_assert(std::endian::native == std::endian::little,
              "binary PLY/TIFF writers assume a little-endian host");

namespace {

std::ifstream open_in(const std::filesystem::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_number(const std::string& text, std::size_t line) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("invalid number '" + text + "'", line);
  }
  if (!std::isfinite(v)) throw ParseError("non-finite value '" + text + "'", line);
  return v;
}

/// Reads a CSV with a named header and returns rows as doubles ordered by `columns`.
struct CsvTable {
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> lines;
};

CsvTable read_numeric_csv(const std::filesystem::path& path,
                          const std::vector<std::string>& columns) {
  auto in = open_in(path);
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::size_t> index;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    if (index.empty()) {
      for (const auto& col : columns) {
        auto it = std::find(cells.begin(), cells.end(), col);
        if (it == cells.end()) throw ParseError("missing column '" + col + "'", lineno);
        index.push_back(static_cast<std::size_t>(it - cells.begin()));
      }
      width = cells.size();
      continue;
    }
    if (cells.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " fields, got " +
                           std::to_string(cells.size()),
                       lineno);
    }
    std::vector<double> row;
    row.reserve(index.size());
    for (std::size_t k : index) row.push_back(parse_number(cells[k], lineno));
    table.rows.push_back(std::move(row));
    table.lines.push_back(lineno);
  }
  return table;
}

void check_time_order(double prev, double t, std::size_t line, bool allow_equal) {
  if (allow_equal ? t < prev : t <= prev) {
    throw ParseError(t == prev ? "duplicate timestamp" : "timestamps not increasing", line);
  }
}

// --- PLY ---------------------------------------------------------------------

enum class PlyType { kFloat32, kFloat64, kUint8 };

struct PlyProperty {
  std::string name;
  PlyType type;
  std::size_t offset;
};

std::size_t type_size(PlyType t) {
  switch (t) {
    case PlyType::kFloat32: return 4;
    case PlyType::kFloat64: return 8;
    case PlyType::kUint8: return 1;
  }
  return 0;
}

PlyType parse_ply_type(const std::string& name) {
  if (name == "float" || name == "float32") return PlyType::kFloat32;
  if (name == "double" || name == "float64") return PlyType::kFloat64;
  if (name == "uchar" || name == "uint8") return PlyType::kUint8;
  throw PlyError(PlyError::Kind::kUnsupportedProperty, "unsupported PLY property type '" + name + "'");
}

double read_binary_value(const char* data, PlyType t) {
  switch (t) {
    case PlyType::kFloat32: {
      float f;
      std::memcpy(&f, data, 4);
      return f;
    }
    case PlyType::kFloat64: {
      double d;
      std::memcpy(&d, data, 8);
      return d;
    }
    case PlyType::kUint8: return static_cast<unsigned char>(*data);
  }
  return 0.0;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

PointCloud read_ply(const std::filesystem::path& path) {
  using Kind = PlyError::Kind;
  auto in = open_in(path, true);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "ply") {
    throw PlyError(Kind::kMalformedHeader, "missing 'ply' magic");
  }
  bool ascii = false;
  bool have_format = false;
  bool in_vertex = false;
  bool vertex_seen = false;
  std::size_t vertex_count = 0;
  std::vector<PlyProperty> props;
  std::size_t stride = 0;
  while (true) {
    if (!std::getline(in, line)) throw PlyError(Kind::kMalformedHeader, "missing end_header");
    std::istringstream ss(trim(line));
    std::string key;
    ss >> key;
    if (key == "end_header") break;
    if (key.empty() || key == "comment" || key == "obj_info") continue;
    if (key == "format") {
      std::string fmt, version;
      ss >> fmt >> version;
      if (fmt == "ascii") ascii = true;
      else if (fmt != "binary_little_endian")
        throw PlyError(Kind::kMalformedHeader, "unsupported PLY format '" + fmt + "'");
      have_format = true;
    } else if (key == "element") {
      std::string name;
      long long count = -1;
      ss >> name >> count;
      if (ss.fail() || count < 0) throw PlyError(Kind::kMalformedHeader, "bad element line");
      if (vertex_seen && in_vertex) in_vertex = false;
      if (name == "vertex") {
        if (vertex_seen) throw PlyError(Kind::kMalformedHeader, "duplicate vertex element");
        vertex_seen = true;
        in_vertex = true;
        vertex_count = static_cast<std::size_t>(count);
      } else {
        if (!vertex_seen) {
          throw PlyError(Kind::kUnsupportedProperty, "element '" + name + "' before vertex");
        }
        in_vertex = false;
      }
    } else if (key == "property") {
      std::string type, name;
      ss >> type >> name;
      if (type == "list") {
        if (in_vertex) throw PlyError(Kind::kUnsupportedProperty, "list property on vertex");
        continue;
      }
      if (!in_vertex) continue;
      if (name.empty()) throw PlyError(Kind::kMalformedHeader, "property without name");
      const PlyType t = parse_ply_type(type);
      props.push_back({name, t, stride});
      stride += type_size(t);
    } else {
      throw PlyError(Kind::kMalformedHeader, "unexpected header line '" + trim(line) + "'");
    }
  }
  if (!have_format) throw PlyError(Kind::kMalformedHeader, "missing format line");
  if (!vertex_seen) throw PlyError(Kind::kMalformedHeader, "missing vertex element");

  auto find = [&](const std::string& name) -> const PlyProperty* {
    for (const auto& p : props)
      if (p.name == name) return &p;
    return nullptr;
  };
  const PlyProperty* px = find("x");
  const PlyProperty* py = find("y");
  const PlyProperty* pz = find("z");
  if (!px || !py || !pz) throw PlyError(Kind::kMalformedHeader, "vertex lacks x/y/z");
  const PlyProperty* pi = find("intensity");
  const PlyProperty* pr = find("red");
  const PlyProperty* pg = find("green");
  const PlyProperty* pb = find("blue");
  const bool has_rgb = pr && pg && pb;

  PointCloud cloud;
  cloud.has_intensity = pi != nullptr;
  cloud.points.resize(vertex_count);
  if (has_rgb) cloud.colors.resize(vertex_count);

  std::vector<double> values(props.size());
  std::vector<char> record(stride);
  auto value_of = [&](const PlyProperty* p) {
    return values[static_cast<std::size_t>(p - props.data())];
  };
  for (std::size_t i = 0; i < vertex_count; ++i) {
    if (ascii) {
      if (!std::getline(in, line)) {
        throw PlyError(Kind::kElementCountMismatch,
                       "expected " + std::to_string(vertex_count) + " vertices, found " +
                           std::to_string(i));
      }
      std::istringstream ss(line);
      for (auto& v : values) {
        if (!(ss >> v)) {
          throw PlyError(Kind::kElementCountMismatch, "short vertex record " + std::to_string(i));
        }
      }
    } else {
      if (!in.read(record.data(), static_cast<std::streamsize>(stride))) {
        throw PlyError(Kind::kElementCountMismatch,
                       "expected " + std::to_string(vertex_count) + " vertices, found " +
                           std::to_string(i));
      }
      for (std::size_t k = 0; k < props.size(); ++k) {
        values[k] = read_binary_value(record.data() + props[k].offset, props[k].type);
      }
    }
    Point3& p = cloud.points[i];
    p.x = value_of(px);
    p.y = value_of(py);
    p.z = value_of(pz);
    if (pi) p.intensity = static_cast<float>(value_of(pi));
    if (has_rgb) {
      cloud.colors[i] = {static_cast<std::uint8_t>(value_of(pr)),
                         static_cast<std::uint8_t>(value_of(pg)),
                         static_cast<std::uint8_t>(value_of(pb))};
    }
  }
  return cloud;
}

void write_ply(const PointCloud& cloud, const std::filesystem::path& path, PlyFormat format) {
  cloud.validate();
  const bool ascii = format == PlyFormat::kAscii;
  auto out = open_out(path, !ascii);
  out << "ply\n"
      << (ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n")
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_intensity) out << "property float intensity\n";
  if (cloud.has_colors()) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point3& p = cloud.points[i];
    const float xyz[4] = {static_cast<float>(p.x), static_cast<float>(p.y),
                          static_cast<float>(p.z), p.intensity};
    const int nf = cloud.has_intensity ? 4 : 3;
    if (ascii) {
      for (int k = 0; k < nf; ++k) out << (k ? " " : "") << format_double(xyz[k]);
      if (cloud.has_colors()) {
        const Rgb& c = cloud.colors[i];
        out << ' ' << int(c.r) << ' ' << int(c.g) << ' ' << int(c.b);
      }
      out << '\n';
    } else {
      out.write(reinterpret_cast<const char*>(xyz), nf * 4);
      if (cloud.has_colors()) {
        const Rgb& c = cloud.colors[i];
        const unsigned char rgb[3] = {c.r, c.g, c.b};
        out.write(reinterpret_cast<const char*>(rgb), 3);
      }
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

// --- CSV ---------------------------------------------------------------------

std::vector<Se3Pose> read_trajectory(const std::filesystem::path& path) {
  const auto table =
      read_numeric_csv(path, {"t", "tx", "ty", "tz", "qx", "qy", "qz", "qw"});
  std::vector<Se3Pose> out;
  out.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    if (!out.empty()) check_time_order(out.back().t, r[0], table.lines[i], false);
    Eigen::Quaterniond q(r[7], r[4], r[5], r[6]);
    if (q.norm() < 1e-6) throw ParseError("zero quaternion", table.lines[i]);
    Se3Pose pose;
    pose.t = r[0];
    pose.translation = {r[1], r[2], r[3]};
    // Renormalizing an already-unit quaternion can move the last bit.
    pose.rotation = std::abs(q.norm() - 1.0) < 1e-12 ? q : q.normalized();
    out.push_back(pose);
  }
  return out;
}

void write_trajectory(const std::vector<Se3Pose>& trajectory, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "t,tx,ty,tz,qx,qy,qz,qw\n";
  for (const auto& p : trajectory) {
    const auto& q = p.rotation;
    out << format_double(p.t) << ',' << format_double(p.translation.x()) << ','
        << format_double(p.translation.y()) << ',' << format_double(p.translation.z()) << ','
        << format_double(q.x()) << ',' << format_double(q.y()) << ',' << format_double(q.z())
        << ',' << format_double(q.w()) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

GnssStream read_gnss(const std::filesystem::path& path, const std::optional<GeoAnchor>& anchor) {
  const auto table = read_numeric_csv(
      path, {"t", "lat", "lon", "alt", "cxx", "cxy", "cxz", "cyy", "cyz", "czz"});
  GnssStream stream;
  if (anchor) {
    stream.anchor = *anchor;
  } else if (!table.rows.empty()) {
    const auto& r = table.rows.front();
    stream.anchor = GeoAnchor{r[1], r[2], r[3], 0};
  }
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    const std::size_t line = table.lines[i];
    if (!stream.fixes.empty()) check_time_order(stream.fixes.back().t, r[0], line, false);
    GnssFix fix;
    fix.t = r[0];
    fix.covariance << r[4], r[5], r[6], r[5], r[7], r[8], r[6], r[8], r[9];
    if (!fix.covariance_valid()) throw ParseError("covariance not positive definite", line);
    try {
      fix.position = geodesy::wgs84_to_enu(r[1], r[2], r[3], stream.anchor);
    } catch (const RangeError& e) {
      throw ParseError(e.what(), line);
    }
    stream.fixes.push_back(fix);
  }
  return stream;
}

void write_gnss(const std::vector<GnssFix>& fixes, const GeoAnchor& anchor,
                const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "t,lat,lon,alt,cxx,cxy,cxz,cyy,cyz,czz\n";
  for (const auto& f : fixes) {
    const auto lla = geodesy::enu_to_wgs84(f.position, anchor);
    const auto& c = f.covariance;
    out << format_double(f.t) << ',' << format_double(lla.lat) << ',' << format_double(lla.lon)
        << ',' << format_double(lla.alt) << ',' << format_double(c(0, 0)) << ','
        << format_double(c(0, 1)) << ',' << format_double(c(0, 2)) << ','
        << format_double(c(1, 1)) << ',' << format_double(c(1, 2)) << ','
        << format_double(c(2, 2)) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

// --- detections --------------------------------------------------------------

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<Detection> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    Detection d;
    try {
      const auto j = nlohmann::json::parse(line);
      for (const char* key : {"t", "image", "class", "conf", "bbox"}) {
        if (!j.contains(key)) throw ParseError(std::string("missing field '") + key + "'", lineno);
      }
      d.t = j.at("t").get<double>();
      d.image_id = j.at("image").get<std::string>();
      d.class_name = j.at("class").get<std::string>();
      d.conf = j.at("conf").get<double>();
      const auto& b = j.at("bbox");
      if (!b.is_array() || b.size() != 4) throw ParseError("bbox must have 4 entries", lineno);
      d.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid detection record: ") + e.what(), lineno);
    }
    if (!std::isfinite(d.t) || !std::isfinite(d.conf) || !std::isfinite(d.bbox.x) ||
        !std::isfinite(d.bbox.y) || !std::isfinite(d.bbox.w) || !std::isfinite(d.bbox.h)) {
      throw ParseError("non-finite value", lineno);
    }
    if (!(d.conf >= 0.0 && d.conf <= 1.0)) throw ParseError("conf outside [0, 1]", lineno);
    if (!(d.bbox.w > 0.0 && d.bbox.h > 0.0)) throw ParseError("empty bbox", lineno);
    if (!out.empty()) check_time_order(out.back().t, d.t, lineno, true);
    out.push_back(std::move(d));
  }
  return out;
}

void write_detections(const std::vector<Detection>& detections,
                      const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& d : detections) {
    nlohmann::ordered_json j;
    j["t"] = d.t;
    j["image"] = d.image_id;
    j["class"] = d.class_name;
    j["conf"] = d.conf;
    j["bbox"] = {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace forestgeo::io
