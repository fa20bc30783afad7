#include "forestgeo/geotiff.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "forestgeo/errors.hpp"
#include "forestgeo/geodesy.hpp"

namespace forestgeo::geotiff {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

enum : std::uint16_t { kAscii = 2, kShort = 3, kLong = 4, kDouble = 12 };

enum : std::uint16_t {
  kImageWidth = 256,
  kImageLength = 257,
  kBitsPerSample = 258,
  kCompression = 259,
  kPhotometric = 262,
  kStripOffsets = 273,
  kSamplesPerPixel = 277,
  kRowsPerStrip = 278,
  kStripByteCounts = 279,
  kSampleFormat = 339,
  kModelPixelScale = 33550,
  kModelTiepoint = 33922,
  kGeoKeyDirectory = 34735,
  kGdalNodata = 42113,
};

constexpr std::uint16_t kGtModelType = 1024;
constexpr std::uint16_t kProjectedCsType = 3072;

std::size_t type_size(std::uint16_t type) {
  switch (type) {
    case kAscii: return 1;
    case kShort: return 2;
    case kLong: return 4;
    case kDouble: return 8;
    default: return 0;
  }
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void pad_to(std::size_t n) { bytes_.resize(std::max(bytes_.size(), n), '\0'); }
  std::size_t size() const { return bytes_.size(); }
  const std::vector<char>& bytes() const { return bytes_; }

  // One IFD entry whose value fits in the 4-byte slot.
  void inline_entry(std::uint16_t tag, std::uint16_t type, std::uint32_t count,
                    std::uint32_t value) {
    put(tag);
    put(type);
    put(count);
    if (type == kShort) {
      put(static_cast<std::uint16_t>(value));
      put(std::uint16_t{0});
    } else {
      put(value);
    }
  }

 private:
  std::vector<char> bytes_;
};

}  // namespace

Tiepoint northwest_tiepoint(const GridGeometry& geometry, const GeoAnchor& anchor) {
  anchor.validate();
  const int epsg = anchor.projected_epsg();
  if (!geodesy::is_utm_epsg(epsg)) {
    throw ArgumentError("GeoTIFF export supports UTM EPSG codes only, got " +
                        std::to_string(epsg));
  }
  const Eigen::Vector3d nw(geometry.origin_x,
                           geometry.origin_y +
                               static_cast<double>(geometry.height) * geometry.resolution,
                           0.0);
  const auto lla = geodesy::enu_to_wgs84(nw, anchor);
  const auto en = geodesy::project_epsg(lla.lat, lla.lon, epsg);
  return {en.easting, en.northing, epsg};
}

void write_geotiff(const GridField& field, const std::filesystem::path& path) {
  if (!field.anchor) throw ArgumentError("field has no georeference");
  write_geotiff(field, *field.anchor, path);
}

void write_geotiff(const GridField& field, const GeoAnchor& anchor,
                   const std::filesystem::path& path) {
  const auto& g = field.geometry;
  g.validate();
  if (field.values.size() != g.cells()) throw ArgumentError("field value count mismatch");
  const std::uint64_t data_bytes = static_cast<std::uint64_t>(g.cells()) * 4u;
  if (data_bytes > (std::uint64_t{1} << 31)) {
    throw ArgumentError("field exceeds the 2^31 byte GeoTIFF limit");
  }
  const Tiepoint tie = northwest_tiepoint(g, anchor);

  constexpr std::uint16_t kEntries = 14;
  constexpr std::uint32_t kIfdOffset = 8;
  constexpr std::uint32_t kScaleOffset = 184;  // after the IFD, 8-aligned
  constexpr std::uint32_t kTieOffset = kScaleOffset + 3 * 8;
  constexpr std::uint32_t kKeysOffset = kTieOffset + 6 * 8;
  constexpr std::uint32_t kDataOffset = kKeysOffset + 12 * 2;
  static_assert(kIfdOffset + 2 + kEntries * 12 + 4 <= kScaleOffset);

  const auto w = static_cast<std::uint32_t>(g.width);
  const auto h = static_cast<std::uint32_t>(g.height);

  Writer out;
  out.put('I');
  out.put('I');
  out.put(std::uint16_t{42});
  out.put(kIfdOffset);

  out.put(kEntries);
  out.inline_entry(kImageWidth, kLong, 1, w);
  out.inline_entry(kImageLength, kLong, 1, h);
  out.inline_entry(kBitsPerSample, kShort, 1, 32);
  out.inline_entry(kCompression, kShort, 1, 1);
  out.inline_entry(kPhotometric, kShort, 1, 1);
  out.inline_entry(kStripOffsets, kLong, 1, kDataOffset);
  out.inline_entry(kSamplesPerPixel, kShort, 1, 1);
  out.inline_entry(kRowsPerStrip, kLong, 1, h);
  out.inline_entry(kStripByteCounts, kLong, 1, static_cast<std::uint32_t>(data_bytes));
  out.inline_entry(kSampleFormat, kShort, 1, 3);
  out.inline_entry(kModelPixelScale, kDouble, 3, kScaleOffset);
  out.inline_entry(kModelTiepoint, kDouble, 6, kTieOffset);
  out.inline_entry(kGeoKeyDirectory, kShort, 12, kKeysOffset);
  // "-1" plus terminator fits in the value slot.
  out.put(kGdalNodata);
  out.put(kAscii);
  out.put(std::uint32_t{3});
  out.put('-');
  out.put('1');
  out.put('\0');
  out.put('\0');
  out.put(std::uint32_t{0});  // no further IFD

  out.pad_to(kScaleOffset);
  for (double v : {g.resolution, g.resolution, 0.0}) out.put(v);
  for (double v : {0.0, 0.0, 0.0, tie.easting, tie.northing, 0.0}) out.put(v);
  const std::uint16_t keys[12] = {1, 1, 0, 2,
                                  kGtModelType, 0, 1, 1,
                                  kProjectedCsType, 0, 1, static_cast<std::uint16_t>(tie.epsg)};
  for (auto k : keys) out.put(k);
  if (out.size() != kDataOffset) throw Error("internal GeoTIFF layout error");

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write " + path.string());
  file.write(out.bytes().data(), static_cast<std::streamsize>(out.size()));
  std::vector<float> row(g.width);
  for (std::size_t r = g.height; r-- > 0;) {
    for (std::size_t c = 0; c < g.width; ++c) row[c] = static_cast<float>(field.at(c, r));
    file.write(reinterpret_cast<const char*>(row.data()),
               static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!file) throw IoError("write failed for " + path.string());
}

int Raster::model_type() const {
  for (std::size_t i = 4; i + 3 < geokeys.size(); i += 4) {
    if (geokeys[i] == kGtModelType) return geokeys[i + 3];
  }
  return 0;
}

int Raster::projected_cs() const {
  for (std::size_t i = 4; i + 3 < geokeys.size(); i += 4) {
    if (geokeys[i] == kProjectedCsType) return geokeys[i + 3];
  }
  return 0;
}

std::vector<double> Raster::south_up() const {
  std::vector<double> out(north_up.size());
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      out[(height - 1 - r) * width + c] = north_up[r * width + c];
    }
  }
  return out;
}

Raster read_geotiff(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(file)),
                              std::istreambuf_iterator<char>());
  auto need = [&](std::size_t off, std::size_t n) {
    if (off + n > buf.size() || off + n < off) throw ParseError("truncated TIFF");
  };
  auto get = [&]<typename T>(std::size_t off, T) {
    need(off, sizeof(T));
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    return v;
  };
  need(0, 8);
  if (buf[0] != 'I' || buf[1] != 'I' || get(2, std::uint16_t{}) != 42) {
    throw ParseError("not a little-endian classic TIFF");
  }
  const auto ifd = get(4, std::uint32_t{});
  const auto n = get(ifd, std::uint16_t{});

  struct Entry {
    std::uint16_t type;
    std::uint32_t count;
    std::size_t offset;  // of the value bytes
  };
  std::map<std::uint16_t, Entry> entries;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t e = ifd + 2 + 12 * i;
    const auto tag = get(e, std::uint16_t{});
    const auto type = get(e + 2, std::uint16_t{});
    const auto count = get(e + 4, std::uint32_t{});
    const std::size_t bytes = type_size(type) * count;
    const std::size_t off = bytes <= 4 ? e + 8 : get(e + 8, std::uint32_t{});
    if (type_size(type) != 0) need(off, bytes);
    entries[tag] = {type, count, off};
  }
  auto find = [&](std::uint16_t tag) -> const Entry& {
    auto it = entries.find(tag);
    if (it == entries.end()) throw ParseError("missing TIFF tag " + std::to_string(tag));
    return it->second;
  };
  auto uint_at = [&](const Entry& e, std::size_t i) -> std::uint32_t {
    if (e.type == kShort) return get(e.offset + 2 * i, std::uint16_t{});
    if (e.type == kLong) return get(e.offset + 4 * i, std::uint32_t{});
    throw ParseError("expected integer TIFF tag");
  };
  auto scalar = [&](std::uint16_t tag) { return uint_at(find(tag), 0); };

  Raster r;
  r.width = scalar(kImageWidth);
  r.height = scalar(kImageLength);
  if (scalar(kBitsPerSample) != 32 || scalar(kSampleFormat) != 3 ||
      scalar(kSamplesPerPixel) != 1) {
    throw ParseError("only single-band float32 rasters are supported");
  }
  if (scalar(kCompression) != 1) throw ParseError("compressed TIFF not supported");

  const auto& offsets = find(kStripOffsets);
  const auto& counts = find(kStripByteCounts);
  if (offsets.count != counts.count) throw ParseError("strip tag count mismatch");
  std::vector<char> data;
  for (std::size_t i = 0; i < offsets.count; ++i) {
    const auto off = uint_at(offsets, i);
    const auto len = uint_at(counts, i);
    need(off, len);
    data.insert(data.end(), buf.begin() + off, buf.begin() + off + len);
  }
  const std::size_t cells = static_cast<std::size_t>(r.width) * r.height;
  if (data.size() != cells * 4) throw ParseError("strip size does not match image size");
  r.north_up.resize(cells);
  std::memcpy(r.north_up.data(), data.data(), data.size());

  if (entries.count(kModelPixelScale)) {
    const auto& e = find(kModelPixelScale);
    if (e.type != kDouble || e.count != 3) throw ParseError("bad ModelPixelScaleTag");
    for (std::size_t i = 0; i < 3; ++i) r.pixel_scale[i] = get(e.offset + 8 * i, double{});
  }
  if (entries.count(kModelTiepoint)) {
    const auto& e = find(kModelTiepoint);
    if (e.type != kDouble || e.count < 6) throw ParseError("bad ModelTiepointTag");
    for (std::size_t i = 0; i < 6; ++i) r.tiepoint[i] = get(e.offset + 8 * i, double{});
  }
  if (entries.count(kGeoKeyDirectory)) {
    const auto& e = find(kGeoKeyDirectory);
    for (std::size_t i = 0; i < e.count; ++i) {
      r.geokeys.push_back(static_cast<std::uint16_t>(uint_at(e, i)));
    }
  }
  if (entries.count(kGdalNodata)) {
    const auto& e = find(kGdalNodata);
    std::string s(buf.data() + e.offset, e.count);
    r.nodata = s.substr(0, s.find('\0'));
  }
  return r;
}

}  // namespace forestgeo::geotiff
