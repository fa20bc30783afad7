#include "forestgeo/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

#include "forestgeo/errors.hpp"
#include "forestgeo/io.hpp"

namespace forestgeo {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

double to_double(const std::string& key, const std::string& text) {
  const std::string s = unquote(text);
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError(key, "config key '" + key + "': expected a number, got '" + text + "'");
  }
  return v;
}

long long to_int(const std::string& key, const std::string& text) {
  const double v = to_double(key, text);
  if (v != std::floor(v) || std::abs(v) > 9.0e15) {
    throw ConfigError(key, "config key '" + key + "': expected an integer, got '" + text + "'");
  }
  return static_cast<long long>(v);
}

bool to_bool(const std::string& key, const std::string& text) {
  const std::string s = unquote(text);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key, "config key '" + key + "': expected true or false, got '" + text + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& text) {
  std::string s = unquote(trim(text));
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw ConfigError(key, "config key '" + key + "': unterminated list");
    s = s.substr(1, s.size() - 2);
  }
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!trim(item).empty()) out.push_back(to_double(key, trim(item)));
  }
  return out;
}

std::filesystem::path to_path(const std::string& text, const std::filesystem::path& base) {
  const std::filesystem::path p = unquote(text);
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

std::string num(double v) { return io::format_double(v); }

std::string list_text(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + num(v[i]);
  return out + "]";
}

GeoAnchor& anchor_of(PipelineConfig& c) {
  if (!c.anchor) c.anchor = GeoAnchor{};
  return *c.anchor;
}

struct Key {
  std::string name;
  std::function<void(PipelineConfig&, const std::string&, const std::filesystem::path&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename Field>
Key path_key(std::string name, Field field) {
  return {name,
          [field](PipelineConfig& c, const std::string& v, const std::filesystem::path& b) {
            c.paths.*field = to_path(v, b);
          },
          [field](const PipelineConfig& c) {
            return "\"" + (c.paths.*field).generic_string() + "\"";
          }};
}

template <typename Getter>
Key double_key(std::string name, Getter ref) {
  return {name,
          [name, ref](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
            ref(c) = to_double(name, v);
          },
          [ref](const PipelineConfig& c) { return num(ref(const_cast<PipelineConfig&>(c))); }};
}

const std::vector<Key>& keys() {
  using P = PipelineConfig::Paths;
  static const std::vector<Key> table = {
      {"seed",
       [](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
         const auto s = to_int("seed", v);
         if (s < 0) throw ConfigError("seed", "config key 'seed' must be non-negative");
         c.seed = static_cast<std::uint64_t>(s);
       },
       [](const PipelineConfig& c) { return std::to_string(c.seed); }},
      path_key("paths.aerial", &P::aerial),
      path_key("paths.terrestrial", &P::terrestrial),
      path_key("paths.odometry", &P::odometry),
      path_key("paths.gnss", &P::gnss),
      path_key("paths.detections", &P::detections),
      path_key("paths.camera", &P::camera),
      path_key("paths.reference", &P::reference),
      path_key("paths.dbh", &P::dbh),
      path_key("paths.output", &P::output),
      {"anchor.lat0",
       [](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
         anchor_of(c).lat0 = to_double("anchor.lat0", v);
       },
       [](const PipelineConfig& c) { return c.anchor ? num(c.anchor->lat0) : "none"; }},
      {"anchor.lon0",
       [](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
         anchor_of(c).lon0 = to_double("anchor.lon0", v);
       },
       [](const PipelineConfig& c) { return c.anchor ? num(c.anchor->lon0) : "none"; }},
      {"anchor.alt0",
       [](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
         anchor_of(c).alt0 = to_double("anchor.alt0", v);
       },
       [](const PipelineConfig& c) { return c.anchor ? num(c.anchor->alt0) : "none"; }},
      {"anchor.epsg",
       [](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
         anchor_of(c).epsg = static_cast<int>(to_int("anchor.epsg", v));
       },
       [](const PipelineConfig& c) { return c.anchor ? std::to_string(c.anchor->epsg) : "none"; }},
      double_key("fields.chm_resolution",
                 [](PipelineConfig& c) -> double& { return c.fields.chm_resolution; }),
      double_key("fields.field_resolution",
                 [](PipelineConfig& c) -> double& { return c.fields.field_resolution; }),
      double_key("fields.ground_cell",
                 [](PipelineConfig& c) -> double& { return c.fields.ground_cell; }),
      double_key("fields.bandwidth",
                 [](PipelineConfig& c) -> double& { return c.fields.bandwidth; }),
      {"fields.scales",
       [](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
         c.fields.scales.sigmas = to_list("fields.scales", v);
       },
       [](const PipelineConfig& c) { return list_text(c.fields.scales.sigmas); }},
      {"align.enabled",
       [](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
         c.align.enabled = to_bool("align.enabled", v);
       },
       [](const PipelineConfig& c) { return std::string(c.align.enabled ? "true" : "false"); }},
      double_key("align.tx_min", [](PipelineConfig& c) -> double& { return c.align.region.tx_min; }),
      double_key("align.tx_max", [](PipelineConfig& c) -> double& { return c.align.region.tx_max; }),
      double_key("align.ty_min", [](PipelineConfig& c) -> double& { return c.align.region.ty_min; }),
      double_key("align.ty_max", [](PipelineConfig& c) -> double& { return c.align.region.ty_max; }),
      {"align.yaw_min_deg",
       [](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
         c.align.region.psi_min = to_double("align.yaw_min_deg", v) * kDeg;
       },
       [](const PipelineConfig& c) { return num(c.align.region.psi_min / kDeg); }},
      {"align.yaw_max_deg",
       [](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
         c.align.region.psi_max = to_double("align.yaw_max_deg", v) * kDeg;
       },
       [](const PipelineConfig& c) { return num(c.align.region.psi_max / kDeg); }},
      {"align.starts",
       [](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
         const auto k = to_int("align.starts", v);
         if (k < 1) throw ConfigError("align.starts", "config key 'align.starts' must be >= 1");
         c.align.starts = static_cast<std::size_t>(k);
       },
       [](const PipelineConfig& c) { return std::to_string(c.align.starts); }},
      {"align.bins",
       [](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
         c.align.bins = static_cast<int>(to_int("align.bins", v));
       },
       [](const PipelineConfig& c) { return std::to_string(c.align.bins); }},
      double_key("align.min_overlap",
                 [](PipelineConfig& c) -> double& { return c.align.min_overlap; }),
      {"pgo.mode",
       [](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
         const std::string s = unquote(v);
         if (s == "none") c.pgo.mode = pgo::GnssMode::kNone;
         else if (s == "constant") c.pgo.mode = pgo::GnssMode::kConstantScaling;
         else if (s == "covariance") c.pgo.mode = pgo::GnssMode::kCovarianceAware;
         else throw ConfigError("pgo.mode", "config key 'pgo.mode': expected none, constant or covariance");
       },
       [](const PipelineConfig& c) -> std::string {
         switch (c.pgo.mode) {
           case pgo::GnssMode::kNone: return "\"none\"";
           case pgo::GnssMode::kConstantScaling: return "\"constant\"";
           default: return "\"covariance\"";
         }
       }},
      {"pgo.kernel",
       [](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
         const std::string s = unquote(v);
         if (s == "huber") c.pgo.kernel.kind = pgo::KernelKind::kHuber;
         else if (s == "squared") c.pgo.kernel.kind = pgo::KernelKind::kSquared;
         else throw ConfigError("pgo.kernel", "config key 'pgo.kernel': expected huber or squared");
       },
       [](const PipelineConfig& c) {
         return std::string(c.pgo.kernel.kind == pgo::KernelKind::kHuber ? "\"huber\"" : "\"squared\"");
       }},
      double_key("pgo.delta", [](PipelineConfig& c) -> double& { return c.pgo.kernel.delta; }),
      double_key("pgo.sigma_constant",
                 [](PipelineConfig& c) -> double& { return c.pgo.sigma_constant; }),
      {"pgo.max_iterations",
       [](PipelineConfig& c, const std::string& v, const std::filesystem::path&) {
         c.pgo.max_iterations = static_cast<int>(to_int("pgo.max_iterations", v));
       },
       [](const PipelineConfig& c) { return std::to_string(c.pgo.max_iterations); }},
      double_key("geotag.max_range",
                 [](PipelineConfig& c) -> double& { return c.geotag.max_range; }),
      double_key("geotag.raster_resolution",
                 [](PipelineConfig& c) -> double& { return c.geotag.raster_resolution; }),
      double_key("geotag.cluster_radius",
                 [](PipelineConfig& c) -> double& { return c.geotag.cluster_radius; }),
  };
  return table;
}

void check(bool ok, const char* key, const std::string& what) {
  if (!ok) throw ConfigError(key, std::string("config key '") + key + "': " + what);
}

}  // namespace

void PipelineConfig::validate() const {
  check(fields.chm_resolution > 0.0, "fields.chm_resolution", "must be positive");
  check(fields.field_resolution > 0.0, "fields.field_resolution", "must be positive");
  check(fields.ground_cell > 0.0, "fields.ground_cell", "must be positive");
  check(fields.bandwidth > 0.0, "fields.bandwidth", "must be positive");
  try {
    fields.scales.validate();
  } catch (const Error& e) {
    throw ConfigError("fields.scales", std::string("config key 'fields.scales': ") + e.what());
  }
  check(fields.scales.sigmas.front() >= fields.chm_resolution, "fields.scales",
        "smallest scale is below the CHM resolution");
  try {
    align.region.validate();
  } catch (const Error& e) {
    throw ConfigError("align.tx_min", std::string("config key 'align.*': ") + e.what());
  }
  check(align.starts >= 1, "align.starts", "must be >= 1");
  check(align.bins >= 2 && align.bins <= 4096, "align.bins", "must be in [2, 4096]");
  check(align.min_overlap > 0.0 && align.min_overlap <= 1.0, "align.min_overlap",
        "must be in (0, 1]");
  check(pgo.kernel.delta > 0.0, "pgo.delta", "must be positive");
  check(pgo.sigma_constant > 0.0, "pgo.sigma_constant", "must be positive");
  check(pgo.max_iterations >= 1, "pgo.max_iterations", "must be >= 1");
  check(geotag.max_range > 0.0, "geotag.max_range", "must be positive");
  check(geotag.raster_resolution > 0.0, "geotag.raster_resolution", "must be positive");
  check(geotag.cluster_radius > 0.0, "geotag.cluster_radius", "must be positive");
  if (anchor) {
    try {
      anchor->validate();
    } catch (const Error& e) {
      throw ConfigError("anchor.lat0", std::string("config key 'anchor.*': ") + e.what());
    }
  }
}

void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value,
                   const std::filesystem::path& base) {
  for (const auto& k : keys()) {
    if (k.name == key) {
      k.set(cfg, trim(value), base);
      return;
    }
  }
  throw ConfigError(key, "unknown config key '" + key + "'");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Strip comments outside quotes.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    const std::string s = trim(line);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        throw ConfigError(s, "malformed section header on line " + std::to_string(lineno));
      }
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(s, "expected 'key = value' on line " + std::to_string(lineno));
    }
    const std::string key = trim(s.substr(0, eq));
    apply_setting(cfg, section.empty() ? key : section + "." + key, s.substr(eq + 1), base);
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string canonical_text(const PipelineConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> lines;
  for (const auto& k : keys()) {
    if (k.name == "paths.output") continue;  // where results go does not change them
    lines.emplace_back(k.name, k.get(cfg));
  }
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& [k, v] : lines) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) h = (h ^ c) * 0x100000001b3ull;
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return out;
}

}  // namespace forestgeo
