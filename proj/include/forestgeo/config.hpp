#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "forestgeo/align.hpp"
#include "forestgeo/fields.hpp"
#include "forestgeo/pgo.hpp"
#include "forestgeo/types.hpp"

namespace forestgeo {

/// Everything the pipeline subcommand needs. Loaded from a flat key-value file with
/// one section per module:
///
///   seed = 7
///   [paths]
///   aerial = "aerial.ply"
///   [align]
///   starts = 64
///
/// Relative paths resolve against the config file's directory.
struct PipelineConfig {
  std::uint64_t seed = 7;

  struct Paths {
    std::filesystem::path aerial, terrestrial, odometry, gnss, detections, camera;
    std::filesystem::path reference;  // optional ground-truth trajectory
    std::filesystem::path dbh;        // optional DBH records
    std::filesystem::path output = "out";
  } paths;

  std::optional<GeoAnchor> anchor;  // default: first GNSS fix

  struct Fields {
    double chm_resolution = 0.25;
    double field_resolution = 0.25;
    double ground_cell = 1.0;
    double bandwidth = 1.0;
    fields::ScaleSet scales;
  } fields;

  struct Align {
    bool enabled = true;
    align::SearchRegion region;
    std::size_t starts = 64;
    int bins = 32;
    double min_overlap = 0.3;
  } align;

  struct Pgo {
    pgo::GnssMode mode = pgo::GnssMode::kCovarianceAware;
    pgo::RobustKernel kernel;
    double sigma_constant = 2.0;
    int max_iterations = 100;
  } pgo;

  struct Geotag {
    double max_range = 40.0;
    double raster_resolution = 0.5;
    double cluster_radius = 3.0;
  } geotag;

  /// Throws ConfigError naming the first out-of-domain key.
  void validate() const;
};

/// Parses `text`; `base` resolves relative paths. Throws ConfigError on unknown keys,
/// malformed lines or invalid values.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Sets one dotted key ("align.starts", "seed") from its text form.
void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value,
                   const std::filesystem::path& base = {});

/// All recognized dotted keys.
std::vector<std::string> config_keys();

/// Canonical text of every setting, one "key = value" per line in key order.
std::string canonical_text(const PipelineConfig& cfg);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace forestgeo
