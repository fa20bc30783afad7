#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "forestgeo/types.hpp"

namespace forestgeo::pgo {

enum class CovarianceMode {
  kHonest,     // corrupted fixes report a covariance inflated by the injected error
  kDeceptive,  // covariance left untouched
};

struct CorruptionSpec {
  double spike_probability = 0.0;   // per fix
  double spike_mean = 10.0;         // m
  double spike_sigma = 2.0;         // m
  double dropout_rate = 0.0;        // windows per minute
  double dropout_min = 15.0;        // s
  double dropout_max = 30.0;        // s
  double offset_rate = 0.0;         // segments per minute
  double offset_duration = 10.0;    // s
  double offset_magnitude = 10.0;   // m, horizontal
  CovarianceMode mode = CovarianceMode::kDeceptive;

  void validate() const;
};

struct CorruptionResult {
  std::vector<GnssFix> fixes;
  std::vector<std::pair<double, double>> dropout_windows;  // [start, end) s
  std::vector<std::pair<double, double>> offset_windows;
  std::size_t spiked = 0;
};

/// Injects spikes, constant-offset segments and dropout windows. Deterministic in
/// `seed`; each corruption type draws from its own stream.
CorruptionResult corrupt_gnss_detailed(std::span<const GnssFix> gnss, const CorruptionSpec& spec,
                                       std::uint64_t seed);
std::vector<GnssFix> corrupt_gnss(std::span<const GnssFix> gnss, const CorruptionSpec& spec,
                                  std::uint64_t seed);

}  // namespace forestgeo::pgo
