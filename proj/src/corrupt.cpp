#include "forestgeo/corrupt.hpp"

#include <cmath>
#include <numbers>

#include "forestgeo/detail/rng.hpp"
#include "forestgeo/errors.hpp"

namespace forestgeo::pgo {
namespace {

std::vector<std::pair<double, double>> poisson_windows(detail::Rng& rng, double t0, double t1,
                                                       double rate_per_min, double min_len,
                                                       double max_len) {
  std::vector<std::pair<double, double>> windows;
  if (rate_per_min <= 0.0) return windows;
  const double rate = rate_per_min / 60.0;
  double t = t0 + rng.exponential(rate);
  while (t < t1) {
    const double len = min_len == max_len ? min_len : rng.uniform(min_len, max_len);
    windows.emplace_back(t, t + len);
    t += len + rng.exponential(rate);
  }
  return windows;
}

bool inside(const std::vector<std::pair<double, double>>& windows, double t) {
  for (const auto& [a, b] : windows) {
    if (t >= a && t < b) return true;
  }
  return false;
}

void inflate(GnssFix& fix, const Eigen::Vector3d& error) {
  fix.covariance += error.squaredNorm() * Eigen::Matrix3d::Identity();
}

}  // namespace

void CorruptionSpec::validate() const {
  if (!(spike_probability >= 0.0 && spike_probability <= 1.0)) {
    throw ArgumentError("spike probability must be in [0, 1]");
  }
  if (dropout_rate < 0.0 || offset_rate < 0.0) throw ArgumentError("rates must be non-negative");
  if (!(dropout_min > 0.0 && dropout_max >= dropout_min) || !(offset_duration > 0.0)) {
    throw ArgumentError("window durations must be positive and ordered");
  }
}

CorruptionResult corrupt_gnss_detailed(std::span<const GnssFix> gnss, const CorruptionSpec& spec,
                                       std::uint64_t seed) {
  spec.validate();
  CorruptionResult out;
  out.fixes.assign(gnss.begin(), gnss.end());
  if (gnss.empty()) return out;
  const detail::Rng root(seed);
  detail::Rng offset_rng = root.split("gnss-offsets");
  detail::Rng spike_rng = root.split("gnss-spikes");
  detail::Rng dropout_rng = root.split("gnss-dropouts");
  const double t0 = gnss.front().t, t1 = gnss.back().t;

  out.offset_windows = poisson_windows(offset_rng, t0, t1, spec.offset_rate,
                                       spec.offset_duration, spec.offset_duration);
  for (const auto& [a, b] : out.offset_windows) {
    const double heading = offset_rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Eigen::Vector3d shift(spec.offset_magnitude * std::cos(heading),
                                spec.offset_magnitude * std::sin(heading), 0.0);
    for (auto& fix : out.fixes) {
      if (fix.t < a || fix.t >= b) continue;
      fix.position += shift;
      if (spec.mode == CovarianceMode::kHonest) inflate(fix, shift);
    }
  }

  if (spec.spike_probability > 0.0) {
    for (auto& fix : out.fixes) {
      if (!(spike_rng.uniform() < spec.spike_probability)) continue;
      Eigen::Vector3d dir(spike_rng.normal(), spike_rng.normal(), spike_rng.normal());
      while (dir.norm() < 1e-12) dir = {spike_rng.normal(), spike_rng.normal(), spike_rng.normal()};
      const Eigen::Vector3d error =
          std::abs(spike_rng.normal(spec.spike_mean, spec.spike_sigma)) * dir.normalized();
      fix.position += error;
      if (spec.mode == CovarianceMode::kHonest) inflate(fix, error);
      ++out.spiked;
    }
  }

  out.dropout_windows =
      poisson_windows(dropout_rng, t0, t1, spec.dropout_rate, spec.dropout_min, spec.dropout_max);
  if (!out.dropout_windows.empty()) {
    std::vector<GnssFix> kept;
    kept.reserve(out.fixes.size());
    for (const auto& fix : out.fixes) {
      if (!inside(out.dropout_windows, fix.t)) kept.push_back(fix);
    }
    out.fixes = std::move(kept);
  }
  return out;
}

std::vector<GnssFix> corrupt_gnss(std::span<const GnssFix> gnss, const CorruptionSpec& spec,
                                  std::uint64_t seed) {
  return corrupt_gnss_detailed(gnss, spec, seed).fixes;
}

}  // namespace forestgeo::pgo
