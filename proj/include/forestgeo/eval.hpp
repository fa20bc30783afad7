#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "forestgeo/types.hpp"

namespace forestgeo::eval {

enum class AlignMode { kNone, kUmeyama };

inline constexpr double kAssociationWindow = 0.05;  // s

struct AteReport {
  double mean = 0.0;  // m
  double std = 0.0;   // population standard deviation, m
  std::vector<double> errors;
  std::size_t n_matched = 0;
};

/// Absolute trajectory error over poses matched by nearest timestamp within 0.05 s.
/// Throws DegenerateError with fewer than 2 matches.
AteReport ate(std::span<const Se3Pose> estimated, std::span<const Se3Pose> reference,
              AlignMode mode = AlignMode::kNone);

struct Se2Error {
  double translation = 0.0;  // m
  double yaw_deg = 0.0;      // signed, wrapped to (-180, 180]
};

/// Error of truth^-1 * estimated.
Se2Error se2_error(const Se2Transform& estimated, const Se2Transform& truth);

struct DbhRecord {
  std::string id;
  double dbh_est = 0.0;  // m
  double dbh_gt = 0.0;   // m
};

/// Mean relative error (1/N) sum |est - gt| / gt, rounded to 15 significant digits. Throws ArgumentError on an empty
/// list or a non-positive ground truth.
double mre_dbh(std::span<const DbhRecord> records);

/// CSV with header id,dbh_est_m,dbh_gt_m.
std::vector<DbhRecord> read_dbh_records(const std::filesystem::path& path);

}  // namespace forestgeo::eval
