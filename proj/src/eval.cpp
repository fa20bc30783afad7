#include "forestgeo/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

#include "forestgeo/errors.hpp"
#include "forestgeo/geometry.hpp"

namespace forestgeo::eval {

AteReport ate(std::span<const Se3Pose> estimated, std::span<const Se3Pose> reference,
              AlignMode mode) {
  // Nearest reference timestamp for every estimated pose; both are time-sorted.
  std::vector<Eigen::Vector3d> est, ref;
  std::size_t j = 0;
  for (const auto& e : estimated) {
    while (j + 1 < reference.size() &&
           std::abs(reference[j + 1].t - e.t) <= std::abs(reference[j].t - e.t)) {
      ++j;
    }
    if (j < reference.size() && std::abs(reference[j].t - e.t) <= kAssociationWindow) {
      est.push_back(e.translation);
      ref.push_back(reference[j].translation);
    }
  }
  if (est.size() < 2) {
    throw DegenerateError("ATE needs at least 2 matched poses, got " + std::to_string(est.size()));
  }
  if (mode == AlignMode::kUmeyama) {
    Eigen::Matrix3Xd src(3, est.size()), dst(3, ref.size());
    for (std::size_t i = 0; i < est.size(); ++i) {
      src.col(static_cast<Eigen::Index>(i)) = est[i];
      dst.col(static_cast<Eigen::Index>(i)) = ref[i];
    }
    const Eigen::Matrix4d t = Eigen::umeyama(src, dst, false);
    for (auto& p : est) p = t.topLeftCorner<3, 3>() * p + t.topRightCorner<3, 1>();
  }
  AteReport report;
  report.n_matched = est.size();
  report.errors.reserve(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) report.errors.push_back((est[i] - ref[i]).norm());
  const double n = static_cast<double>(report.errors.size());
  double sum = 0.0;
  for (double e : report.errors) sum += e;
  report.mean = sum / n;
  double sq = 0.0;
  for (double e : report.errors) sq += (e - report.mean) * (e - report.mean);
  report.std = std::sqrt(sq / n);
  return report;
}

Se2Error se2_error(const Se2Transform& estimated, const Se2Transform& truth) {
  const Se2Transform d = truth.inverse() * estimated;
  return {d.translation().norm(), wrap_angle(d.psi()) * 180.0 / std::numbers::pi};
}

double mre_dbh(std::span<const DbhRecord> records) {
  if (records.empty()) throw ArgumentError("MRE needs at least one record");
  double sum = 0.0;
  for (const auto& r : records) {
    if (!(r.dbh_gt > 0.0)) throw ArgumentError("ground-truth DBH must be positive (" + r.id + ")");
    if (!(r.dbh_est > 0.0)) throw ArgumentError("estimated DBH must be positive (" + r.id + ")");
    sum += std::abs(r.dbh_est - r.dbh_gt) / r.dbh_gt;
  }
  // Inputs are decimal measurements. Rounding to DBL_DIG significant digits drops the
  // binary representation error they carry (0.6 is stored as 0.59999999999999998).
  const double mre = sum / static_cast<double>(records.size());
  char buf[32];
  const auto end = std::to_chars(buf, buf + sizeof buf, mre, std::chars_format::general,
                                 std::numeric_limits<double>::digits10).ptr;
  double rounded = mre;
  std::from_chars(buf, end, rounded);
  return rounded;
}

std::vector<DbhRecord> read_dbh_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  auto cells_of = [](std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    return cells;
  };
  auto number = [](const std::string& s, std::size_t line) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw ParseError("invalid number '" + s + "'", line);
    }
    return v;
  };

  std::vector<DbhRecord> out;
  std::string line;
  std::size_t lineno = 0;
  int id_col = -1, est_col = -1, gt_col = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = cells_of(line);
    if (id_col < 0) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] == "id") id_col = static_cast<int>(i);
        if (cells[i] == "dbh_est_m") est_col = static_cast<int>(i);
        if (cells[i] == "dbh_gt_m") gt_col = static_cast<int>(i);
      }
      if (id_col < 0 || est_col < 0 || gt_col < 0) {
        throw ParseError("header must contain id,dbh_est_m,dbh_gt_m", lineno);
      }
      continue;
    }
    const auto need = static_cast<std::size_t>(std::max({id_col, est_col, gt_col}));
    if (cells.size() <= need) throw ParseError("missing column", lineno);
    DbhRecord r;
    r.id = cells[static_cast<std::size_t>(id_col)];
    r.dbh_est = number(cells[static_cast<std::size_t>(est_col)], lineno);
    r.dbh_gt = number(cells[static_cast<std::size_t>(gt_col)], lineno);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace forestgeo::eval
