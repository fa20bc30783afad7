#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "forestgeo/errors.hpp"
#include "forestgeo/grid.hpp"
#include "forestgeo/types.hpp"

namespace forestgeo::align {

/// Bounded search domain for (tx, ty, psi).
struct SearchRegion {
  double tx_min = -7.0, tx_max = 7.0;  // m
  double ty_min = -7.0, ty_max = 7.0;
  double psi_min = -0.5235987755982988, psi_max = 0.5235987755982988;  // rad

  void validate() const;
  bool contains(const Se2Transform& t) const;
  /// Componentwise clamp of (tx, ty, psi).
  Se2Transform clamp(double tx, double ty, double psi) const;
};

struct NmiConfig {
  int bins = 32;
  /// Minimum fraction of target cells with a valid warped sample.
  double min_overlap_fraction = 0.3;

  void validate() const;
};

/// Raised when the valid overlap is below NmiConfig::min_overlap_fraction.
class OverlapError : public DegenerateError {
 public:
  using DegenerateError::DegenerateError;
};

inline constexpr double kDegenerate = -std::numeric_limits<double>::infinity();

struct WarpResult {
  GridField field;
  std::vector<std::uint8_t> mask;  // 1 where the pre-image lies inside `moving`
};

/// Resamples `moving` on `target`'s grid: out(x) = moving(T(theta)^-1 x), bilinear.
WarpResult warp_field(const GridField& moving, const Se2Transform& theta,
                      const GridGeometry& target);

/// Normalized mutual information 2 I(A;B) / (H(A) + H(B)) over masked cells, from a
/// bins x bins joint histogram on [0, 1]^2. An empty mask means every cell.
double nmi(const GridField& a, const GridField& b, std::span<const std::uint8_t> mask,
           const NmiConfig& cfg = {});

/// nmi(aerial, warp_field(terrestrial, theta_i, aerial)) for every theta; entries with
/// insufficient overlap are kDegenerate.
std::vector<double> evaluate_batch(const GridField& aerial, const GridField& terrestrial,
                                   std::span<const Se2Transform> thetas,
                                   const NmiConfig& cfg = {});

struct Candidate {
  Se2Transform theta;
  double objective = 0.0;
};

struct AlignmentResult {
  Se2Transform theta;
  double objective = 0.0;
  /// Refined solutions from every non-degenerate start, best first.
  std::vector<Candidate> candidates;
  double z_offset = 0.0;
};

struct MultiStartConfig {
  std::size_t starts = 64;
  std::uint64_t seed = 7;
  NmiConfig nmi;
  double step_translation = 0.5;             // m
  double step_yaw = 0.034906585039886591;    // rad (2 deg)
  double tolerance = 1e-4;                   // objective spread across the simplex
  int max_iterations = 200;
};

/// Latin-hypercube starts over `region`, each refined by Nelder-Mead on -NMI with
/// iterates clamped to the region. Throws OverlapError when every start is degenerate.
AlignmentResult align_multistart(const GridField& aerial, const GridField& terrestrial,
                                 const SearchRegion& region, const MultiStartConfig& cfg = {});

/// The stratified start points used by align_multistart.
std::vector<Se2Transform> latin_hypercube_starts(const SearchRegion& region, std::size_t count,
                                                 std::uint64_t seed);

struct NelderMeadResult {
  Se2Transform theta;
  double objective = kDegenerate;
  int iterations = 0;
};

/// Nelder-Mead maximization of the NMI objective from `start`.
NelderMeadResult refine(const GridField& aerial, const GridField& terrestrial,
                        const SearchRegion& region, const Se2Transform& start,
                        const MultiStartConfig& cfg);

/// Height to add to the terrestrial cloud so that its ground matches the aerial
/// ground: median over commonly observed ground cells of (aerial - terrestrial).
double vertical_align(const PointCloud& aerial_cloud, const PointCloud& terrestrial_cloud,
                      const Se2Transform& theta, double ground_cell = 1.0);

}  // namespace forestgeo::align
