#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gmc/measure.hpp"
#include "gmc/rng.hpp"
#include "gmc/stats.hpp"

namespace gmc::mrw {

/// Piecewise-linear random path on a strictly increasing time grid.
struct PathSeries {
  enum class Kind { brownian, mrw, lbm };
  Kind kind = Kind::brownian;
  std::uint64_t seed = 0;
  int d_target = 1;
  std::vector<double> t;  // knots, t[0] = 0
  std::vector<double> x;  // [knot][coord] row-major, x at knot 0 = origin

  std::size_t knots() const { return t.size(); }
  double coord(std::size_t k, int c) const { return x[k * d_target + c]; }
};

/// Gaussian path with independent increments of per-coordinate variance
/// vars[k] over (times[k], times[k+1]]. The draw order (knot-major,
/// coordinate-minor) is shared by every caller, so two callers with equal
/// variance vectors and equal streams produce bit-identical paths.
PathSeries path_from_variances(std::span<const double> vars,
                               std::span<const double> times, int d_target,
                               rng::Stream& stream, PathSeries::Kind kind);

/// Time-changed Brownian motion Z_t = B_{clock([0,t])}: increments drawn with
/// variance = clock cell mass. gamma = 0 clocks reduce bit-identically to
/// path_from_variances with cell widths.
PathSeries simulate_mrw(const GridMeasure& clock, int d_target, rng::Stream& stream);

struct StructureSlope {
  SlopeFit fit;
  std::vector<double> mean_abs_q;  // per lag
};

/// Slope of log mean |Z_{t+lag} - Z_t|^q versus log lag; the mean runs over
/// a coarse t grid (step t_step), coordinates and replicas.
StructureSlope mrw_structure_slope(std::span<const PathSeries> ensemble, double q,
                                   std::span<const double> lags, double t_step);

double theoretical_mrw_lower_spectrum(double alpha, double gamma);

struct LowerDimension {
  double estimate = 0.0;
  bool infinite = false;            // constant path: oscillation 0 at all radii
  std::vector<double> per_radius;   // log|Z_{t+r} - Z_{t-r}| / log r
};
LowerDimension path_lower_dimension(const PathSeries& path, double t,
                                    std::span<const double> radii);

}  // namespace gmc::mrw
