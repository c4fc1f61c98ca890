#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gmc/field.hpp"
#include "gmc/grid.hpp"
#include "gmc/rng.hpp"
#include "gmc/stats.hpp"

namespace gmc {

struct GmcParams {
  double gamma = 0.0;
  int dim = 1;
  GmcParams(double gamma_, int dim_);  // throws unless gamma^2 < 2*dim
};

/// Non-negative cell measure on a uniform grid. total_mass is cached at
/// construction (it may be a telescoped value like F(T) that is exact by
/// definition; the recomputed cell sum agrees within ulp-scale tolerance).
struct GridMeasure {
  Grid grid;
  std::vector<double> mass;
  double total_mass = 0.0;
  std::size_t underflow_clamps = 0;  // masses lifted to DBL_MIN at build time

  /// Deepest dyadic level supported by this grid (floor log2 of cells/axis).
  int level() const;
};

/// Fixed-order reduction: full binary tree for d=1, quadtree in (00,01,10,11)
/// child order for d=2. Aggregating one dyadic level and re-reducing yields a
/// bit-identical sum, which makes S_n(1) exactly constant across levels.
double tree_sum(std::span<const double> v);

/// Masses aggregated to dyadic level n (2^n cells per axis), by pairwise
/// contraction when the fine grid is itself dyadic, otherwise by assigning
/// each fine cell to the box containing its center.
std::vector<double> box_masses(const GridMeasure& m, int n);

GridMeasure lebesgue_measure(const Grid& grid);
GridMeasure gmc_from_field(const FieldGrid& field, const GmcParams& params);

struct MassQuery {
  double mass = 0.0;
  bool outside_domain = false;
  operator double() const { return mass; }
};

/// Sum of masses of cells whose center lies in the closed ball B(x, r).
MassQuery ball_mass(const GridMeasure& m, const Point& x, double r);

/// Size-biased cell sampling (probability mass_i / total). Cached prefix sums.
class MassSampler {
 public:
  explicit MassSampler(const GridMeasure& m);  // throws if total <= 0
  std::size_t draw(rng::Stream& stream) const;

 private:
  std::vector<double> cdf_;
};

std::size_t sample_cell(const GridMeasure& m, rng::Stream& stream);
Point sample_point(const GridMeasure& m, rng::Stream& stream);

struct MomentScalingResult {
  SlopeFit fit;
  std::vector<double> mean_pow_mass;  // per radius, mean over replicas/centers
  std::size_t excluded = 0;           // zero-mass samples dropped under q < 0
};

/// Regression of log(mean ball_mass^q) on log r over an ensemble of measures
/// and a fixed list of interior centers.
MomentScalingResult moment_scaling_slope(std::span<const GridMeasure> replicas,
                                         std::span<const double> radii, double q,
                                         std::span<const Point> centers);

/// Slope of S_m(x) versus m*log 2 for m in [m_lo, m_hi]: estimates the
/// thickness gamma_hat at x.
double thick_point_exponent(const LayeredField& f, std::size_t cell, int m_lo, int m_hi);

struct ThickPointCounts {
  std::vector<int> levels;
  std::vector<std::size_t> counts;  // cells at level n with S_n >= gamma*n*log 2
  SlopeFit dim_fit;                 // slope of log count vs n*log 2 (positive counts)
};
ThickPointCounts thick_point_box_count(const LayeredField& f, double gamma,
                                       int n_lo, int n_hi);

}  // namespace gmc
