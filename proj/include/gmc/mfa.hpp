#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gmc/measure.hpp"
#include "gmc/stats.hpp"

namespace gmc::mfa {

struct SpectrumCurve {
  enum class Kind {
    tau_estimated,
    tau_theory,
    spectrum_theory,
    spectrum_coarse,
    legendre_numeric,
  };
  Kind kind = Kind::tau_theory;
  std::vector<double> x;               // q or alpha grid, strictly increasing
  std::vector<double> y;
  std::vector<double> se;              // per-point standard errors (may be empty)
  std::vector<std::uint8_t> flag;      // 1 = empty-level-set / absent bin / degenerate
  std::vector<double> argmin_q;        // legendre only: minimizer per alpha

  // metadata
  double gamma = 0.0;
  int d = 0;
  int n_lo = 0, n_hi = 0;
  std::size_t replicas = 0;
  double bin_width = 0.0;
};

/// Dyadic partition sums S_n(q) = sum over level-n boxes of mass^q (boxes
/// with positive mass only) for one measure replica.
struct PartitionTable {
  std::vector<int> levels;
  std::vector<double> qs;
  std::vector<double> S;                 // [level][q], row-major
  std::vector<std::size_t> box_counts;   // positive boxes per level
  std::uint64_t replica = 0;

  double at(std::size_t li, std::size_t qi) const { return S[li * qs.size() + qi]; }
};

double partition_sum(const GridMeasure& m, int n, double q);
PartitionTable partition_table(const GridMeasure& m, std::span<const int> levels,
                               std::span<const double> qs, std::uint64_t replica = 0);

/// Slope of log(mean over replicas of S_n(q)) versus -log(box side), i.e.
/// n*log 2 at dyadic level n. S_n(1) is constant in n by construction, so the
/// q=1 slope is exactly 0.
SpectrumCurve estimate_tau(std::span<const PartitionTable> tables);

/// Numeric Legendre-Fenchel transform inf_q(alpha*q + tau(q)) on the tau
/// curve's q grid. Boundary-divergent or negative infima are clipped to 0 and
/// flagged "empty-level-set". Ties pick the lowest q.
SpectrumCurve legendre(const SpectrumCurve& tau, std::span<const double> alphas);

/// Concave dual sup_alpha(f(alpha) - alpha*q) over the unflagged part of a
/// spectrum curve; inverse of `legendre` on the convex range.
std::vector<double> legendre_dual(const SpectrumCurve& f, std::span<const double> qs);

// Closed forms (gamma enters through |gamma|; gamma = 0 handled exactly).
double theoretical_xi(double q, double gamma, double d);
double theoretical_tau(double q, double gamma, double d);
double theoretical_spectrum(double alpha, double gamma, double d);
double structure_phi(double q, double gamma, double d);
double alpha_q(double q, double gamma, double d);

struct LocalDimension {
  SlopeFit fit;
  std::vector<double> ratios;  // log mass / log r per radius
  double ratio_min = 0.0, ratio_max = 0.0;
  std::size_t dropped = 0;     // zero-mass radii excluded
};
LocalDimension local_dimension(const GridMeasure& m, const Point& x,
                               std::span<const double> radii);

/// Histogram estimate f(alpha) = log N_n(bin) / (n log 2) from per-box
/// exponents -log2(mass)/n at level n; counts averaged over replicas. Bins
/// are centered on multiples of bin_width; empty bins are flagged absent.
SpectrumCurve coarse_spectrum(std::span<const GridMeasure> replicas, int n,
                              double bin_width);

}  // namespace gmc::mfa
