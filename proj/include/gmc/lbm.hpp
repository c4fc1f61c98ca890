#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gmc/field.hpp"
#include "gmc/grid.hpp"
#include "gmc/measure.hpp"
#include "gmc/mrw.hpp"
#include "gmc/rng.hpp"
#include "gmc/stats.hpp"

namespace gmc::lbm {

/// Euler Brownian walk from the origin until it first leaves the box
/// [lo, hi]^d; the exterior knot is kept. Times accumulate additively
/// (t += h), which the clock construction relies on for the gamma = 0
/// identity. Throws if the walk has not exited after max_steps.
struct ExitPath {
  mrw::PathSeries path;
  std::size_t exit_index = 0;  // first knot outside the domain
};
ExitPath simulate_brownian_exit(const Point& lo, const Point& hi, int d, double h,
                                rng::Stream& stream,
                                std::size_t max_steps = 10'000'000);

/// Same walk stopped at the first knot outside the closed ball B(0, radius).
ExitPath simulate_brownian_ball_exit(double radius, int d, double h,
                                     rng::Stream& stream,
                                     std::size_t max_steps = 10'000'000);

/// Riemann-sum clock F(t_k) = sum_{j<k} exp(gamma*X(B_j) - gamma^2/2 *
/// sigma^2(B_j)) * h with nearest-grid-center field lookup at the left
/// endpoints B_0..B_{K-1} (the final, possibly exterior, knot is never
/// evaluated).
struct ClockProcess {
  std::vector<double> s;  // knot times (copied from the path)
  std::vector<double> F;  // clock values, F[0] = 0
  bool strictly_increasing = true;

  double T() const { return s.back(); }
  double total() const { return F.back(); }
};

ClockProcess clock_from_path(const mrw::PathSeries& path, std::size_t exit_index,
                             const FieldGrid& field, double gamma);

/// Piecewise-linear inverse: s with F(s) = u. Exact at knots.
double invert_clock(const ClockProcess& clock, double u);

/// Inverse lookup exposing the bracketing knot and interpolation weight, so
/// callers can interpolate other knot arrays without re-deriving the bracket.
struct ClockInverse {
  double s = 0.0;
  std::size_t k = 0;   // F[k] <= u < F[k+1]  (theta = 0 on exact knot hits)
  double theta = 0.0;  // in [0, 1)
};
ClockInverse invert_clock_at(const ClockProcess& clock, double u);

/// Cell masses F(s_{k+1}) - F(s_k) on [0, T]; total_mass = F(T) by definition.
GridMeasure mu_measure(const ClockProcess& clock);

/// Inverse-clock measure on [0, F(T)]: differences of invert_clock on a
/// uniform grid with `cells` cells; total mass T.
GridMeasure mu_inverse_measure(const ClockProcess& clock, std::size_t cells);

/// B at invert_clock(u) for each output time u in [0, F(T)].
mrw::PathSeries lbm_path(const mrw::PathSeries& b, const ClockProcess& clock,
                         std::span<const double> out_times);

struct ExitExperimentConfig {
  double gamma = 1.0;
  std::vector<double> radii;   // r values; exit balls have radius sqrt(r)
  double h = 0.0;              // step; must satisfy h <= min(r)^2 / 100
  std::size_t replicas = 0;
  std::uint64_t seed = 0;
  int d = 2;
  std::size_t grid_per_side = 64;  // field lattice over the domain
  double domain_half = 1.0;        // field domain (-half, half)^d, must contain B(0,1)
  double g_const = 2.0;            // constant g keeping the 2-d kernel PD
  std::size_t paths_per_replica = 1;  // independent walks sharing the field

  void validate() const;  // throws std::invalid_argument
};

struct ExitReplica {
  std::vector<double> mass;  // mu([0, tau_sqrt(r)]) per radius
  bool ok = false;           // false: step cap hit before the largest ball
  bool increasing = false;   // clock strictly increasing on this replica
};

/// Shares one dense covariance factor across replicas; run_replica derives
/// its own field/path streams from (seed, replica), so replicas can run on
/// any thread layout with identical results. Each replica draws one field
/// and paths_per_replica independent walks on it, one ExitReplica per walk.
class ExitSampler {
 public:
  explicit ExitSampler(const ExitExperimentConfig& cfg);
  std::vector<ExitReplica> run_replica(std::size_t replica) const;
  const ExitExperimentConfig& config() const { return cfg_; }
  double jitter() const { return diag_.jitter; }

 private:
  ExitExperimentConfig cfg_;
  Grid grid_;
  double sqrt_r_max_ = 0.0;
  GridFieldSampler sampler_;
  BuildDiagnostics diag_;
};

struct ExitMomentResult {
  SlopeFit fit;
  std::vector<double> mean_pow_mass;  // per radius
  double max_moment = 0.0;            // empirical boundedness report
  std::size_t excluded = 0;
};
ExitMomentResult exit_moment_slope(std::span<const ExitReplica> replicas,
                                   std::span<const double> radii, double q);

double theoretical_xi_mu(double q, double gamma);
double theoretical_mu_spectrum(double alpha, double gamma);
double theoretical_lbm_lower_spectrum(double alpha, double gamma);

struct RefineConfig {
  double gamma = 1.0;
  int m_lo = 5, m_hi = 8;      // coupled layer scales eps = 2^-m
  double h = 1e-5;
  double ball_radius = 0.2;    // path stops leaving B(0, ball_radius)
  double domain_half = 0.25;   // fine lattice box; diameter < 1 keeps g = 0 PD
  std::size_t replicas = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Clock totals F_m(T) for the coupled scales m_lo..m_hi of one (path, field)
/// replica, with the layered field sampled exactly on the visited cells of
/// the 2^-m_hi lattice.
struct RefineReplica {
  std::vector<double> F_T;      // per scale m
  std::size_t visited_cells = 0;
};
RefineReplica refine_replica(const RefineConfig& cfg, std::size_t replica);

struct RefineResult {
  std::vector<RefineReplica> replicas;
  std::vector<double> mean_abs_diff;  // mean |F_{m+1}(T) - F_m(T)| per gap
};
RefineResult clock_refinement(const RefineConfig& cfg);

}  // namespace gmc::lbm
