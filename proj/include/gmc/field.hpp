#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmc/grid.hpp"
#include "gmc/rng.hpp"

namespace gmc {

enum class GTerm { zero, constant, table };

/// Covariance kernel K(x,y) = -log(|x-y| + eps) + g(x,y) of a regularized
/// log-correlated field on an axis-aligned box. g is zero, a constant, or a
/// user-supplied symmetric table over the evaluation points.
struct KernelSpec {
  int dim = 1;
  Point lo{0.0, 0.0};
  Point hi{1.0, 0.0};
  double eps = 0.0;  // regularization length, > 0
  GTerm g = GTerm::zero;
  double g_const = 0.0;
  const std::vector<double>* g_table = nullptr;  // row-major N x N when GTerm::table

  void validate() const;  // throws std::invalid_argument
  double g_at(std::size_t i, std::size_t j, std::size_t n) const;
};

struct NotPositiveSemidefinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Lower-triangular factor of a kernel matrix, produced with the jitter
/// ladder 0 -> 1e-12 -> 1e-10 -> 1e-8 (then a hard error). diag_var keeps the
/// kernel diagonal as supplied (jitter is reported separately).
struct CovarianceFactor {
  int dim = 1;
  std::vector<Point> points;      // lattice points x_1..x_N (may be empty)
  std::vector<double> diag_var;   // sigma_i^2
  Eigen::MatrixXd L;
  double jitter = 0.0;
};

struct FieldGrid {
  Grid grid;
  std::vector<double> values;
  std::vector<double> diag_var;  // Var(X_eps(x_i))
  double eps = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

struct BuildDiagnostics {
  bool eps_below_spacing = false;  // warn-level: kernel undersampled
  double jitter = 0.0;
};

Eigen::MatrixXd build_kernel(const KernelSpec& spec, const Grid& grid,
                             BuildDiagnostics* diag = nullptr);
Eigen::MatrixXd build_kernel_points(const KernelSpec& spec, const PointSet& pts);

CovarianceFactor factorize(const Eigen::MatrixXd& K,
                           std::vector<Point> points = {}, int dim = 1);

/// values = L * z with z drawn from the stream in index order.
std::vector<double> sample_field(const CovarianceFactor& factor, rng::Stream& stream);

/// Dense path: build + factorize once, sample many replicas.
class GridFieldSampler {
 public:
  GridFieldSampler(const KernelSpec& spec, const Grid& grid);
  FieldGrid sample(rng::Stream& stream) const;
  const CovarianceFactor& factor() const { return factor_; }
  const BuildDiagnostics& diagnostics() const { return diag_; }

 private:
  Grid grid_;
  double eps_;
  CovarianceFactor factor_;
  BuildDiagnostics diag_;
};

/// True when the kernel is stationary on a uniform 1-d grid (g zero or
/// constant), which enables the exact O(N^2) Toeplitz innovations sampler.
bool toeplitz_eligible(const KernelSpec& spec, const Grid& grid);

/// First row r_k = K(x_0, x_k) of the stationary covariance.
struct ToeplitzKernel {
  std::size_t n = 0;
  std::vector<double> r;
};
ToeplitzKernel toeplitz_kernel(const KernelSpec& spec, const Grid& grid);

/// Exact innovations (Levinson-Durbin) sampling of `streams.size()` replicas
/// in lockstep. out is row-major [time][replica]. Equals the dense Cholesky
/// map applied to the same z stream (unique PD lower factor). Returns the
/// jitter applied to r[0] (ladder as in factorize).
double sample_stationary(const ToeplitzKernel& kernel,
                         std::vector<rng::Stream>& streams, double* out);

/// Samples one FieldGrid per stream: Toeplitz lockstep when eligible,
/// otherwise a shared dense factor. Deterministic per replica regardless of
/// batching (each replica consumes only its own stream).
std::vector<FieldGrid> sample_field_batch(const KernelSpec& spec, const Grid& grid,
                                          std::vector<rng::Stream>& streams,
                                          BuildDiagnostics* diag = nullptr);

/// Multiscale stack: S_m = sum of independent layers Y_1..Y_m has covariance
/// K_{2^-m}; layer m covariance is K_{2^-m} - K_{2^-(m-1)} (base: K_{1/2}).
/// Requires g zero or constant, so the variance profile v_m is uniform in x.
struct LayeredField {
  Grid grid;
  int depth = 0;
  std::vector<std::vector<double>> layer;  // Y_m, m = 1..depth
  std::vector<std::vector<double>> cum;    // S_m
  std::vector<double> var;                 // v_m = Var(S_m(x))
  double eps_of(int m) const;
};

LayeredField sample_layered(const KernelSpec& spec, const Grid& grid, int depth,
                            rng::Stream& stream);
std::vector<LayeredField> sample_layered_batch(const KernelSpec& spec, const Grid& grid,
                                               int depth,
                                               std::vector<rng::Stream>& streams);

/// Layered stack evaluated on a scattered point set (cells actually visited
/// by a path), for scales m_lo..m_hi. Dense factorization per layer; feasible
/// because only the visited cells enter the matrix.
struct LayeredPointField {
  PointSet pts;
  int m_lo = 0, m_hi = 0;
  std::vector<std::vector<double>> cum;  // S_m on pts, m = m_lo..m_hi
  std::vector<double> var;               // v_m
};
LayeredPointField sample_layered_points(const KernelSpec& spec, const PointSet& pts,
                                        int m_lo, int m_hi, rng::Stream& stream);

}  // namespace gmc
