#include "gmc/field.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <cstddef>

#include "gmc/simd.hpp"

namespace gmc {
namespace {

constexpr double kJitterLadder[] = {0.0, 1e-12, 1e-10, 1e-8};

bool g_uniform(const KernelSpec& spec) { return spec.g != GTerm::table; }

double g_const_of(const KernelSpec& spec) {
  return spec.g == GTerm::constant ? spec.g_const : 0.0;
}

std::vector<Point> grid_points(const Grid& grid) {
  std::vector<Point> pts(grid.size());
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = grid.center(i);
  return pts;
}

}  // namespace

void KernelSpec::validate() const {
  if (dim != 1 && dim != 2) throw std::invalid_argument("KernelSpec: dim must be 1 or 2");
  if (!(eps > 0.0) || !std::isfinite(eps))
    throw std::invalid_argument("KernelSpec: eps must be positive");
  for (int axis = 0; axis < dim; ++axis) {
    const auto a = static_cast<std::size_t>(axis);
    if (!(lo[a] < hi[a])) throw std::invalid_argument("KernelSpec: empty domain");
  }
  if (g == GTerm::table && g_table == nullptr)
    throw std::invalid_argument("KernelSpec: g table missing");
  if (!std::isfinite(g_const)) throw std::invalid_argument("KernelSpec: g_const not finite");
}

double KernelSpec::g_at(std::size_t i, std::size_t j, std::size_t n) const {
  switch (g) {
    case GTerm::zero:
      return 0.0;
    case GTerm::constant:
      return g_const;
    case GTerm::table:
      return (*g_table)[i * n + j];
  }
  return 0.0;
}

Eigen::MatrixXd build_kernel(const KernelSpec& spec, const Grid& grid,
                             BuildDiagnostics* diag) {
  spec.validate();
  const std::size_t n = grid.size();
  if (spec.g == GTerm::table && spec.g_table->size() != n * n)
    throw std::invalid_argument("build_kernel: g table size mismatch");
  if (diag) {
    double hmin = grid.spacing(0);
    if (grid.dim == 2) hmin = std::min(hmin, grid.spacing(1));
    diag->eps_below_spacing = spec.eps < hmin;
  }
  Eigen::MatrixXd K(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const Point pi = grid.center(i);
    for (std::size_t j = 0; j <= i; ++j) {
      const double d = distance(pi, grid.center(j), grid.dim);
      const double v = -std::log(d + spec.eps) + spec.g_at(i, j, n);
      K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      K(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  }
  return K;
}

Eigen::MatrixXd build_kernel_points(const KernelSpec& spec, const PointSet& pts) {
  spec.validate();
  const std::size_t n = pts.size();
  if (spec.g == GTerm::table && spec.g_table->size() != n * n)
    throw std::invalid_argument("build_kernel_points: g table size mismatch");
  Eigen::MatrixXd K(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double d = distance(pts.pts[i], pts.pts[j], pts.dim);
      const double v = -std::log(d + spec.eps) + spec.g_at(i, j, n);
      K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      K(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  }
  return K;
}

CovarianceFactor factorize(const Eigen::MatrixXd& K, std::vector<Point> points,
                           int dim) {
  if (K.rows() != K.cols() || K.rows() == 0)
    throw std::invalid_argument("factorize: matrix must be square and non-empty");
  CovarianceFactor f;
  f.dim = dim;
  f.points = std::move(points);
  // materialize the diagonal first: Diagonal is a strided view, so its
  // data() pointer walks the first column, not the diagonal
  const Eigen::VectorXd diag = K.diagonal();
  f.diag_var.assign(diag.data(), diag.data() + diag.size());
  for (const double jit : kJitterLadder) {
    Eigen::MatrixXd W = K;
    if (jit != 0.0) W.diagonal().array() += jit;
    Eigen::LLT<Eigen::MatrixXd> llt(W);
    if (llt.info() == Eigen::Success) {
      f.L = llt.matrixL();
      f.jitter = jit;
      return f;
    }
  }
  throw NotPositiveSemidefinite(
      "factorize: kernel matrix is not positive definite (jitter ladder up to 1e-8 "
      "exhausted)");
}

std::vector<double> sample_field(const CovarianceFactor& factor, rng::Stream& stream) {
  const Eigen::Index n = factor.L.rows();
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = stream.next_normal();
  Eigen::VectorXd v = factor.L.triangularView<Eigen::Lower>() * z;
  return std::vector<double>(v.data(), v.data() + n);
}

GridFieldSampler::GridFieldSampler(const KernelSpec& spec, const Grid& grid)
    : grid_(grid), eps_(spec.eps) {
  const Eigen::MatrixXd K = build_kernel(spec, grid, &diag_);
  factor_ = factorize(K, grid_points(grid), grid.dim);
  diag_.jitter = factor_.jitter;
}

FieldGrid GridFieldSampler::sample(rng::Stream& stream) const {
  FieldGrid f;
  f.grid = grid_;
  f.values = sample_field(factor_, stream);
  f.diag_var = factor_.diag_var;
  f.eps = eps_;
  f.seed = stream.seed();
  f.stream_id = stream.stream_id();
  return f;
}

bool toeplitz_eligible(const KernelSpec& spec, const Grid& grid) {
  return spec.dim == 1 && grid.dim == 1 && g_uniform(spec);
}

ToeplitzKernel toeplitz_kernel(const KernelSpec& spec, const Grid& grid) {
  spec.validate();
  if (!toeplitz_eligible(spec, grid))
    throw std::invalid_argument("toeplitz_kernel: kernel is not stationary on this grid");
  const std::size_t n = grid.n[0];
  const double h = grid.spacing(0);
  const double gc = g_const_of(spec);
  ToeplitzKernel k;
  k.n = n;
  k.r.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    k.r[i] = -std::log(static_cast<double>(i) * h + spec.eps) + gc;
  return k;
}

double sample_stationary(const ToeplitzKernel& kernel,
                         std::vector<rng::Stream>& streams, double* out) {
  const std::size_t n = kernel.n;
  const std::size_t R = streams.size();
  if (n == 0 || kernel.r.size() != n)
    throw std::invalid_argument("sample_stationary: empty kernel");
  if (R == 0) throw std::invalid_argument("sample_stationary: no streams");

  // Pre-draw all innovations so a jitter restart replays the same z. Stream c
  // is consumed in time order and never touched by another replica's column.
  std::vector<double> z(n * R);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t c = 0; c < R; ++c) z[t * R + c] = streams[c].next_normal();

  const auto& kt = simd::active_table();
  const std::vector<double>& r = kernel.r;
  std::vector<double> rrev(n);
  for (std::size_t i = 0; i < n; ++i) rrev[i] = r[n - 1 - i];
  std::vector<double> a(n, 0.0);  // a[1..m]: prediction weights, a[j] on X_{m-j}

  for (const double jit : kJitterLadder) {
    double v = r[0] + jit;  // innovation variance
    if (!(v > 0.0)) continue;
    std::fill(a.begin(), a.end(), 0.0);
    double sd = std::sqrt(v);
    for (std::size_t c = 0; c < R; ++c) out[c] = sd * z[c];

    bool failed = false;
    for (std::size_t m = 1; m < n; ++m) {
      // reflection coefficient: rrev places r[m-1], ..., r[1] contiguously
      const double num = r[m] - kt.dot(a.data() + 1, rrev.data() + (n - m), m - 1);
      const double kap = num / v;
      if (!(std::fabs(kap) < 1.0)) {
        failed = true;
        break;
      }
      for (std::size_t j = 1; j + j < m; ++j) {
        const double aj = a[j], amj = a[m - j];
        a[j] = aj - kap * amj;
        a[m - j] = amj - kap * aj;
      }
      if ((m & 1U) == 0 && m >= 2) a[m / 2] -= kap * a[m / 2];
      a[m] = kap;
      v *= (1.0 - kap * kap);
      if (!(v > 0.0)) {
        failed = true;
        break;
      }
      sd = std::sqrt(v);
      double* row = out + m * R;
      for (std::size_t c = 0; c < R; ++c) row[c] = sd * z[m * R + c];
      // conditional mean: sum_j a[j] * X_{m-j}, rows walked downward from m-1
      kt.weighted_accum(a.data() + 1, m, out + (m - 1) * R,
                        -static_cast<std::ptrdiff_t>(R), row, R);
    }
    if (!failed) return jit;
  }
  throw NotPositiveSemidefinite(
      "sample_stationary: Toeplitz kernel is not positive definite (jitter ladder "
      "up to 1e-8 exhausted)");
}

std::vector<FieldGrid> sample_field_batch(const KernelSpec& spec, const Grid& grid,
                                          std::vector<rng::Stream>& streams,
                                          BuildDiagnostics* diag) {
  spec.validate();
  const std::size_t R = streams.size();
  std::vector<FieldGrid> out;
  out.reserve(R);
  if (toeplitz_eligible(spec, grid)) {
    const ToeplitzKernel k = toeplitz_kernel(spec, grid);
    std::vector<double> buf(k.n * R);
    const double jit = sample_stationary(k, streams, buf.data());
    if (diag) {
      diag->eps_below_spacing = spec.eps < grid.spacing(0);
      diag->jitter = jit;
    }
    for (std::size_t c = 0; c < R; ++c) {
      FieldGrid f;
      f.grid = grid;
      f.values.resize(k.n);
      for (std::size_t t = 0; t < k.n; ++t) f.values[t] = buf[t * R + c];
      f.diag_var.assign(k.n, k.r[0]);
      f.eps = spec.eps;
      f.seed = streams[c].seed();
      f.stream_id = streams[c].stream_id();
      out.push_back(std::move(f));
    }
    return out;
  }
  GridFieldSampler sampler(spec, grid);
  if (diag) *diag = sampler.diagnostics();
  for (std::size_t c = 0; c < R; ++c) out.push_back(sampler.sample(streams[c]));
  return out;
}

double LayeredField::eps_of(int m) const { return std::ldexp(1.0, -m); }

namespace {

double layer_eps(int m) { return std::ldexp(1.0, -m); }

// Toeplitz first row of layer m's covariance on a uniform 1-d grid.
std::vector<double> layer_row(const KernelSpec& spec, const Grid& grid, int m) {
  const std::size_t n = grid.n[0];
  const double h = grid.spacing(0);
  const double gc = g_const_of(spec);
  std::vector<double> r(n);
  if (m == 1) {
    for (std::size_t i = 0; i < n; ++i)
      r[i] = -std::log(static_cast<double>(i) * h + 0.5) + gc;
  } else {
    const double ep = layer_eps(m - 1), em = layer_eps(m);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(i) * h;
      r[i] = std::log((d + ep) / (d + em));
    }
  }
  return r;
}

// Dense layer-m covariance over an explicit point list.
Eigen::MatrixXd layer_matrix(const KernelSpec& spec, const std::vector<Point>& pts,
                             int dim, int m) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  const double gc = g_const_of(spec);
  Eigen::MatrixXd K(n, n);
  if (m == 1) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) {
        const double d = distance(pts[static_cast<std::size_t>(i)],
                                  pts[static_cast<std::size_t>(j)], dim);
        K(i, j) = K(j, i) = -std::log(d + 0.5) + gc;
      }
  } else {
    const double ep = layer_eps(m - 1), em = layer_eps(m);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) {
        const double d = distance(pts[static_cast<std::size_t>(i)],
                                  pts[static_cast<std::size_t>(j)], dim);
        K(i, j) = K(j, i) = std::log((d + ep) / (d + em));
      }
  }
  return K;
}

void require_uniform_g(const KernelSpec& spec, const char* where) {
  if (!g_uniform(spec))
    throw std::invalid_argument(std::string(where) +
                                ": layered sampling needs g zero or constant");
}

}  // namespace

std::vector<LayeredField> sample_layered_batch(const KernelSpec& spec, const Grid& grid,
                                               int depth,
                                               std::vector<rng::Stream>& streams) {
  spec.validate();
  require_uniform_g(spec, "sample_layered_batch");
  if (depth < 1) throw std::invalid_argument("sample_layered_batch: depth must be >= 1");
  const std::size_t R = streams.size();
  const std::size_t n = grid.size();

  std::vector<LayeredField> out(R);
  for (std::size_t c = 0; c < R; ++c) {
    out[c].grid = grid;
    out[c].depth = depth;
    out[c].layer.reserve(static_cast<std::size_t>(depth));
    out[c].cum.reserve(static_cast<std::size_t>(depth));
    out[c].var.reserve(static_cast<std::size_t>(depth));
  }

  const bool stationary = (grid.dim == 1 && spec.dim == 1);
  std::vector<double> buf;
  std::vector<Point> pts;
  if (stationary)
    buf.resize(n * R);
  else
    pts = grid_points(grid);

  double vcum = 0.0;
  for (int m = 1; m <= depth; ++m) {
    double layer_var = 0.0;
    if (stationary) {
      ToeplitzKernel k;
      k.n = n;
      k.r = layer_row(spec, grid, m);
      layer_var = k.r[0];
      sample_stationary(k, streams, buf.data());
      for (std::size_t c = 0; c < R; ++c) {
        std::vector<double> y(n);
        for (std::size_t t = 0; t < n; ++t) y[t] = buf[t * R + c];
        out[c].layer.push_back(std::move(y));
      }
    } else {
      const Eigen::MatrixXd K = layer_matrix(spec, pts, grid.dim, m);
      layer_var = K(0, 0);
      const CovarianceFactor f = factorize(K, {}, grid.dim);
      for (std::size_t c = 0; c < R; ++c)
        out[c].layer.push_back(sample_field(f, streams[c]));
    }
    vcum += layer_var;
    for (std::size_t c = 0; c < R; ++c) {
      const std::vector<double>& y = out[c].layer.back();
      if (m == 1) {
        out[c].cum.push_back(y);
      } else {
        std::vector<double> s = out[c].cum.back();
        for (std::size_t i = 0; i < n; ++i) s[i] += y[i];
        out[c].cum.push_back(std::move(s));
      }
      out[c].var.push_back(vcum);
    }
  }
  return out;
}

LayeredField sample_layered(const KernelSpec& spec, const Grid& grid, int depth,
                            rng::Stream& stream) {
  std::vector<rng::Stream> one{stream};
  auto batch = sample_layered_batch(spec, grid, depth, one);
  stream = one[0];  // hand the advanced stream back to the caller
  return std::move(batch[0]);
}

LayeredPointField sample_layered_points(const KernelSpec& spec, const PointSet& pts,
                                        int m_lo, int m_hi, rng::Stream& stream) {
  spec.validate();
  require_uniform_g(spec, "sample_layered_points");
  if (m_lo < 1 || m_hi < m_lo)
    throw std::invalid_argument("sample_layered_points: need 1 <= m_lo <= m_hi");
  if (pts.size() == 0) throw std::invalid_argument("sample_layered_points: empty set");

  LayeredPointField out;
  out.pts = pts;
  out.m_lo = m_lo;
  out.m_hi = m_hi;

  const double gc = g_const_of(spec);
  // S_{m_lo} directly from its own kernel, then independent increments.
  {
    KernelSpec base = spec;
    base.eps = layer_eps(m_lo);
    const Eigen::MatrixXd K = build_kernel_points(base, pts);
    const CovarianceFactor f = factorize(K, {}, pts.dim);
    out.cum.push_back(sample_field(f, stream));
    out.var.push_back(-std::log(layer_eps(m_lo)) + gc);
  }
  for (int m = m_lo + 1; m <= m_hi; ++m) {
    const Eigen::MatrixXd K = layer_matrix(spec, pts.pts, pts.dim, m);
    const CovarianceFactor f = factorize(K, {}, pts.dim);
    const std::vector<double> y = sample_field(f, stream);
    std::vector<double> s = out.cum.back();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += y[i];
    out.cum.push_back(std::move(s));
    out.var.push_back(out.var.back() + K(0, 0));
  }
  return out;
}

}  // namespace gmc
