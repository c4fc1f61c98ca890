#include "gmc/measure.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <stdexcept>

#include "gmc/simd.hpp"

namespace gmc {
namespace {

constexpr double kLn2 = 0.69314718055994530942;

bool is_pow2(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

int floor_log2(std::size_t v) {
  int k = -1;
  while (v) {
    v >>= 1;
    ++k;
  }
  return k;
}

bool dyadic_grid(const Grid& g) {
  if (!is_pow2(g.n[0])) return false;
  return g.dim == 1 || g.n[1] == g.n[0];
}

// One dyadic coarsening step; the fixed association order makes repeated
// contraction (and hence every level's q=1 partition sum) bit-reproducible.
std::vector<double> contract_once(const std::vector<double>& v, int dim,
                                  std::size_t side) {
  if (dim == 1) {
    std::vector<double> w(side / 2);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = v[2 * i] + v[2 * i + 1];
    return w;
  }
  const std::size_t half = side / 2;
  std::vector<double> w(half * half);
  for (std::size_t I = 0; I < half; ++I)
    for (std::size_t J = 0; J < half; ++J) {
      const std::size_t r0 = 2 * I * side + 2 * J;
      const std::size_t r1 = (2 * I + 1) * side + 2 * J;
      w[I * half + J] = (v[r0] + v[r0 + 1]) + (v[r1] + v[r1 + 1]);
    }
  return w;
}

double fixed_order_total(const Grid& grid, const std::vector<double>& mass) {
  if (dyadic_grid(grid)) {
    std::vector<double> cur = mass;
    std::size_t side = grid.n[0];
    while (side > 1) {
      cur = contract_once(cur, grid.dim, side);
      side /= 2;
    }
    return cur[0];
  }
  return tree_sum(mass);
}

}  // namespace

GmcParams::GmcParams(double gamma_, int dim_) : gamma(gamma_), dim(dim_) {
  if (dim != 1 && dim != 2) throw std::invalid_argument("GmcParams: dim must be 1 or 2");
  if (!std::isfinite(gamma)) throw std::invalid_argument("GmcParams: gamma not finite");
  if (!(gamma * gamma < 2.0 * dim))
    throw std::invalid_argument("GmcParams: need gamma^2 < 2*dim (subcritical)");
}

int GridMeasure::level() const {
  std::size_t side = grid.n[0];
  if (grid.dim == 2) side = std::min(side, grid.n[1]);
  return floor_log2(side);
}

double tree_sum(std::span<const double> v) {
  if (v.empty()) return 0.0;
  std::vector<double> w(v.begin(), v.end());
  std::size_t n = w.size();
  while (n > 1) {
    std::size_t h = n / 2;
    for (std::size_t i = 0; i < h; ++i) w[i] = w[2 * i] + w[2 * i + 1];
    if (n & 1U) {
      w[h] = w[n - 1];
      ++h;
    }
    n = h;
  }
  return w[0];
}

std::vector<double> box_masses(const GridMeasure& m, int n) {
  if (n < 0) throw std::invalid_argument("box_masses: level must be >= 0");
  const int L = m.level();
  if (n > L) throw std::invalid_argument("box_masses: level exceeds grid resolution");

  if (dyadic_grid(m.grid)) {
    std::vector<double> cur = m.mass;
    std::size_t side = m.grid.n[0];
    int lev = L;
    while (lev > n) {
      cur = contract_once(cur, m.grid.dim, side);
      side /= 2;
      --lev;
    }
    return cur;
  }

  // non-dyadic fine grid: assign each fine cell to the level-n box holding
  // its center, in ascending cell order
  const std::size_t per_axis = std::size_t{1} << static_cast<unsigned>(n);
  const std::size_t nboxes = m.grid.dim == 1 ? per_axis : per_axis * per_axis;
  std::vector<double> out(nboxes, 0.0);
  for (std::size_t i = 0; i < m.mass.size(); ++i) {
    const Point c = m.grid.center(i);
    std::size_t bx[2] = {0, 0};
    for (int axis = 0; axis < m.grid.dim; ++axis) {
      const auto a = static_cast<std::size_t>(axis);
      const double w = (m.grid.hi[a] - m.grid.lo[a]) / static_cast<double>(per_axis);
      auto k = static_cast<std::ptrdiff_t>(std::floor((c[a] - m.grid.lo[a]) / w));
      k = std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(per_axis) - 1);
      bx[a] = static_cast<std::size_t>(k);
    }
    const std::size_t idx = m.grid.dim == 1 ? bx[0] : bx[0] * per_axis + bx[1];
    out[idx] += m.mass[i];
  }
  return out;
}

GridMeasure lebesgue_measure(const Grid& grid) {
  GridMeasure m;
  m.grid = grid;
  m.mass.assign(grid.size(), grid.cell_volume());
  m.total_mass = fixed_order_total(grid, m.mass);
  return m;
}

GridMeasure gmc_from_field(const FieldGrid& field, const GmcParams& params) {
  if (params.dim != field.grid.dim)
    throw std::invalid_argument("gmc_from_field: dimension mismatch");
  const std::size_t n = field.values.size();
  if (n != field.grid.size() || field.diag_var.size() != n)
    throw std::invalid_argument("gmc_from_field: field arrays inconsistent with grid");

  GridMeasure m;
  m.grid = field.grid;
  const double vol = field.grid.cell_volume();
  if (params.gamma == 0.0) {
    // exact Lebesgue collapse, no transcendental round-off
    m.mass.assign(n, vol);
  } else {
    const double g = params.gamma;
    std::vector<double> arg(n);
    for (std::size_t i = 0; i < n; ++i)
      arg[i] = g * field.values[i] - 0.5 * g * g * field.diag_var[i];
    m.mass.resize(n);
    simd::active_table().vexp(arg.data(), m.mass.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      double w = m.mass[i] * vol;
      if (w < DBL_MIN) {  // keep q<0 partition sums finite
        w = DBL_MIN;
        ++m.underflow_clamps;
      }
      m.mass[i] = w;
    }
  }
  m.total_mass = fixed_order_total(m.grid, m.mass);
  return m;
}

MassQuery ball_mass(const GridMeasure& m, const Point& x, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("ball_mass: radius must be positive");
  const Grid& g = m.grid;

  // flag when the ball misses the whole domain box
  double d2 = 0.0;
  for (int axis = 0; axis < g.dim; ++axis) {
    const auto a = static_cast<std::size_t>(axis);
    const double gap = std::max({0.0, g.lo[a] - x[a], x[a] - g.hi[a]});
    d2 += gap * gap;
  }
  if (d2 > r * r) return {0.0, true};

  std::array<std::size_t, 2> i_lo{0, 0}, i_hi{0, 0};
  for (int axis = 0; axis < g.dim; ++axis) {
    const auto a = static_cast<std::size_t>(axis);
    const double h = g.spacing(axis);
    const auto cells = static_cast<std::ptrdiff_t>(g.n[a]);
    auto lo = static_cast<std::ptrdiff_t>(std::floor((x[a] - r - g.lo[a]) / h - 0.5)) - 1;
    auto hi = static_cast<std::ptrdiff_t>(std::ceil((x[a] + r - g.lo[a]) / h - 0.5)) + 1;
    i_lo[a] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(lo, 0, cells - 1));
    i_hi[a] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(hi, 0, cells - 1));
  }
  if (g.dim == 1) i_lo[1] = i_hi[1] = 0;

  double sum = 0.0;
  for (std::size_t ix = i_lo[0]; ix <= i_hi[0]; ++ix)
    for (std::size_t iy = i_lo[1]; iy <= i_hi[1]; ++iy) {
      const std::size_t idx = g.index(ix, iy);
      if (distance(g.center(idx), x, g.dim) <= r) sum += m.mass[idx];
    }
  return {sum, false};
}

MassSampler::MassSampler(const GridMeasure& m) {
  cdf_.resize(m.mass.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < m.mass.size(); ++i) {
    const double w = m.mass[i];
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument("MassSampler: masses must be finite and >= 0");
    acc += w;
    cdf_[i] = acc;
  }
  if (!(acc > 0.0)) throw std::invalid_argument("MassSampler: zero total mass");
}

std::size_t MassSampler::draw(rng::Stream& stream) const {
  const double u = stream.next_uniform() * cdf_.back();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  const auto idx = static_cast<std::size_t>(it - cdf_.begin());
  return std::min(idx, cdf_.size() - 1);
}

std::size_t sample_cell(const GridMeasure& m, rng::Stream& stream) {
  return MassSampler(m).draw(stream);  // O(N) setup; batch callers keep a sampler
}

Point sample_point(const GridMeasure& m, rng::Stream& stream) {
  return m.grid.center(sample_cell(m, stream));
}

MomentScalingResult moment_scaling_slope(std::span<const GridMeasure> replicas,
                                         std::span<const double> radii, double q,
                                         std::span<const Point> centers) {
  if (replicas.empty() || radii.empty() || centers.empty())
    throw std::invalid_argument("moment_scaling_slope: empty input");
  const double cell = replicas.front().grid.spacing(0);
  for (std::size_t k = 0; k < radii.size(); ++k) {
    if (k > 0 && !(radii[k] < radii[k - 1]))
      throw std::invalid_argument("moment_scaling_slope: radii must strictly decrease");
    if (radii[k] < 4.0 * cell)
      throw std::invalid_argument("moment_scaling_slope: radius below 4 cell sides");
  }

  MomentScalingResult res;
  res.mean_pow_mass.resize(radii.size());
  std::vector<double> x(radii.size()), y(radii.size());
  for (std::size_t k = 0; k < radii.size(); ++k) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const GridMeasure& rep : replicas)
      for (const Point& c : centers) {
        const double mass = ball_mass(rep, c, radii[k]).mass;
        if (q < 0.0 && mass == 0.0) {
          ++res.excluded;
          continue;
        }
        double term;
        if (q == 1.0)
          term = mass;
        else if (q == 0.0)
          term = 1.0;
        else
          term = std::pow(mass, q);
        sum += term;
        ++count;
      }
    const double mean = count ? sum / static_cast<double>(count) : 0.0;
    res.mean_pow_mass[k] = mean;
    x[k] = std::log(radii[k]);
    y[k] = std::log(std::max(mean, DBL_MIN));
  }
  res.fit = linfit(x, y);
  return res;
}

double thick_point_exponent(const LayeredField& f, std::size_t cell, int m_lo,
                            int m_hi) {
  if (m_lo < 1 || m_hi <= m_lo || m_hi > f.depth)
    throw std::invalid_argument("thick_point_exponent: bad scale range");
  if (cell >= f.grid.size())
    throw std::invalid_argument("thick_point_exponent: cell out of range");
  std::vector<double> x, y;
  for (int m = m_lo; m <= m_hi; ++m) {
    x.push_back(static_cast<double>(m) * kLn2);
    y.push_back(f.cum[static_cast<std::size_t>(m - 1)][cell]);
  }
  return linfit(x, y).slope;
}

ThickPointCounts thick_point_box_count(const LayeredField& f, double gamma, int n_lo,
                                       int n_hi) {
  if (n_lo < 1 || n_hi < n_lo || n_hi > f.depth)
    throw std::invalid_argument("thick_point_box_count: bad level range");
  const std::size_t side = f.grid.n[0];
  if (!is_pow2(side) || (f.grid.dim == 2 && f.grid.n[1] != side))
    throw std::invalid_argument("thick_point_box_count: grid must be dyadic");
  const int L = floor_log2(side);
  if (n_hi > L)
    throw std::invalid_argument("thick_point_box_count: level exceeds grid resolution");

  ThickPointCounts out;
  std::vector<double> x, y;
  for (int n = n_lo; n <= n_hi; ++n) {
    const std::vector<double>& S = f.cum[static_cast<std::size_t>(n - 1)];
    const double thr = gamma * static_cast<double>(n) * kLn2;
    const std::size_t boxes = std::size_t{1} << static_cast<unsigned>(n);
    const std::size_t s = std::size_t{1} << static_cast<unsigned>(L - n);
    // representative fine cell: the one holding the box center
    const auto rep = [&](std::size_t k) { return s == 1 ? k : k * s + s / 2; };
    std::size_t count = 0;
    if (f.grid.dim == 1) {
      for (std::size_t k = 0; k < boxes; ++k)
        if (S[rep(k)] >= thr) ++count;
    } else {
      for (std::size_t kx = 0; kx < boxes; ++kx)
        for (std::size_t ky = 0; ky < boxes; ++ky)
          if (S[f.grid.index(rep(kx), rep(ky))] >= thr) ++count;
    }
    out.levels.push_back(n);
    out.counts.push_back(count);
    if (count > 0) {
      x.push_back(static_cast<double>(n) * kLn2);
      y.push_back(std::log(static_cast<double>(count)));
    }
  }
  out.dim_fit = linfit(x, y);
  return out;
}

}  // namespace gmc
