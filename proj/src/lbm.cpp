#include "gmc/lbm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>

namespace gmc::lbm {
namespace {

ExitPath walk_until(const std::function<bool(const double*, int)>& outside, int d,
                    double h, rng::Stream& stream, std::size_t max_steps,
                    const char* what) {
  if (d < 1 || d > 2) throw std::invalid_argument(std::string(what) + ": d must be 1 or 2");
  if (!(h > 0.0)) throw std::invalid_argument(std::string(what) + ": h must be > 0");

  const double sd = std::sqrt(h);
  const auto dd = static_cast<std::size_t>(d);
  mrw::PathSeries p;
  p.kind = mrw::PathSeries::Kind::brownian;
  p.seed = stream.stream_id();
  p.d_target = d;
  p.t.push_back(0.0);
  p.x.assign(dd, 0.0);

  double pos[2] = {0.0, 0.0};
  double t = 0.0;
  for (std::size_t step = 1; step <= max_steps; ++step) {
    for (std::size_t c = 0; c < dd; ++c) pos[c] += sd * stream.next_normal();
    t += h;  // additive accumulation, mirrored by the clock's F for gamma = 0
    p.t.push_back(t);
    for (std::size_t c = 0; c < dd; ++c) p.x.push_back(pos[c]);
    if (outside(pos, d)) return {std::move(p), step};
  }
  throw std::runtime_error(std::string(what) + ": no exit after " +
                           std::to_string(max_steps) + " steps (|x| = " +
                           std::to_string(std::sqrt(pos[0] * pos[0] + pos[1] * pos[1])) +
                           ")");
}

}  // namespace

ExitPath simulate_brownian_exit(const Point& lo, const Point& hi, int d, double h,
                                rng::Stream& stream, std::size_t max_steps) {
  for (int a = 0; a < d; ++a) {
    const auto i = static_cast<std::size_t>(a);
    if (!(lo[i] < 0.0 && 0.0 < hi[i]))
      throw std::invalid_argument("simulate_brownian_exit: origin not interior");
  }
  const auto outside = [lo, hi](const double* pos, int dim) {
    for (int a = 0; a < dim; ++a) {
      const auto i = static_cast<std::size_t>(a);
      if (pos[i] <= lo[i] || pos[i] >= hi[i]) return true;
    }
    return false;
  };
  return walk_until(outside, d, h, stream, max_steps, "simulate_brownian_exit");
}

ExitPath simulate_brownian_ball_exit(double radius, int d, double h,
                                     rng::Stream& stream, std::size_t max_steps) {
  if (!(radius > 0.0))
    throw std::invalid_argument("simulate_brownian_ball_exit: radius must be > 0");
  const double r2 = radius * radius;
  const auto outside = [r2](const double* pos, int dim) {
    double s = 0.0;
    for (int a = 0; a < dim; ++a) s += pos[a] * pos[a];
    return s > r2;
  };
  return walk_until(outside, d, h, stream, max_steps, "simulate_brownian_ball_exit");
}

ClockProcess clock_from_path(const mrw::PathSeries& path, std::size_t exit_index,
                             const FieldGrid& field, double gamma) {
  if (!(gamma * gamma < 4.0))
    throw std::invalid_argument("clock_from_path: need gamma^2 < 4");
  if (exit_index < 1 || exit_index >= path.knots())
    throw std::invalid_argument("clock_from_path: exit index out of range");
  if (field.grid.dim != path.d_target)
    throw std::invalid_argument("clock_from_path: field/path dimension mismatch");

  ClockProcess clock;
  clock.s.assign(path.t.begin(), path.t.begin() + static_cast<std::ptrdiff_t>(exit_index) + 1);
  clock.F.resize(exit_index + 1);
  clock.F[0] = 0.0;
  const double h = path.t[1] - path.t[0];
  const double g2h = 0.5 * gamma * gamma;
  for (std::size_t j = 0; j < exit_index; ++j) {
    double w;
    if (gamma == 0.0) {
      w = 1.0;  // F then accumulates exactly like the path's own times
    } else {
      Point p{path.coord(j, 0), path.d_target == 2 ? path.coord(j, 1) : 0.0};
      if (!field.grid.contains(p))
        throw std::runtime_error("clock_from_path: path point outside field grid at index " +
                                 std::to_string(j));
      const std::size_t idx = field.grid.nearest(p);
      w = std::exp(gamma * field.values[idx] - g2h * field.diag_var[idx]);
    }
    const double next = clock.F[j] + w * h;
    if (!(next > clock.F[j])) clock.strictly_increasing = false;
    clock.F[j + 1] = next;
  }
  return clock;
}

ClockInverse invert_clock_at(const ClockProcess& clock, double u) {
  const double total = clock.total();
  if (!(u >= 0.0) || u > total)
    throw std::invalid_argument("invert_clock: u outside [0, F(T)]");
  const auto it = std::upper_bound(clock.F.begin(), clock.F.end(), u);
  auto k = static_cast<std::size_t>(it - clock.F.begin());
  if (k > 0) --k;  // F[k] <= u
  if (k >= clock.F.size() - 1) return {clock.s.back(), clock.F.size() - 1, 0.0};
  const double fk = clock.F[k];
  if (u == fk) return {clock.s[k], k, 0.0};
  const double theta = (u - fk) / (clock.F[k + 1] - fk);
  return {clock.s[k] + theta * (clock.s[k + 1] - clock.s[k]), k, theta};
}

double invert_clock(const ClockProcess& clock, double u) {
  return invert_clock_at(clock, u).s;
}

GridMeasure mu_measure(const ClockProcess& clock) {
  const std::size_t cells = clock.s.size() - 1;
  GridMeasure m;
  m.grid = Grid::line(0.0, clock.T(), cells);
  m.mass.resize(cells);
  for (std::size_t k = 0; k < cells; ++k) m.mass[k] = clock.F[k + 1] - clock.F[k];
  m.total_mass = clock.total();  // telescoped, exact by definition
  return m;
}

GridMeasure mu_inverse_measure(const ClockProcess& clock, std::size_t cells) {
  if (cells == 0) throw std::invalid_argument("mu_inverse_measure: need cells >= 1");
  const double U = clock.total();
  GridMeasure m;
  m.grid = Grid::line(0.0, U, cells);
  m.mass.resize(cells);
  double prev = 0.0;  // invert_clock(0) = 0
  for (std::size_t k = 1; k <= cells; ++k) {
    const double u = k == cells ? U : U * (static_cast<double>(k) / static_cast<double>(cells));
    const double s = invert_clock(clock, u);
    m.mass[k - 1] = s - prev;
    prev = s;
  }
  m.total_mass = clock.T();  // telescoped
  return m;
}

mrw::PathSeries lbm_path(const mrw::PathSeries& b, const ClockProcess& clock,
                         std::span<const double> out_times) {
  if (clock.s.size() > b.knots() || clock.s.empty() || b.t[0] != clock.s[0])
    throw std::invalid_argument("lbm_path: clock does not match the path");
  if (out_times.empty() || out_times[0] != 0.0)
    throw std::invalid_argument("lbm_path: output times must start at 0");
  for (std::size_t i = 0; i + 1 < out_times.size(); ++i)
    if (!(out_times[i] < out_times[i + 1]))
      throw std::invalid_argument("lbm_path: output times must strictly increase");

  const auto d = static_cast<std::size_t>(b.d_target);
  mrw::PathSeries p;
  p.kind = mrw::PathSeries::Kind::lbm;
  p.seed = b.seed;
  p.d_target = b.d_target;
  p.t.assign(out_times.begin(), out_times.end());
  p.x.reserve(out_times.size() * d);
  for (const double u : out_times) {
    const ClockInverse inv = invert_clock_at(clock, u);  // throws if u > F(T)
    for (std::size_t c = 0; c < d; ++c) {
      const double a = b.x[inv.k * d + c];
      p.x.push_back(inv.theta == 0.0
                        ? a
                        : a + inv.theta * (b.x[(inv.k + 1) * d + c] - a));
    }
  }
  return p;
}

void ExitExperimentConfig::validate() const {
  if (!(gamma * gamma < 4.0))
    throw std::invalid_argument("lbm-exit: need gamma^2 < 4");
  if (d != 2) throw std::invalid_argument("lbm-exit: only d = 2 is supported");
  if (radii.empty()) throw std::invalid_argument("lbm-exit: no radii");
  for (std::size_t k = 0; k < radii.size(); ++k) {
    if (!(radii[k] > 0.0)) throw std::invalid_argument("lbm-exit: radii must be > 0");
    if (k > 0 && !(radii[k] < radii[k - 1]))
      throw std::invalid_argument("lbm-exit: radii must strictly decrease");
  }
  const double r_min = radii.back();
  if (!(h > 0.0) || h > r_min * r_min / 100.0)
    throw std::invalid_argument("lbm-exit: need 0 < h <= min(r)^2/100");
  if (!(domain_half >= 1.0))
    throw std::invalid_argument("lbm-exit: domain must contain B(0,1)");
  if (std::sqrt(radii.front()) >= domain_half)
    throw std::invalid_argument("lbm-exit: largest exit ball leaves the field domain");
  if (replicas == 0) throw std::invalid_argument("lbm-exit: need replicas >= 1");
  if (paths_per_replica == 0 || paths_per_replica > 64)
    throw std::invalid_argument("lbm-exit: need 1 <= paths_per_replica <= 64");
  if (grid_per_side < 2) throw std::invalid_argument("lbm-exit: grid too coarse");
  if (!std::isfinite(g_const)) throw std::invalid_argument("lbm-exit: bad g_const");
}

namespace {

const ExitExperimentConfig& validated(const ExitExperimentConfig& cfg) {
  cfg.validate();
  return cfg;
}

KernelSpec exit_kernel_spec(const ExitExperimentConfig& cfg) {
  KernelSpec spec;
  spec.dim = 2;
  spec.lo = {-cfg.domain_half, -cfg.domain_half};
  spec.hi = {cfg.domain_half, cfg.domain_half};
  spec.eps = 2.0 * cfg.domain_half / static_cast<double>(cfg.grid_per_side);
  spec.g = GTerm::constant;
  spec.g_const = cfg.g_const;
  return spec;
}

}  // namespace

ExitSampler::ExitSampler(const ExitExperimentConfig& cfg)
    : cfg_(validated(cfg)),
      grid_(Grid::square(-cfg.domain_half, cfg.domain_half, cfg.grid_per_side)),
      sqrt_r_max_(std::sqrt(cfg.radii.front())),
      sampler_(exit_kernel_spec(cfg), grid_) {
  diag_ = sampler_.diagnostics();
}

std::vector<ExitReplica> ExitSampler::run_replica(std::size_t replica) const {
  rng::Stream field_stream(cfg_.seed, rng::derive_stream("lbm-exit/field", replica));
  const FieldGrid field = sampler_.sample(field_stream);

  const std::size_t paths = cfg_.paths_per_replica;
  std::vector<ExitReplica> out(paths);
  for (std::size_t p = 0; p < paths; ++p) {
    rng::Stream path_stream(
        cfg_.seed, rng::derive_stream("lbm-exit/path", replica * paths + p));
    ExitPath ep;
    try {
      ep = simulate_brownian_ball_exit(sqrt_r_max_, cfg_.d, cfg_.h, path_stream);
    } catch (const std::runtime_error&) {
      continue;  // step cap: excluded with ok = false
    }
    const ClockProcess clock =
        clock_from_path(ep.path, ep.exit_index, field, cfg_.gamma);

    ExitReplica& rep = out[p];
    rep.increasing = clock.strictly_increasing;
    rep.mass.resize(cfg_.radii.size());
    // radii are decreasing; scan the path once from the smallest ball outward
    std::size_t j = 0;
    for (std::size_t k = cfg_.radii.size(); k-- > 0;) {
      const double rr = cfg_.radii[k];  // exit ball radius sqrt(rr)
      while (j <= ep.exit_index) {
        const double px = ep.path.coord(j, 0), py = ep.path.coord(j, 1);
        if (px * px + py * py > rr) break;
        ++j;
      }
      rep.mass[k] = clock.F[j];
    }
    rep.ok = true;
  }
  return out;
}

ExitMomentResult exit_moment_slope(std::span<const ExitReplica> replicas,
                                   std::span<const double> radii, double q) {
  ExitMomentResult res;
  res.mean_pow_mass.resize(radii.size());
  std::vector<double> x(radii.size()), y(radii.size());
  for (std::size_t k = 0; k < radii.size(); ++k) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const ExitReplica& rep : replicas) {
      if (!rep.ok) {
        if (k == 0) ++res.excluded;
        continue;
      }
      const double mass = rep.mass[k];
      const double term = q == 1.0 ? mass : std::pow(mass, q);
      res.max_moment = std::max(res.max_moment, term);
      sum += term;
      ++count;
    }
    if (count == 0) throw std::invalid_argument("exit_moment_slope: no usable replicas");
    res.mean_pow_mass[k] = sum / static_cast<double>(count);
    x[k] = std::log(radii[k]);
    y[k] = std::log(res.mean_pow_mass[k]);
  }
  res.fit = linfit(x, y);
  return res;
}

double theoretical_xi_mu(double q, double gamma) {
  if (!(gamma * gamma < 4.0)) throw std::invalid_argument("xi_mu: need gamma^2 < 4");
  const double g4 = 0.25 * gamma * gamma;
  return (1.0 + g4) * q - g4 * q * q;
}

double theoretical_mu_spectrum(double alpha, double gamma) {
  if (!(gamma * gamma < 4.0)) throw std::invalid_argument("mu_spectrum: need gamma^2 < 4");
  if (gamma == 0.0) return alpha == 1.0 ? 1.0 : 0.0;
  const double ag = std::fabs(gamma);
  const double a_lo = (1.0 - 0.5 * ag) * (1.0 - 0.5 * ag);
  const double a_hi = (1.0 + 0.5 * ag) * (1.0 + 0.5 * ag);
  if (alpha < a_lo || alpha > a_hi) return 0.0;
  const double t = (1.0 - alpha) / ag + 0.25 * ag;
  return 1.0 - t * t;
}

double theoretical_lbm_lower_spectrum(double alpha, double gamma) {
  // the Brownian factor-2 chain composed with the mu spectrum; algebraically
  // identical to the direct closed form on the support, 0 outside
  if (!(alpha > 0.0)) {
    if (!(gamma * gamma < 4.0))
      throw std::invalid_argument("lbm_lower_spectrum: need gamma^2 < 4");
    return 0.0;
  }
  return 2.0 * alpha * theoretical_mu_spectrum(1.0 / (2.0 * alpha), gamma);
}

void RefineConfig::validate() const {
  if (!(gamma * gamma < 4.0)) throw std::invalid_argument("lbm-refine: need gamma^2 < 4");
  if (m_lo < 1 || m_hi < m_lo) throw std::invalid_argument("lbm-refine: bad scale range");
  if (!(h > 0.0)) throw std::invalid_argument("lbm-refine: h must be > 0");
  if (!(ball_radius > 0.0) || !(ball_radius < domain_half))
    throw std::invalid_argument("lbm-refine: need 0 < ball_radius < domain_half");
  if (replicas == 0) throw std::invalid_argument("lbm-refine: need replicas >= 1");
  const double cells = 2.0 * domain_half * std::ldexp(1.0, m_hi);
  if (cells != std::floor(cells) || cells < 2.0)
    throw std::invalid_argument("lbm-refine: domain must align with the 2^-m_hi lattice");
}

RefineReplica refine_replica(const RefineConfig& cfg, std::size_t replica) {
  cfg.validate();
  rng::Stream path_stream(cfg.seed, rng::derive_stream("lbm-refine/path", replica));
  rng::Stream field_stream(cfg.seed, rng::derive_stream("lbm-refine/field", replica));

  const ExitPath ep =
      simulate_brownian_ball_exit(cfg.ball_radius, 2, cfg.h, path_stream);
  const auto per_side =
      static_cast<std::size_t>(2.0 * cfg.domain_half * std::ldexp(1.0, cfg.m_hi));
  const Grid grid = Grid::square(-cfg.domain_half, cfg.domain_half, per_side);

  // unique visited cells (left endpoints only), ascending for determinism
  std::vector<std::size_t> knot_cell(ep.exit_index);
  std::set<std::size_t> visited;
  for (std::size_t j = 0; j < ep.exit_index; ++j) {
    const Point p{ep.path.coord(j, 0), ep.path.coord(j, 1)};
    knot_cell[j] = grid.nearest(p);
    visited.insert(knot_cell[j]);
  }
  PointSet pts;
  pts.dim = 2;
  std::vector<std::size_t> cell_of_point(visited.begin(), visited.end());
  for (const std::size_t c : cell_of_point) pts.pts.push_back(grid.center(c));

  KernelSpec spec;
  spec.dim = 2;
  spec.lo = grid.lo;
  spec.hi = grid.hi;
  spec.eps = std::ldexp(1.0, -cfg.m_hi);
  const LayeredPointField lpf =
      sample_layered_points(spec, pts, cfg.m_lo, cfg.m_hi, field_stream);

  // cell index -> row in the point field
  std::vector<std::size_t> row(grid.size(), 0);
  for (std::size_t i = 0; i < cell_of_point.size(); ++i) row[cell_of_point[i]] = i;

  RefineReplica out;
  out.visited_cells = pts.size();
  const std::size_t scales = static_cast<std::size_t>(cfg.m_hi - cfg.m_lo) + 1;
  out.F_T.resize(scales);
  for (std::size_t mi = 0; mi < scales; ++mi) {
    const std::vector<double>& S = lpf.cum[mi];
    const double drift = 0.5 * cfg.gamma * cfg.gamma * lpf.var[mi];
    double F = 0.0;
    for (std::size_t j = 0; j < ep.exit_index; ++j)
      F += std::exp(cfg.gamma * S[row[knot_cell[j]]] - drift) * cfg.h;
    out.F_T[mi] = F;
  }
  return out;
}

RefineResult clock_refinement(const RefineConfig& cfg) {
  cfg.validate();
  RefineResult res;
  res.replicas.reserve(cfg.replicas);
  for (std::size_t r = 0; r < cfg.replicas; ++r)
    res.replicas.push_back(refine_replica(cfg, r));
  const std::size_t scales = static_cast<std::size_t>(cfg.m_hi - cfg.m_lo) + 1;
  for (std::size_t g = 0; g + 1 < scales; ++g) {
    double s = 0.0;
    for (const RefineReplica& rep : res.replicas)
      s += std::fabs(rep.F_T[g + 1] - rep.F_T[g]);
    res.mean_abs_diff.push_back(s / static_cast<double>(cfg.replicas));
  }
  return res;
}

}  // namespace gmc::lbm
