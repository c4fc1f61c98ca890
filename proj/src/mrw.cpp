#include "gmc/mrw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gmc/mfa.hpp"

namespace gmc::mrw {
namespace {

// interpolated position (piecewise linear); theta == 0 reproduces knot bits
void position_at(const PathSeries& p, double s, double* out) {
  const double h = p.t[1] - p.t[0];
  const auto K = p.knots() - 1;
  auto k = static_cast<std::size_t>(std::clamp(
      std::floor(s / h), 0.0, static_cast<double>(K - 1)));
  const double theta = s / h - static_cast<double>(k);
  const auto d = static_cast<std::size_t>(p.d_target);
  for (std::size_t c = 0; c < d; ++c) {
    const double a = p.x[k * d + c];
    out[c] = a + theta * (p.x[(k + 1) * d + c] - a);
  }
}

}  // namespace

PathSeries path_from_variances(std::span<const double> vars,
                               std::span<const double> times, int d_target,
                               rng::Stream& stream, PathSeries::Kind kind) {
  if (d_target < 1) throw std::invalid_argument("path: d_target must be >= 1");
  if (times.size() != vars.size() + 1 || vars.empty())
    throw std::invalid_argument("path: times must have one more entry than vars");
  if (times[0] != 0.0) throw std::invalid_argument("path: times must start at 0");
  for (std::size_t k = 0; k + 1 < times.size(); ++k)
    if (!(times[k] < times[k + 1]))
      throw std::invalid_argument("path: times must strictly increase");
  for (const double v : vars)
    if (!(v >= 0.0)) throw std::invalid_argument("path: negative variance");

  PathSeries p;
  p.kind = kind;
  p.seed = stream.stream_id();
  p.d_target = d_target;
  p.t.assign(times.begin(), times.end());
  const auto d = static_cast<std::size_t>(d_target);
  p.x.assign(times.size() * d, 0.0);
  for (std::size_t k = 0; k < vars.size(); ++k) {
    const double sd = std::sqrt(vars[k]);
    for (std::size_t c = 0; c < d; ++c)
      p.x[(k + 1) * d + c] = p.x[k * d + c] + sd * stream.next_normal();
  }
  return p;
}

PathSeries simulate_mrw(const GridMeasure& clock, int d_target, rng::Stream& stream) {
  if (clock.grid.dim != 1)
    throw std::invalid_argument("simulate_mrw: clock must be one-dimensional");
  if (clock.grid.lo[0] != 0.0)
    throw std::invalid_argument("simulate_mrw: clock domain must start at 0");
  const std::size_t n = clock.grid.n[0];
  const double h = clock.grid.spacing(0);
  std::vector<double> times(n + 1);
  for (std::size_t k = 0; k <= n; ++k) times[k] = static_cast<double>(k) * h;
  return path_from_variances(clock.mass, times, d_target, stream,
                             PathSeries::Kind::mrw);
}

StructureSlope mrw_structure_slope(std::span<const PathSeries> ensemble, double q,
                                   std::span<const double> lags, double t_step) {
  if (ensemble.empty()) throw std::invalid_argument("structure slope: no paths");
  if (lags.empty()) throw std::invalid_argument("structure slope: no lags");
  if (!(t_step > 0.0)) throw std::invalid_argument("structure slope: bad t step");
  const PathSeries& p0 = ensemble.front();
  if (p0.knots() < 2) throw std::invalid_argument("structure slope: degenerate path");
  const double h = p0.t[1] - p0.t[0];
  const double T = p0.t.back();
  for (const double lag : lags)
    if (!(lag > 0.0) || lag >= T)
      throw std::invalid_argument("structure slope: lag outside (0, T)");

  const auto t_stride =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(t_step / h)));

  StructureSlope out;
  std::vector<double> lx(lags.size()), ly(lags.size());
  for (std::size_t li = 0; li < lags.size(); ++li) {
    const auto stride = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(lags[li] / h)));
    double sum = 0.0;
    std::size_t count = 0;
    for (const PathSeries& p : ensemble) {
      const auto d = static_cast<std::size_t>(p.d_target);
      const std::size_t K = p.knots() - 1;
      if (stride > K) continue;
      for (std::size_t i = 0; i + stride <= K; i += t_stride) {
        double s2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double dz = p.x[(i + stride) * d + c] - p.x[i * d + c];
          s2 += dz * dz;
        }
        const double norm = std::sqrt(s2);
        sum += q == 0.0 ? 1.0 : (q == 1.0 ? norm : std::pow(norm, q));
        ++count;
      }
    }
    if (count == 0) throw std::invalid_argument("structure slope: lag too large");
    const double mean = sum / static_cast<double>(count);
    out.mean_abs_q.push_back(mean);
    lx[li] = std::log(static_cast<double>(stride) * h);
    ly[li] = std::log(mean);
  }
  out.fit = linfit(lx, ly);
  return out;
}

double theoretical_mrw_lower_spectrum(double alpha, double gamma) {
  return mfa::theoretical_spectrum(2.0 * alpha, gamma, 1.0);
}

LowerDimension path_lower_dimension(const PathSeries& path, double t,
                                    std::span<const double> radii) {
  if (radii.empty()) throw std::invalid_argument("lower dimension: no radii");
  if (path.knots() < 2) throw std::invalid_argument("lower dimension: degenerate path");
  const double T = path.t.back();
  const double r_max = *std::max_element(radii.begin(), radii.end());
  for (const double r : radii)
    if (!(r > 0.0)) throw std::invalid_argument("lower dimension: radius must be > 0");
  if (t - r_max < 0.0 || t + r_max > T)
    throw std::invalid_argument("lower dimension: t too close to the endpoints");

  const auto d = static_cast<std::size_t>(path.d_target);
  std::vector<double> a(d), b(d);
  LowerDimension out;
  for (const double r : radii) {
    position_at(path, t + r, a.data());
    position_at(path, t - r, b.data());
    double s2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) s2 += (a[c] - b[c]) * (a[c] - b[c]);
    const double osc = std::sqrt(s2);
    out.per_radius.push_back(
        osc == 0.0 ? std::numeric_limits<double>::infinity()
                   : std::log(osc) / std::log(r));
  }
  out.estimate = *std::min_element(out.per_radius.begin(), out.per_radius.end());
  out.infinite = !std::isfinite(out.estimate);
  return out;
}

}  // namespace gmc::mrw
