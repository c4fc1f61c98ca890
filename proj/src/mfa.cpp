#include "gmc/mfa.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "gmc/simd.hpp"

namespace gmc::mfa {
namespace {

constexpr double kLn2 = 0.69314718055994530942;

// S_n(q) over an already-aggregated box vector; q = 1 is handled by the caller
double sum_boxes(const std::vector<double>& boxes, double q) {
  if (q == 0.0) {
    std::size_t c = 0;
    for (const double w : boxes)
      if (w > 0.0) ++c;
    return static_cast<double>(c);
  }
  std::vector<double> pos;
  pos.reserve(boxes.size());
  for (const double w : boxes)
    if (w > 0.0) pos.push_back(w);
  std::vector<double> pw(pos.size());
  simd::active_table().vpow(pos.data(), q, pw.data(), pos.size());
  return tree_sum(pw);
}

void check_subcritical(double gamma, double d) {
  if (!(d > 0.0)) throw std::invalid_argument("closed form: d must be positive");
  if (!(gamma * gamma < 2.0 * d))
    throw std::invalid_argument("closed form: need gamma^2 < 2d");
}

}  // namespace

double partition_sum(const GridMeasure& m, int n, double q) {
  if (n < 0) throw std::invalid_argument("partition_sum: level must be >= 0");
  if (n > m.level())
    throw std::invalid_argument("partition_sum: level exceeds grid resolution");
  if (q == 1.0) {
    // complete the dyadic contraction: the value is the same bit pattern at
    // every level, which pins the q = 1 point of the estimated spectrum at 0
    return box_masses(m, 0)[0];
  }
  return sum_boxes(box_masses(m, n), q);
}

PartitionTable partition_table(const GridMeasure& m, std::span<const int> levels,
                               std::span<const double> qs, std::uint64_t replica) {
  if (levels.empty() || qs.empty())
    throw std::invalid_argument("partition_table: empty level or q grid");
  PartitionTable t;
  t.levels.assign(levels.begin(), levels.end());
  t.qs.assign(qs.begin(), qs.end());
  t.replica = replica;
  t.S.resize(levels.size() * qs.size());
  t.box_counts.resize(levels.size());
  const double root = box_masses(m, 0)[0];
  for (std::size_t li = 0; li < levels.size(); ++li) {
    const std::vector<double> boxes = box_masses(m, levels[li]);
    std::size_t c = 0;
    for (const double w : boxes)
      if (w > 0.0) ++c;
    t.box_counts[li] = c;
    for (std::size_t qi = 0; qi < qs.size(); ++qi)
      t.S[li * qs.size() + qi] = qs[qi] == 1.0 ? root : sum_boxes(boxes, qs[qi]);
  }
  return t;
}

SpectrumCurve estimate_tau(std::span<const PartitionTable> tables) {
  if (tables.empty()) throw std::invalid_argument("estimate_tau: no tables");
  const PartitionTable& t0 = tables.front();
  if (t0.levels.size() < 3)
    throw std::invalid_argument("estimate_tau: need at least 3 levels");
  for (const PartitionTable& t : tables)
    if (t.levels != t0.levels || t.qs != t0.qs)
      throw std::invalid_argument("estimate_tau: tables disagree on grids");

  const std::size_t nl = t0.levels.size(), nq = t0.qs.size();
  const auto R = static_cast<double>(tables.size());

  SpectrumCurve c;
  c.kind = SpectrumCurve::Kind::tau_estimated;
  c.x = t0.qs;
  c.y.resize(nq);
  c.se.resize(nq);
  c.flag.assign(nq, 0);
  c.n_lo = *std::min_element(t0.levels.begin(), t0.levels.end());
  c.n_hi = *std::max_element(t0.levels.begin(), t0.levels.end());
  c.replicas = tables.size();

  // abscissa is -log(box side) = n*log 2, so tau is decreasing with tau(1) = 0
  std::vector<double> x(nl), y(nl);
  for (std::size_t li = 0; li < nl; ++li)
    x[li] = static_cast<double>(t0.levels[li]) * kLn2;
  for (std::size_t qi = 0; qi < nq; ++qi) {
    bool constant = true;
    for (std::size_t li = 0; li < nl; ++li) {
      double s = 0.0;
      for (const PartitionTable& t : tables) s += t.at(li, qi);
      y[li] = std::log(s / R);
      if (li > 0 && y[li] != y[0]) constant = false;
    }
    const SlopeFit fit = linfit(x, y);
    c.y[qi] = fit.slope;
    c.se[qi] = fit.se;
    if (constant || fit.degenerate) c.flag[qi] = 1;
  }
  return c;
}

SpectrumCurve legendre(const SpectrumCurve& tau, std::span<const double> alphas) {
  const std::size_t n = tau.x.size();
  if (n < 2 || tau.y.size() != n)
    throw std::invalid_argument("legendre: need a tau curve with >= 2 points");

  SpectrumCurve out;
  out.kind = SpectrumCurve::Kind::legendre_numeric;
  out.x.assign(alphas.begin(), alphas.end());
  out.y.resize(alphas.size());
  out.flag.assign(alphas.size(), 0);
  out.argmin_q.resize(alphas.size());
  out.gamma = tau.gamma;
  out.d = tau.d;

  const auto& kt = simd::active_table();
  for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
    std::size_t idx = 0;
    double v = kt.min_affine(alphas[ai], tau.x.data(), tau.y.data(), n, &idx);
    out.argmin_q[ai] = tau.x[idx];
    // clip to the "0, otherwise" branch: inf escaping through a window edge
    // (strictly below its interior neighbour) or a negative inf means the
    // level set is empty at this alpha
    const bool at_edge = (idx == 0 && v < alphas[ai] * tau.x[1] + tau.y[1]) ||
                         (idx == n - 1 && v < alphas[ai] * tau.x[n - 2] + tau.y[n - 2]);
    if (at_edge || v < 0.0) {
      out.flag[ai] = 1;
      v = 0.0;
    }
    out.y[ai] = v;
  }
  return out;
}

std::vector<double> legendre_dual(const SpectrumCurve& f, std::span<const double> qs) {
  std::vector<double> ax, negy;
  for (std::size_t i = 0; i < f.x.size(); ++i) {
    if (i < f.flag.size() && f.flag[i]) continue;
    ax.push_back(f.x[i]);
    negy.push_back(-f.y[i]);
  }
  if (ax.empty()) throw std::invalid_argument("legendre_dual: no unflagged points");
  const auto& kt = simd::active_table();
  std::vector<double> out(qs.size());
  for (std::size_t i = 0; i < qs.size(); ++i)
    out[i] = -kt.min_affine(qs[i], ax.data(), negy.data(), ax.size(), nullptr);
  return out;
}

double theoretical_xi(double q, double gamma, double d) {
  const double g2 = gamma * gamma;
  return (d + 0.5 * g2) * q - 0.5 * g2 * q * q;
}

double theoretical_tau(double q, double gamma, double d) {
  check_subcritical(gamma, d);
  if (gamma == 0.0) return d * (1.0 - q);
  const double g2 = gamma * gamma;
  const double qp = std::sqrt(2.0 * d) / std::fabs(gamma);
  const auto xi_prime = [&](double s) { return (d + 0.5 * g2) - g2 * s; };
  if (q >= qp) return -xi_prime(qp) * q;
  if (q <= -qp) return -xi_prime(-qp) * q;
  return d - theoretical_xi(q, gamma, d);
}

double theoretical_spectrum(double alpha, double gamma, double d) {
  check_subcritical(gamma, d);
  if (gamma == 0.0) return alpha == d ? d : 0.0;
  const double ag = std::fabs(gamma);
  const double root = std::sqrt(d), half = ag / std::sqrt(2.0);
  const double a_lo = (root - half) * (root - half);
  const double a_hi = (root + half) * (root + half);
  if (alpha < a_lo || alpha > a_hi) return 0.0;
  const double t = (d - alpha) / ag + 0.5 * ag;
  return d - 0.5 * t * t;
}

double structure_phi(double q, double gamma, double d) {
  return d - theoretical_xi(q, gamma, d);
}

double alpha_q(double q, double gamma, double d) {
  return d + (0.5 - q) * gamma * gamma;
}

LocalDimension local_dimension(const GridMeasure& m, const Point& x,
                               std::span<const double> radii) {
  if (radii.empty()) throw std::invalid_argument("local_dimension: no radii");
  const double cell = m.grid.spacing(0);
  for (const double r : radii)
    if (r < 4.0 * cell)
      throw std::invalid_argument("local_dimension: radius below 4 cell sides");

  const double r_max = *std::max_element(radii.begin(), radii.end());
  LocalDimension out;
  std::vector<double> lx, ly;
  for (const double r : radii) {
    const double mass = ball_mass(m, x, r).mass;
    if (mass <= 0.0) {
      if (r == r_max)
        throw std::runtime_error("local_dimension: zero mass at largest radius");
      ++out.dropped;
      continue;
    }
    const double lr = std::log(r), lm = std::log(mass);
    out.ratios.push_back(lm / lr);
    lx.push_back(lr);
    ly.push_back(lm);
  }
  out.fit = linfit(lx, ly);
  if (!out.ratios.empty()) {
    out.ratio_min = *std::min_element(out.ratios.begin(), out.ratios.end());
    out.ratio_max = *std::max_element(out.ratios.begin(), out.ratios.end());
  }
  return out;
}

SpectrumCurve coarse_spectrum(std::span<const GridMeasure> replicas, int n,
                              double bin_width) {
  if (replicas.empty()) throw std::invalid_argument("coarse_spectrum: no replicas");
  if (n < 6) throw std::invalid_argument("coarse_spectrum: need level n >= 6");
  if (!(bin_width > 0.0)) throw std::invalid_argument("coarse_spectrum: bad bin width");

  std::map<long long, std::size_t> counts;
  for (const GridMeasure& m : replicas) {
    const std::vector<double> boxes = box_masses(m, n);
    for (const double w : boxes) {
      if (!(w > 0.0)) continue;
      const double alpha = -std::log(w) / (static_cast<double>(n) * kLn2);
      counts[static_cast<long long>(std::floor(alpha / bin_width + 0.5))]++;
    }
  }
  SpectrumCurve c;
  c.kind = SpectrumCurve::Kind::spectrum_coarse;
  c.n_lo = c.n_hi = n;
  c.replicas = replicas.size();
  c.bin_width = bin_width;
  if (counts.empty()) return c;

  const auto R = static_cast<double>(replicas.size());
  const long long k_lo = counts.begin()->first, k_hi = counts.rbegin()->first;
  for (long long k = k_lo; k <= k_hi; ++k) {
    c.x.push_back(static_cast<double>(k) * bin_width);
    const auto it = counts.find(k);
    if (it == counts.end()) {  // absent bin: flagged, not zero
      c.y.push_back(std::numeric_limits<double>::quiet_NaN());
      c.flag.push_back(1);
    } else {
      const double mean_count = static_cast<double>(it->second) / R;
      c.y.push_back(std::log(mean_count) / (static_cast<double>(n) * kLn2));
      c.flag.push_back(0);
    }
  }
  return c;
}

}  // namespace gmc::mfa
