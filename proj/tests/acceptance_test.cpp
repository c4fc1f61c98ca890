// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. argv[1] = path to the gmctool binary (used by the
// reproducibility criterion). All tolerances are fixed in this file.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "gmc/field.hpp"
#include "gmc/grid.hpp"
#include "gmc/io.hpp"
#include "gmc/lbm.hpp"
#include "gmc/measure.hpp"
#include "gmc/mfa.hpp"
#include "gmc/mrw.hpp"
#include "gmc/rng.hpp"
#include "gmc/stats.hpp"

namespace fs = std::filesystem;
using gmc::rng::derive_stream;
using gmc::rng::Stream;

namespace {

int failures = 0;

void criterion(int n, const std::string& label,
               const std::function<bool(std::string&)>& body) {
  std::string detail;
  bool ok = false;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
    ok = false;
  }
  if (!ok) ++failures;
  std::printf("[%s] criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", n, label.c_str(),
              detail.empty() ? "" : " — ", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

std::vector<double> linspace(double lo, double hi, std::size_t k) {
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i)
    out[i] = lo + (hi - lo) * (static_cast<double>(i) / static_cast<double>(k - 1));
  out.back() = hi;
  return out;
}

std::vector<gmc::FieldGrid> field_batch(std::size_t n, std::size_t replicas,
                                        std::uint64_t seed, const std::string& tag) {
  const gmc::Grid grid = gmc::Grid::line(0.0, 1.0, n);
  gmc::KernelSpec spec;
  spec.dim = 1;
  spec.lo = grid.lo;
  spec.hi = grid.hi;
  spec.eps = grid.spacing(0);
  std::vector<Stream> streams;
  streams.reserve(replicas);
  for (std::size_t i = 0; i < replicas; ++i)
    streams.emplace_back(seed, derive_stream(tag, i));
  return gmc::sample_field_batch(spec, grid, streams);
}

std::vector<gmc::GridMeasure> measure_batch(const std::vector<gmc::FieldGrid>& fields,
                                            double gamma) {
  const gmc::GmcParams params(gamma, 1);
  std::vector<gmc::GridMeasure> ms;
  ms.reserve(fields.size());
  for (const gmc::FieldGrid& f : fields) ms.push_back(gmc::gmc_from_field(f, params));
  return ms;
}

std::vector<gmc::GridMeasure> gmc_ensemble(double gamma, std::size_t n,
                                           std::size_t replicas, std::uint64_t seed,
                                           const std::string& tag) {
  return measure_batch(field_batch(n, replicas, seed, tag), gamma);
}

double xi_prime(double q, double gamma, double d) {
  return (d + 0.5 * gamma * gamma) - gamma * gamma * q;
}

int run_tool(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

// ---- criteria ----

bool closed_form_suite(std::string& detail) {
  const std::pair<double, double> cases[] = {
      {1.0, 0.5}, {1.0, 1.0}, {1.0, 1.3}, {2.0, 1.0}, {2.0, 1.8}};
  double worst = 0.0;
  for (const auto& [d, gamma] : cases) {
    using gmc::mfa::theoretical_spectrum;
    using gmc::mfa::theoretical_tau;
    using gmc::mfa::theoretical_xi;

    if (std::fabs(theoretical_tau(1.0, gamma, d)) > 1e-12) {
      detail = "tau(1) != 0 at gamma=" + fmt(gamma) + ", d=" + fmt(d);
      return false;
    }
    if (std::fabs(theoretical_tau(0.0, gamma, d) - d) > 1e-12) {
      detail = "tau(0) != d at gamma=" + fmt(gamma) + ", d=" + fmt(d);
      return false;
    }

    // both branch formulas agree where the linear branches take over
    const double qp = std::sqrt(2.0 * d) / gamma;
    for (const double qc : {qp, -qp}) {
      const double interior = d - theoretical_xi(qc, gamma, d);
      const double linear = -xi_prime(qc, gamma, d) * qc;
      if (std::fabs(interior - linear) > 1e-12 ||
          std::fabs(theoretical_tau(qc, gamma, d) - interior) > 1e-12) {
        detail = "tau branch mismatch at q=" + fmt(qc) + ", gamma=" + fmt(gamma) +
                 ", d=" + fmt(d);
        return false;
      }
    }

    const std::vector<double> qs = linspace(-2.0 * qp, 2.0 * qp, 801);
    for (std::size_t i = 1; i + 1 < qs.size(); ++i) {
      const double d2 = theoretical_tau(qs[i + 1], gamma, d) -
                        2.0 * theoretical_tau(qs[i], gamma, d) +
                        theoretical_tau(qs[i - 1], gamma, d);
      if (d2 < -1e-12) {
        detail = "convexity violated at q=" + fmt(qs[i]) + ", gamma=" + fmt(gamma) +
                 ", d=" + fmt(d);
        return false;
      }
    }

    const double a1 = d - 0.5 * gamma * gamma;
    const double a0 = d + 0.5 * gamma * gamma;
    const double fix = std::fabs(theoretical_spectrum(a1, gamma, d) - a1);
    const double peak = std::fabs(theoretical_spectrum(a0, gamma, d) - d);
    if (fix > 1e-12) {
      detail = "spectrum fixed point off by " + fmt(fix) + " at gamma=" + fmt(gamma) +
               ", d=" + fmt(d);
      return false;
    }
    if (peak > 1e-9) {
      detail = "spectrum peak off by " + fmt(peak) + " at gamma=" + fmt(gamma) +
               ", d=" + fmt(d);
      return false;
    }
    const double ag = std::fabs(gamma), sd = std::sqrt(d);
    const double a_lo = (sd - ag / std::sqrt(2.0)) * (sd - ag / std::sqrt(2.0));
    const double a_hi = (sd + ag / std::sqrt(2.0)) * (sd + ag / std::sqrt(2.0));
    for (const double a : linspace(a_lo, a_hi, 501))
      worst = std::max(worst, theoretical_spectrum(a, gamma, d) - d);
  }
  if (worst > 1e-12) {
    detail = "spectrum exceeds d by " + fmt(worst);
    return false;
  }
  detail = "5 (d, gamma) pairs";
  return true;
}

bool legendre_duality(std::string& detail) {
  const double gamma = 1.0, d = 1.0;
  const double qp = std::sqrt(2.0 * d) / gamma;
  const double a_lo = (1.0 - gamma / std::sqrt(2.0)) * (1.0 - gamma / std::sqrt(2.0));
  const double a_hi = (1.0 + gamma / std::sqrt(2.0)) * (1.0 + gamma / std::sqrt(2.0));

  gmc::mfa::SpectrumCurve tau;
  tau.kind = gmc::mfa::SpectrumCurve::Kind::tau_theory;
  tau.gamma = gamma;
  tau.d = 1;
  tau.x = linspace(-4.0, 4.0, 100001);
  tau.y.resize(tau.x.size());
  for (std::size_t i = 0; i < tau.x.size(); ++i)
    tau.y[i] = gmc::mfa::theoretical_tau(tau.x[i], gamma, d);

  const std::vector<double> alphas = linspace(a_lo + 0.05, a_hi - 0.05, 500);
  const gmc::mfa::SpectrumCurve leg = gmc::mfa::legendre(tau, alphas);
  double worst = 0.0;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (leg.flag[i]) {
      detail = "flagged alpha=" + fmt(alphas[i]);
      return false;
    }
    worst = std::max(worst, std::fabs(leg.y[i] -
                                      gmc::mfa::theoretical_spectrum(alphas[i], gamma, d)));
  }
  if (worst > 1e-6) {
    detail = "forward transform max |diff| = " + fmt(worst);
    return false;
  }

  const gmc::mfa::SpectrumCurve wide =
      gmc::mfa::legendre(tau, linspace(a_lo + 1e-4, a_hi - 1e-4, 4001));
  const std::vector<double> dual_qs = linspace(-qp + 0.05, qp - 0.05, 401);
  const std::vector<double> dual = gmc::mfa::legendre_dual(wide, dual_qs);
  double worst2 = 0.0;
  for (std::size_t i = 0; i < dual_qs.size(); ++i)
    worst2 = std::max(worst2, std::fabs(dual[i] -
                                        gmc::mfa::theoretical_tau(dual_qs[i], gamma, d)));
  if (worst2 > 1e-5) {
    detail = "double transform max |diff| = " + fmt(worst2);
    return false;
  }
  detail = "forward " + fmt(worst) + ", double " + fmt(worst2);
  return true;
}

bool gmc_mass(std::string& detail) {
  const std::size_t replicas = 64;
  const auto ms = gmc_ensemble(0.8, std::size_t{1} << 14, replicas, 93, "accept-mass");
  std::vector<double> totals(replicas);
  for (std::size_t i = 0; i < replicas; ++i) totals[i] = ms[i].total_mass;
  const double m = gmc::mean(totals);
  const double se =
      std::sqrt(gmc::sample_variance(totals) / static_cast<double>(replicas));
  if (std::fabs(m - 1.0) > 3.0 * se) {
    detail = "mean mass " + fmt(m) + " outside 3 s.e. (" + fmt(se) + ") of 1";
    return false;
  }

  const auto m0 = gmc_ensemble(0.0, 1024, 2, 93, "accept-mass0");
  const gmc::GridMeasure leb = gmc::lebesgue_measure(m0[0].grid);
  for (const gmc::GridMeasure& gm : m0)
    for (std::size_t c = 0; c < gm.mass.size(); ++c)
      if (gm.mass[c] != leb.mass[c]) {
        detail = "gamma=0 mass differs from Lebesgue at cell " + std::to_string(c);
        return false;
      }
  detail = "mean mass " + fmt(m) + " (s.e. " + fmt(se) + "); gamma=0 exact";
  return true;
}

bool moment_scaling(std::string& detail) {
  const double gamma = 0.7;
  const auto ms = gmc_ensemble(gamma, 4096, 200, 94, "accept-moment");
  const std::vector<double> radii = {0.125, 0.0625, 0.03125, 0.015625, 0.0078125};
  // average ball masses over many interior centers: the spatial average tames
  // the heavy-tailed per-ball fluctuation, and the per-replica mass scale that
  // remains is shared across radii, so it cancels in the fitted slope
  std::vector<gmc::Point> centers;
  for (int i = 0; i < 65; ++i)
    centers.push_back({0.15 + 0.7 * static_cast<double>(i) / 64.0, 0.0});
  double worst = 0.0;
  for (const double q : {0.5, 1.0, 1.5}) {
    const gmc::MomentScalingResult r =
        gmc::moment_scaling_slope(ms, radii, q, centers);
    const double err = std::fabs(r.fit.slope - gmc::mfa::theoretical_xi(q, gamma, 1.0));
    const double tol = q == 1.0 ? 0.05 : 0.15;
    if (err > tol) {
      detail = "q=" + fmt(q) + " slope error " + fmt(err) + " > " + fmt(tol);
      return false;
    }
    worst = std::max(worst, err);
  }
  detail = "worst |slope - xi(q)| = " + fmt(worst);
  return true;
}

bool tau_estimation(std::string& detail) {
  const double gamma = 0.7;
  const std::size_t replicas = 32;
  const auto ms = gmc_ensemble(gamma, std::size_t{1} << 16, replicas, 333, "accept-tau");
  std::vector<int> levels;
  for (int l = 8; l <= 14; ++l) levels.push_back(l);
  const std::vector<double> qs = {-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0};
  std::vector<gmc::mfa::PartitionTable> tables(replicas);
  for (std::size_t i = 0; i < replicas; ++i)
    tables[i] = gmc::mfa::partition_table(ms[i], levels, qs, i);
  const gmc::mfa::SpectrumCurve tau = gmc::mfa::estimate_tau(tables);
  double worst = 0.0;
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    const double err =
        std::fabs(tau.y[qi] - gmc::mfa::theoretical_tau(qs[qi], gamma, 1.0));
    const double tol = qs[qi] < 0.0 ? 0.25 : 0.2;
    if (err > tol) {
      detail = "q=" + fmt(qs[qi]) + " tau error " + fmt(err) + " > " + fmt(tol);
      return false;
    }
    worst = std::max(worst, err);
  }
  detail = "worst |tau_hat - tau| = " + fmt(worst);
  return true;
}

bool local_dimension_sampled(std::string& detail) {
  const std::size_t replicas = 20, per_replica = 10;
  const std::vector<double> radii = {0.0625,      0.03125,      0.015625,
                                     0.0078125,   0.00390625,   0.001953125};
  const auto fields = field_batch(8192, replicas, 96, "accept-local");

  std::string note;
  for (const double gamma : {0.8, 1.0}) {
    const auto ms = measure_batch(fields, gamma);
    std::vector<double> slopes;
    slopes.reserve(replicas * per_replica);
    for (std::size_t i = 0; i < replicas; ++i) {
      Stream pick(96, derive_stream("accept-local/pick-g" + fmt(gamma), i));
      for (std::size_t j = 0; j < per_replica; ++j) {
        const gmc::Point x = gmc::sample_point(ms[i], pick);
        slopes.push_back(gmc::mfa::local_dimension(ms[i], x, radii).fit.slope);
      }
    }
    const double target = 1.0 - 0.5 * gamma * gamma;
    const double med = gmc::median(slopes);
    if (std::fabs(med - target) > 0.1) {
      detail = "gamma=" + fmt(gamma) + " median " + fmt(med) + " vs alpha1 " +
               fmt(target);
      return false;
    }
    note += "g" + fmt(gamma) + ": " + fmt(med) + " ";
  }

  // q = -1 tilt: sample from the gamma' = -0.8 measure built on the same
  // fields, evaluate the gamma = 0.8 measure's local dimension there
  const auto pos = measure_batch(fields, 0.8);
  const auto neg = measure_batch(fields, -0.8);
  std::vector<double> slopes;
  slopes.reserve(replicas * per_replica);
  for (std::size_t i = 0; i < replicas; ++i) {
    Stream pick(96, derive_stream("accept-local/pick-neg", i));
    for (std::size_t j = 0; j < per_replica; ++j) {
      const gmc::Point x = gmc::sample_point(neg[i], pick);
      slopes.push_back(gmc::mfa::local_dimension(pos[i], x, radii).fit.slope);
    }
  }
  const double med = gmc::median(slopes);
  if (std::fabs(med - 1.96) > 0.15) {
    detail = "tilted median " + fmt(med) + " vs alpha_{-1} 1.96";
    return false;
  }
  detail = note + "tilted: " + fmt(med);
  return true;
}

bool thick_points(std::string& detail) {
  const int depth = 14;
  const std::size_t replicas = 16;
  const gmc::Grid grid = gmc::Grid::line(0.0, 1.0, std::size_t{1} << depth);
  gmc::KernelSpec spec;
  spec.dim = 1;
  spec.lo = grid.lo;
  spec.hi = grid.hi;
  spec.eps = std::ldexp(1.0, -depth);
  std::vector<Stream> streams;
  for (std::size_t i = 0; i < replicas; ++i)
    streams.emplace_back(97, derive_stream("accept-thick", i));
  const auto fields = gmc::sample_layered_batch(spec, grid, depth, streams);
  // pool exceedance counts across replicas: per-replica counts are sparse
  // and clustered at this depth, so a single fit on the averaged counts is
  // the stable dimension estimate
  const int n_lo = 6;
  std::vector<double> pooled(static_cast<std::size_t>(depth - n_lo + 1), 0.0);
  for (const gmc::LayeredField& f : fields) {
    const auto c = gmc::thick_point_box_count(f, 1.0, n_lo, depth);
    for (std::size_t k = 0; k < c.counts.size(); ++k)
      pooled[k] += static_cast<double>(c.counts[k]);
  }
  std::vector<double> x, y;
  for (std::size_t k = 0; k < pooled.size(); ++k)
    if (pooled[k] > 0.0) {
      x.push_back(static_cast<double>(n_lo + static_cast<int>(k)) * std::log(2.0));
      y.push_back(std::log(pooled[k] / static_cast<double>(replicas)));
    }
  const gmc::SlopeFit fit = gmc::linfit(x, y);
  if (fit.degenerate || std::fabs(fit.slope - 0.5) > 0.15) {
    detail = "pooled box-count dim " + fmt(fit.slope) + " vs 0.5";
    return false;
  }
  detail = "pooled box-count dim " + fmt(fit.slope);
  return true;
}

bool mrw_checks(std::string& detail) {
  // closed-form identity between the walk's lower spectrum and the measure
  // spectrum at doubled exponent
  for (const double a : linspace(0.05, 1.55, 1000))
    if (gmc::mrw::theoretical_mrw_lower_spectrum(a, 0.6) !=
        gmc::mfa::theoretical_spectrum(2.0 * a, 0.6, 1.0)) {
      detail = "lower-spectrum identity broken at alpha=" + fmt(a);
      return false;
    }

  // gamma = 0: the time change collapses and the walk is a plain Brownian
  // path drawn from the same stream, bit for bit
  {
    const auto m0 = gmc_ensemble(0.0, 1024, 1, 98, "accept-mrw0");
    Stream sa(98, derive_stream("accept-mrw0/path", 0));
    Stream sb(98, derive_stream("accept-mrw0/path", 0));
    const gmc::mrw::PathSeries z = gmc::mrw::simulate_mrw(m0[0], 1, sa);
    const double h = m0[0].grid.spacing(0);
    std::vector<double> times(m0[0].mass.size() + 1);
    for (std::size_t k = 0; k < times.size(); ++k)
      times[k] = static_cast<double>(k) * h;
    const gmc::mrw::PathSeries plain = gmc::mrw::path_from_variances(
        m0[0].mass, times, 1, sb, gmc::mrw::PathSeries::Kind::brownian);
    if (z.x.size() != plain.x.size()) {
      detail = "gamma=0 reduction: size mismatch";
      return false;
    }
    for (std::size_t i = 0; i < z.x.size(); ++i)
      if (z.x[i] != plain.x[i] || z.t[i] != plain.t[i]) {
        detail = "gamma=0 reduction differs at knot " + std::to_string(i);
        return false;
      }
  }

  const double gamma = 0.6;
  const std::size_t replicas = 256;
  const auto ms = gmc_ensemble(gamma, 8192, replicas, 98, "accept-mrw/field");
  std::vector<gmc::mrw::PathSeries> paths(replicas);
  for (std::size_t i = 0; i < replicas; ++i) {
    Stream s(98, derive_stream("accept-mrw/path", i));
    paths[i] = gmc::mrw::simulate_mrw(ms[i], 1, s);
  }
  // lags stay a factor 32 above the grid regularization scale: mass moments
  // above order one are depressed near the cutoff, tilting the fit upward
  const std::vector<double> lags = {0.00390625, 0.0078125, 0.015625, 0.03125};
  double worst = 0.0;
  for (const double q : {2.0, 3.0}) {
    const gmc::mrw::StructureSlope s =
        gmc::mrw::mrw_structure_slope(paths, q, lags, 0.00390625);
    const double err =
        std::fabs(s.fit.slope - gmc::mfa::theoretical_xi(0.5 * q, gamma, 1.0));
    if (err > 0.15) {
      detail = "q=" + fmt(q) + " structure slope error " + fmt(err);
      return false;
    }
    worst = std::max(worst, err);
  }
  detail = "worst structure-slope error " + fmt(worst) + "; identities exact";
  return true;
}

bool lbm_checks(std::string& detail) {
  // gamma = 0: the clock is the path's own time, bit for bit
  {
    Stream st(99, derive_stream("accept-lbm0", 0));
    const gmc::lbm::ExitPath p =
        gmc::lbm::simulate_brownian_ball_exit(0.5, 2, std::ldexp(1.0, -10), st);
    gmc::FieldGrid f;
    f.grid = gmc::Grid::square(-1.0, 1.0, 2);
    f.values.assign(4, 0.0);
    f.diag_var.assign(4, 1.0);
    const gmc::lbm::ClockProcess c = gmc::lbm::clock_from_path(p.path, p.exit_index, f, 0.0);
    for (std::size_t k = 0; k <= p.exit_index; ++k)
      if (c.F[k] != p.path.t[k]) {
        detail = "gamma=0 clock differs at knot " + std::to_string(k);
        return false;
      }
  }

  // chain identity on the support grid
  {
    const double gamma = 1.0;
    const double a_lo = 1.0 / (2.0 * (1.0 + 0.5 * gamma) * (1.0 + 0.5 * gamma));
    const double a_hi = 1.0 / (2.0 * (1.0 - 0.5 * gamma) * (1.0 - 0.5 * gamma));
    for (std::size_t i = 1; i < 1000; ++i) {
      const double a = a_lo + (a_hi - a_lo) * static_cast<double>(i) / 1000.0;
      const double t = (2.0 * a - 1.0) / (2.0 * a * gamma) + 0.25 * gamma;
      const double direct = 2.0 * a - 2.0 * a * t * t;
      if (std::fabs(gmc::lbm::theoretical_lbm_lower_spectrum(a, gamma) - direct) >
          1e-12) {
        detail = "spectrum chain identity broken at alpha=" + fmt(a);
        return false;
      }
    }
  }

  gmc::lbm::ExitExperimentConfig cfg;
  cfg.gamma = 1.0;
  cfg.radii = {0.25, 0.125, 0.0625, 0.03125};
  cfg.h = std::ldexp(1.0, -17);
  cfg.replicas = 300;
  // several walks share each sampled field: the exit moments are conditional
  // averages given the field, so extra walks per field cut the path noise in
  // the moment estimates without touching their expectation
  cfg.paths_per_replica = 8;
  cfg.seed = 1001;
  cfg.grid_per_side = 64;
  const gmc::lbm::ExitSampler sampler(cfg);
  std::vector<gmc::lbm::ExitReplica> reps;
  reps.reserve(cfg.replicas * cfg.paths_per_replica);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < cfg.replicas; ++i) {
    const std::vector<gmc::lbm::ExitReplica> group = sampler.run_replica(i);
    for (const auto& r : group) {
      if (r.ok) {
        ++ok;
        if (!r.increasing) {
          detail = "clock not strictly increasing in replica " + std::to_string(i);
          return false;
        }
      }
      reps.push_back(r);
    }
  }
  if (ok < reps.size() / 2) {
    detail = "too many step-capped walks: " + std::to_string(reps.size() - ok);
    return false;
  }
  double worst = 0.0;
  for (const double q : {0.5, 1.0, 1.5}) {
    const gmc::lbm::ExitMomentResult r = gmc::lbm::exit_moment_slope(reps, cfg.radii, q);
    const double err = std::fabs(r.fit.slope - gmc::lbm::theoretical_xi_mu(q, cfg.gamma));
    const double tol = q == 1.0 ? 0.1 : 0.2;
    if (err > tol) {
      detail = "q=" + fmt(q) + " exit slope error " + fmt(err) + " > " + fmt(tol);
      return false;
    }
    worst = std::max(worst, err);
  }

  gmc::lbm::RefineConfig rc;  // gamma 1, scales 2^-5..2^-8, defaults pinned
  rc.seed = 99;
  const gmc::lbm::RefineResult rr = gmc::lbm::clock_refinement(rc);
  for (std::size_t g = 1; g < rr.mean_abs_diff.size(); ++g)
    if (!(rr.mean_abs_diff[g] < rr.mean_abs_diff[g - 1])) {
      detail = "refinement differences not decreasing at gap " + std::to_string(g);
      return false;
    }
  detail = "worst exit-slope error " + fmt(worst) + ", " +
           std::to_string(reps.size() - ok) + " capped";
  return true;
}

bool reproducibility(const std::string& tool, std::string& detail) {
  if (tool.empty()) {
    detail = "no gmctool path given (argv[1])";
    return false;
  }
  const fs::path base = fs::temp_directory_path() / "gmc_acceptance";
  fs::remove_all(base);
  fs::create_directories(base);
  const fs::path cfg = base / "mass.cfg";
  gmc::io::write_text(cfg.string(),
                      "kind = gmc-mass\nn = 512\nreplicas = 16\ngamma = 0.8\nseed = 5\n");
  const std::string a = (base / "a").string(), b = (base / "b").string(),
                    c = (base / "c").string();
  const std::string q = "\"";
  if (run_tool(q + tool + q + " gmc-mass --config " + q + cfg.string() + q + " --out " +
               q + a + q + " --threads 1") != 0) {
    detail = "first run failed";
    return false;
  }
  if (run_tool(q + tool + q + " replay " + q + a + "/manifest.json" + q + " --out " + q +
               b + q + " --threads 4") != 0) {
    detail = "replay failed";
    return false;
  }
  if (run_tool(q + tool + q + " gmc-mass --config " + q + cfg.string() + q + " --out " +
               q + c + q + " --threads 4") != 0) {
    detail = "threaded rerun failed";
    return false;
  }
  for (const char* name : {"masses.csv", "summary.csv"}) {
    const std::string ra = gmc::io::read_text(a + "/" + name);
    if (ra != gmc::io::read_text(b + "/" + name)) {
      detail = std::string(name) + " differs under replay";
      return false;
    }
    if (ra != gmc::io::read_text(c + "/" + name)) {
      detail = std::string(name) + " differs across thread counts";
      return false;
    }
  }
  detail = "replay and 4-thread rerun byte-identical";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string tool = argc > 1 ? argv[1] : "";

  criterion(1, "closed-form tau/spectrum identities", closed_form_suite);
  criterion(2, "Legendre duality and double transform", legendre_duality);
  criterion(3, "unit mean GMC mass; gamma=0 equals Lebesgue", gmc_mass);
  criterion(4, "ball-moment scaling slopes vs xi(q)", moment_scaling);
  criterion(5, "dyadic partition tau estimates", tau_estimation);
  criterion(6, "local dimension at size-biased points", local_dimension_sampled);
  criterion(7, "thick-point box-count dimension", thick_points);
  criterion(8, "MRW reduction, structure slopes, spectrum identity", mrw_checks);
  criterion(9, "LBM clocks, exit-moment slopes, refinement", lbm_checks);
  criterion(10, "byte-identical replay across thread counts",
            [&tool](std::string& d) { return reproducibility(tool, d); });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures;
}
