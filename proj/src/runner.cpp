#include "gmc/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gmc/field.hpp"
#include "gmc/io.hpp"
#include "gmc/lbm.hpp"
#include "gmc/measure.hpp"
#include "gmc/mfa.hpp"
#include "gmc/mrw.hpp"
#include "gmc/rng.hpp"
#include "gmc/stats.hpp"

namespace gmc::run {
namespace {

using njson = nlohmann::ordered_json;

constexpr double kLn2 = 0.69314718055994530942;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// ---- schema ----

struct KeyDef {
  const char* name;
  const char* def;
};
using Schema = std::vector<KeyDef>;

const std::map<std::string, Schema>& schemas() {
  static const std::map<std::string, Schema> s = {
      {"field-check",
       {{"seed", "0"},
        {"d", "1"},
        {"n", "128"},
        {"eps", "0"},
        {"g_const", "2"},
        {"replicas", "32"}}},
      {"gmc-mass",
       {{"seed", "0"},
        {"d", "1"},
        {"gamma", "0.8"},
        {"n", "4096"},
        {"eps", "0"},
        {"g_const", "0"},
        {"replicas", "32"}}},
      {"moment-scaling",
       {{"seed", "0"},
        {"gamma", "0.7"},
        {"n", "16384"},
        {"eps", "0"},
        {"g_const", "0"},
        {"replicas", "50"},
        {"radii", "0.125,0.0625,0.03125,0.015625,0.0078125"},
        {"qs", "0.5,1,1.5"},
        {"centers",
         "0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5,0.55,0.6,0.65,0.7,0.75,0.8,0.85"},
        {"tolerance", "0.15"},
        {"tolerance_q1", "0.05"}}},
      {"tau-estimate",
       {{"seed", "0"},
        {"gamma", "0.7"},
        {"n", "16384"},
        {"eps", "0"},
        {"g_const", "0"},
        {"replicas", "16"},
        {"n_lo", "6"},
        {"n_hi", "11"},
        {"qs", "-1,-0.5,0,0.5,1,1.5,2"},
        {"tolerance", "0.2"},
        {"tolerance_neg", "0.25"}}},
      {"spectrum",
       {{"seed", "0"},
        {"gamma", "1"},
        {"d", "1"},
        {"alpha_margin", "0.05"},
        {"alpha_points", "201"},
        {"q_lo", "-4"},
        {"q_hi", "4"},
        {"q_points", "100001"},
        {"tolerance", "1e-6"},
        {"tolerance_dual", "1e-5"}}},
      {"thick-points",
       {{"seed", "0"},
        {"gamma", "1"},
        {"depth", "12"},
        {"replicas", "8"},
        {"n_lo", "6"},
        {"n_hi", "0"},
        {"tolerance", "0.15"}}},
      {"mrw",
       {{"seed", "0"},
        {"gamma", "0.6"},
        {"n", "8192"},
        {"d_target", "1"},
        {"eps", "0"},
        {"g_const", "0"},
        {"replicas", "32"},
        {"qs", "2,3"},
        {"lags", "0.00390625,0.0078125,0.015625,0.03125"},
        {"t_step", "0.00390625"},
        {"tolerance", "0.15"}}},
      {"lbm-exit",
       {{"seed", "0"},
        {"gamma", "1"},
        {"radii", "0.25,0.125,0.0625,0.03125"},
        {"h", "7.62939453125e-06"},
        {"replicas", "100"},
        {"paths_per_replica", "1"},
        {"grid_per_side", "64"},
        {"domain_half", "1"},
        {"g_const", "2"},
        {"qs", "0.5,1,1.5"},
        {"tolerance", "0.2"},
        {"tolerance_q1", "0.1"}}},
      {"lbm-refine",
       {{"seed", "0"},
        {"gamma", "1"},
        {"m_lo", "5"},
        {"m_hi", "8"},
        {"h", "1e-5"},
        {"ball_radius", "0.2"},
        {"domain_half", "0.25"},
        {"replicas", "8"}}},
  };
  return s;
}

// ---- typed key access (keys always present after resolve_config) ----

[[noreturn]] void bad_key(const std::string& key, const std::string& value) {
  throw std::invalid_argument("config key '" + key + "': invalid value '" + value + "'");
}

double f64_key(const ResolvedConfig& cfg, const std::string& key) {
  const std::string& v = cfg.keys.at(key);
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(x)) bad_key(key, v);
  return x;
}

std::uint64_t u64_key(const ResolvedConfig& cfg, const std::string& key) {
  const std::string& v = cfg.keys.at(key);
  if (v.empty() || v[0] == '-') bad_key(key, v);
  char* end = nullptr;
  const std::uint64_t x = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size()) bad_key(key, v);
  return x;
}

long long int_key(const ResolvedConfig& cfg, const std::string& key, long long lo,
                  long long hi) {
  const std::string& v = cfg.keys.at(key);
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size()) bad_key(key, v);
  if (x < lo || x > hi)
    throw std::invalid_argument("config key '" + key + "': value " + v +
                                " outside [" + std::to_string(lo) + ", " +
                                std::to_string(hi) + "]");
  return x;
}

std::size_t size_key(const ResolvedConfig& cfg, const std::string& key,
                     std::size_t lo = 1, std::size_t hi = 1u << 28) {
  return static_cast<std::size_t>(
      int_key(cfg, key, static_cast<long long>(lo), static_cast<long long>(hi)));
}

std::vector<double> list_key(const ResolvedConfig& cfg, const std::string& key) {
  const std::string& v = cfg.keys.at(key);
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const std::size_t comma = std::min(v.find(',', start), v.size());
    const std::string item = trim(v.substr(start, comma - start));
    if (item.empty()) bad_key(key, v);
    char* end = nullptr;
    const double x = std::strtod(item.c_str(), &end);
    if (end != item.c_str() + item.size() || !std::isfinite(x)) bad_key(key, v);
    out.push_back(x);
    start = comma + 1;
  }
  if (out.empty()) bad_key(key, v);
  return out;
}

std::vector<double> linspace(double lo, double hi, std::size_t k) {
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i)
    out[i] = lo + (hi - lo) * (static_cast<double>(i) / static_cast<double>(k - 1));
  out.back() = hi;
  return out;
}

// ---- experiment outputs ----

struct Outputs {
  io::Csv summary{{"name", "estimate", "target", "tolerance", "pass"}, {}};
  std::vector<std::pair<std::string, io::Csv>> files;
  njson diag = njson::object();
};

void check_row(io::Csv& s, const std::string& name, double est, double target,
               double tol) {
  const bool ok = std::fabs(est - target) <= tol;
  s.rows.push_back({name, io::fmt17(est), io::fmt17(target), io::fmt17(tol),
                    ok ? "pass" : "fail"});
}

void info_row(io::Csv& s, const std::string& name, double est) {
  s.rows.push_back({name, io::fmt17(est), "", "", "info"});
}

std::vector<rng::Stream> replica_streams(std::uint64_t seed, const std::string& tag,
                                         std::size_t n, njson* diag) {
  std::vector<rng::Stream> v;
  v.reserve(n);
  njson ids = njson::array();
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t id = rng::derive_stream(tag, i);
    v.emplace_back(seed, id);
    ids.push_back(std::to_string(id));
  }
  if (diag) (*diag)["replica_streams"][tag] = std::move(ids);
  return v;
}

void for_replicas(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  parallel_for(n, threads, [&fn](std::size_t i) {
    try {
      fn(i);
    } catch (const std::exception& e) {
      throw std::runtime_error("replica " + std::to_string(i) + ": " + e.what());
    }
  });
}

double resolve_eps(const ResolvedConfig& cfg, const Grid& grid) {
  const double eps = f64_key(cfg, "eps");
  if (eps < 0.0) throw std::invalid_argument("config key 'eps': must be >= 0");
  return eps == 0.0 ? grid.spacing(0) : eps;
}

KernelSpec grid_kernel_spec(const ResolvedConfig& cfg, const Grid& grid, int d) {
  KernelSpec spec;
  spec.dim = d;
  spec.lo = grid.lo;
  spec.hi = grid.hi;
  spec.eps = resolve_eps(cfg, grid);
  const double gc = f64_key(cfg, "g_const");
  spec.g = gc == 0.0 ? GTerm::zero : GTerm::constant;
  spec.g_const = gc;
  return spec;
}

/// Shared pipeline: sample one field per replica and exponentiate into GMC
/// measures. Heavy sampling runs in one lockstep batch; the per-replica
/// measure build is farmed to the pool (slot-indexed, thread-count neutral).
std::vector<GridMeasure> gmc_ensemble(const ResolvedConfig& cfg, const Grid& grid,
                                      const KernelSpec& spec, const GmcParams& params,
                                      std::size_t replicas, int threads,
                                      const std::string& tag, Outputs& out) {
  auto streams = replica_streams(cfg.seed, tag, replicas, &out.diag);
  BuildDiagnostics diag;
  const std::vector<FieldGrid> fields = sample_field_batch(spec, grid, streams, &diag);
  std::vector<GridMeasure> ms(replicas);
  for_replicas(replicas, threads,
               [&](std::size_t i) { ms[i] = gmc_from_field(fields[i], params); });
  out.diag["jitter"] = diag.jitter;
  out.diag["eps_below_spacing"] = diag.eps_below_spacing;
  return ms;
}

// ---- field-check ----

Outputs run_field_check(const ResolvedConfig& cfg, int threads) {
  (void)threads;
  const int d = static_cast<int>(int_key(cfg, "d", 1, 2));
  const std::size_t n = size_key(cfg, "n", 2, 1u << 14);
  const std::size_t replicas = size_key(cfg, "replicas", 2, 1u << 20);
  const Grid grid = d == 1 ? Grid::line(0.0, 1.0, n) : Grid::square(-1.0, 1.0, n);
  const KernelSpec spec = grid_kernel_spec(cfg, grid, d);

  Outputs out;
  auto streams = replica_streams(cfg.seed, cfg.kind, replicas, &out.diag);
  BuildDiagnostics diag;
  const std::vector<FieldGrid> fields = sample_field_batch(spec, grid, streams, &diag);

  const std::size_t size = fields[0].grid.size();
  std::set<std::size_t> probes{0, size / 4, size / 2, (3 * size) / 4, size - 1};
  io::Csv probe_csv{{"cell", "diag_var", "sample_mean", "sample_var"}, {}};
  double center_mean = 0.0, center_var = 0.0, center_sig2 = 0.0;
  for (const std::size_t cell : probes) {
    std::vector<double> at(replicas);
    for (std::size_t i = 0; i < replicas; ++i) at[i] = fields[i].values[cell];
    const double m = mean(at), v = sample_variance(at);
    probe_csv.rows.push_back({std::to_string(cell), io::fmt17(fields[0].diag_var[cell]),
                              io::fmt17(m), io::fmt17(v)});
    if (cell == size / 2) {
      center_mean = m;
      center_var = v;
      center_sig2 = fields[0].diag_var[cell];
    }
  }
  const double r = static_cast<double>(replicas);
  check_row(out.summary, "field_mean_at_center", center_mean, 0.0,
            4.0 * std::sqrt(center_sig2 / r));
  check_row(out.summary, "field_var_at_center", center_var, center_sig2,
            4.0 * center_sig2 * std::sqrt(2.0 / (r - 1.0)));
  info_row(out.summary, "jitter", diag.jitter);
  info_row(out.summary, "eps_below_spacing", diag.eps_below_spacing ? 1.0 : 0.0);
  out.files.emplace_back("field_check.csv", std::move(probe_csv));
  out.diag["jitter"] = diag.jitter;
  out.diag["eps_below_spacing"] = diag.eps_below_spacing;
  return out;
}

// ---- gmc-mass ----

Outputs run_gmc_mass(const ResolvedConfig& cfg, int threads) {
  const int d = static_cast<int>(int_key(cfg, "d", 1, 2));
  const double gamma = f64_key(cfg, "gamma");
  const GmcParams params(gamma, d);  // schema rejection before any file I/O
  const std::size_t n = size_key(cfg, "n", 2, 1u << 20);
  const std::size_t replicas = size_key(cfg, "replicas", 2, 1u << 20);
  const Grid grid = d == 1 ? Grid::line(0.0, 1.0, n) : Grid::square(0.0, 1.0, n);
  const KernelSpec spec = grid_kernel_spec(cfg, grid, d);

  Outputs out;
  const std::vector<GridMeasure> ms =
      gmc_ensemble(cfg, grid, spec, params, replicas, threads, cfg.kind, out);

  std::vector<double> totals(replicas);
  io::Csv masses{{"replica", "total_mass", "underflow_clamps"}, {}};
  for (std::size_t i = 0; i < replicas; ++i) {
    totals[i] = ms[i].total_mass;
    masses.rows.push_back({std::to_string(i), io::fmt17(totals[i]),
                           std::to_string(ms[i].underflow_clamps)});
  }
  const double m = mean(totals);
  const double se = std::sqrt(sample_variance(totals) / static_cast<double>(replicas));
  check_row(out.summary, "mean_total_mass", m, 1.0, 3.0 * se);
  info_row(out.summary, "se_total_mass", se);
  if (gamma == 0.0) {
    double worst = 0.0;
    const double vol = grid.cell_volume();
    for (const GridMeasure& gm : ms)
      for (const double w : gm.mass) worst = std::max(worst, std::fabs(w - vol));
    check_row(out.summary, "max_abs_diff_from_lebesgue", worst, 0.0, 0.0);
  }
  out.files.emplace_back("masses.csv", std::move(masses));
  return out;
}

// ---- moment-scaling ----

Outputs run_moment_scaling(const ResolvedConfig& cfg, int threads) {
  const double gamma = f64_key(cfg, "gamma");
  const GmcParams params(gamma, 1);
  const std::size_t n = size_key(cfg, "n", 2, 1u << 20);
  const std::size_t replicas = size_key(cfg, "replicas", 2, 1u << 20);
  const std::vector<double> radii = list_key(cfg, "radii");
  const std::vector<double> qs = list_key(cfg, "qs");
  const std::vector<double> centers = list_key(cfg, "centers");
  const double tol = f64_key(cfg, "tolerance");
  const double tol_q1 = f64_key(cfg, "tolerance_q1");
  for (const double c : centers)
    if (!(c > 0.0 && c < 1.0))
      throw std::invalid_argument("config key 'centers': centers must lie in (0,1)");

  const Grid grid = Grid::line(0.0, 1.0, n);
  const KernelSpec spec = grid_kernel_spec(cfg, grid, 1);
  Outputs out;
  const std::vector<GridMeasure> ms =
      gmc_ensemble(cfg, grid, spec, params, replicas, threads, cfg.kind, out);

  std::vector<Point> pts;
  pts.reserve(centers.size());
  for (const double c : centers) pts.push_back(Point{c, 0.0});

  io::Csv slopes{{"q", "slope", "se", "target", "abs_err", "excluded"}, {}};
  io::Csv moments{{"q", "radius", "mean_pow_mass"}, {}};
  for (const double q : qs) {
    const MomentScalingResult r = moment_scaling_slope(ms, radii, q, pts);
    const double target = mfa::theoretical_xi(q, gamma, 1.0);
    check_row(out.summary, "slope_q=" + io::fmt17(q), r.fit.slope, target,
              q == 1.0 ? tol_q1 : tol);
    slopes.rows.push_back({io::fmt17(q), io::fmt17(r.fit.slope), io::fmt17(r.fit.se),
                           io::fmt17(target), io::fmt17(std::fabs(r.fit.slope - target)),
                           std::to_string(r.excluded)});
    for (std::size_t k = 0; k < radii.size(); ++k)
      moments.rows.push_back(
          {io::fmt17(q), io::fmt17(radii[k]), io::fmt17(r.mean_pow_mass[k])});
  }
  out.files.emplace_back("slopes.csv", std::move(slopes));
  out.files.emplace_back("moments.csv", std::move(moments));
  return out;
}

// ---- tau-estimate ----

Outputs run_tau_estimate(const ResolvedConfig& cfg, int threads) {
  const double gamma = f64_key(cfg, "gamma");
  const GmcParams params(gamma, 1);
  const std::size_t n = size_key(cfg, "n", 4, 1u << 20);
  const std::size_t replicas = size_key(cfg, "replicas", 2, 1u << 20);
  const int n_lo = static_cast<int>(int_key(cfg, "n_lo", 1, 30));
  const int n_hi = static_cast<int>(int_key(cfg, "n_hi", 1, 30));
  const std::vector<double> qs = list_key(cfg, "qs");
  const double tol = f64_key(cfg, "tolerance");
  const double tol_neg = f64_key(cfg, "tolerance_neg");
  if ((n & (n - 1)) != 0)
    throw std::invalid_argument("config key 'n': must be a power of two");
  if (n_hi - n_lo < 2)
    throw std::invalid_argument("config keys 'n_lo'/'n_hi': need at least 3 levels");
  if ((1u << n_hi) > n)
    throw std::invalid_argument("config key 'n_hi': exceeds the grid's dyadic depth");

  const Grid grid = Grid::line(0.0, 1.0, n);
  const KernelSpec spec = grid_kernel_spec(cfg, grid, 1);
  Outputs out;
  const std::vector<GridMeasure> ms =
      gmc_ensemble(cfg, grid, spec, params, replicas, threads, cfg.kind, out);

  std::vector<int> levels;
  for (int l = n_lo; l <= n_hi; ++l) levels.push_back(l);
  std::vector<mfa::PartitionTable> tables(replicas);
  for_replicas(replicas, threads, [&](std::size_t i) {
    tables[i] = mfa::partition_table(ms[i], levels, qs, i);
  });
  const mfa::SpectrumCurve tau = mfa::estimate_tau(tables);

  io::Csv sums{{"level", "q", "mean_S", "mean_boxes"}, {}};
  for (std::size_t li = 0; li < levels.size(); ++li) {
    double boxes = 0.0;
    for (const auto& t : tables) boxes += static_cast<double>(t.box_counts[li]);
    boxes /= static_cast<double>(replicas);
    for (std::size_t qi = 0; qi < qs.size(); ++qi) {
      double s = 0.0;
      for (const auto& t : tables) s += t.at(li, qi);
      sums.rows.push_back({std::to_string(levels[li]), io::fmt17(qs[qi]),
                           io::fmt17(s / static_cast<double>(replicas)),
                           io::fmt17(boxes)});
    }
  }
  io::Csv slopes{{"q", "tau_hat", "se", "target", "abs_err", "flag"}, {}};
  for (std::size_t qi = 0; qi < qs.size(); ++qi) {
    const double target = mfa::theoretical_tau(qs[qi], gamma, 1.0);
    check_row(out.summary, "tau_q=" + io::fmt17(qs[qi]), tau.y[qi], target,
              qs[qi] < 0.0 ? tol_neg : tol);
    slopes.rows.push_back({io::fmt17(qs[qi]), io::fmt17(tau.y[qi]),
                           io::fmt17(tau.se[qi]), io::fmt17(target),
                           io::fmt17(std::fabs(tau.y[qi] - target)),
                           std::to_string(tau.flag[qi])});
  }
  out.files.emplace_back("partition_sums.csv", std::move(sums));
  out.files.emplace_back("slopes.csv", std::move(slopes));
  return out;
}

// ---- spectrum ----

Outputs run_spectrum(const ResolvedConfig& cfg, int threads) {
  (void)threads;
  const double gamma = f64_key(cfg, "gamma");
  const int d = static_cast<int>(int_key(cfg, "d", 1, 2));
  if (gamma == 0.0)
    throw std::invalid_argument("spectrum: gamma must be nonzero (degenerate spectrum)");
  if (!(gamma * gamma < 2.0 * d))
    throw std::invalid_argument("spectrum: need gamma^2 < 2d");
  const double margin = f64_key(cfg, "alpha_margin");
  const std::size_t alpha_points = size_key(cfg, "alpha_points", 2, 1u << 22);
  const double q_lo = f64_key(cfg, "q_lo");
  const double q_hi = f64_key(cfg, "q_hi");
  const std::size_t q_points = size_key(cfg, "q_points", 3, 1u << 24);
  const double tol = f64_key(cfg, "tolerance");
  const double tol_dual = f64_key(cfg, "tolerance_dual");
  if (!(q_lo < q_hi)) throw std::invalid_argument("spectrum: need q_lo < q_hi");

  const double ag = std::fabs(gamma);
  const double sd = std::sqrt(static_cast<double>(d));
  const double a_lo = (sd - ag / std::sqrt(2.0)) * (sd - ag / std::sqrt(2.0));
  const double a_hi = (sd + ag / std::sqrt(2.0)) * (sd + ag / std::sqrt(2.0));
  if (!(a_lo + margin < a_hi - margin))
    throw std::invalid_argument("spectrum: alpha_margin leaves an empty window");

  mfa::SpectrumCurve tau;
  tau.kind = mfa::SpectrumCurve::Kind::tau_theory;
  tau.gamma = gamma;
  tau.d = d;
  tau.x = linspace(q_lo, q_hi, q_points);
  tau.y.resize(q_points);
  for (std::size_t i = 0; i < q_points; ++i)
    tau.y[i] = mfa::theoretical_tau(tau.x[i], gamma, d);

  const std::vector<double> alphas = linspace(a_lo + margin, a_hi - margin, alpha_points);
  const mfa::SpectrumCurve leg = mfa::legendre(tau, alphas);

  io::Csv curve{{"alpha", "argmin_q", "tau_at_argmin", "legendre_numeric",
                 "spectrum_theory", "abs_diff", "flag"},
                {}};
  double max_diff = 0.0;
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    const double theory = mfa::theoretical_spectrum(alphas[i], gamma, d);
    const double diff = std::fabs(leg.y[i] - theory);
    max_diff = std::max(max_diff, diff);
    flagged += leg.flag[i];
    curve.rows.push_back({io::fmt17(alphas[i]), io::fmt17(leg.argmin_q[i]),
                          io::fmt17(mfa::theoretical_tau(leg.argmin_q[i], gamma, d)),
                          io::fmt17(leg.y[i]), io::fmt17(theory), io::fmt17(diff),
                          std::to_string(leg.flag[i])});
  }

  // double transform: Legendre of the numeric spectrum back to tau on the
  // interior of (q_-, q_+); the intermediate alpha window must be nearly the
  // full support for the dual to see every minimizer
  const double qp = std::sqrt(2.0 * d) / ag;
  mfa::SpectrumCurve wide = mfa::legendre(tau, linspace(a_lo + 1e-4, a_hi - 1e-4, 4001));
  wide.x = linspace(a_lo + 1e-4, a_hi - 1e-4, 4001);
  const std::vector<double> dual_qs =
      linspace(std::max(-qp, q_lo) + 0.05, std::min(qp, q_hi) - 0.05, 401);
  const std::vector<double> dual = mfa::legendre_dual(wide, dual_qs);
  double max_dual = 0.0;
  for (std::size_t i = 0; i < dual_qs.size(); ++i)
    max_dual = std::max(max_dual,
                        std::fabs(dual[i] - mfa::theoretical_tau(dual_qs[i], gamma, d)));

  Outputs out;
  check_row(out.summary, "legendre_duality_max_abs_diff", max_diff, 0.0, tol);
  check_row(out.summary, "flagged_alpha_points", static_cast<double>(flagged), 0.0, 0.0);
  check_row(out.summary, "double_transform_max_abs_diff", max_dual, 0.0, tol_dual);
  check_row(out.summary, "tau(1)", mfa::theoretical_tau(1.0, gamma, d), 0.0, 1e-12);
  check_row(out.summary, "tau(0)", mfa::theoretical_tau(0.0, gamma, d),
            static_cast<double>(d), 1e-12);

  io::Csv tau_csv{{"q", "tau_theory"}, {}};
  for (const double q : linspace(q_lo, q_hi, 2001))
    tau_csv.rows.push_back({io::fmt17(q), io::fmt17(mfa::theoretical_tau(q, gamma, d))});
  out.files.emplace_back("spectrum.csv", std::move(curve));
  out.files.emplace_back("tau.csv", std::move(tau_csv));
  return out;
}

// ---- thick-points ----

Outputs run_thick_points(const ResolvedConfig& cfg, int threads) {
  const double gamma = f64_key(cfg, "gamma");
  if (!(gamma * gamma < 2.0))
    throw std::invalid_argument("thick-points: need gamma^2 < 2 (d = 1)");
  const int depth = static_cast<int>(int_key(cfg, "depth", 2, 22));
  const std::size_t replicas = size_key(cfg, "replicas", 1, 1u << 16);
  const int n_lo = static_cast<int>(int_key(cfg, "n_lo", 1, 30));
  int n_hi = static_cast<int>(int_key(cfg, "n_hi", 0, 30));
  const double tol = f64_key(cfg, "tolerance");
  if (n_hi == 0) n_hi = depth;
  if (n_hi > depth || n_hi - n_lo < 2)
    throw std::invalid_argument("thick-points: need n_lo + 2 <= n_hi <= depth");

  const Grid grid = Grid::line(0.0, 1.0, std::size_t{1} << depth);
  KernelSpec spec;
  spec.dim = 1;
  spec.lo = grid.lo;
  spec.hi = grid.hi;
  spec.eps = std::ldexp(1.0, -depth);

  Outputs out;
  auto streams = replica_streams(cfg.seed, cfg.kind, replicas, &out.diag);
  const std::vector<LayeredField> fields =
      sample_layered_batch(spec, grid, depth, streams);

  std::vector<ThickPointCounts> counts(replicas);
  std::vector<double> dims(replicas);
  for_replicas(replicas, threads, [&](std::size_t i) {
    counts[i] = thick_point_box_count(fields[i], gamma, n_lo, n_hi);
    dims[i] = counts[i].dim_fit.slope;
  });

  // per-replica counts are sparse and clustered at practical depths; pool
  // them across replicas before fitting, so empty levels do not truncate
  // the regression
  std::vector<double> pooled(static_cast<std::size_t>(n_hi - n_lo + 1), 0.0);
  for (const ThickPointCounts& c : counts)
    for (std::size_t k = 0; k < c.counts.size(); ++k)
      pooled[k] += static_cast<double>(c.counts[k]);
  std::vector<double> px, py;
  for (std::size_t k = 0; k < pooled.size(); ++k)
    if (pooled[k] > 0.0) {
      px.push_back(static_cast<double>(n_lo + static_cast<int>(k)) * kLn2);
      py.push_back(std::log(pooled[k] / static_cast<double>(replicas)));
    }
  const SlopeFit pooled_fit = linfit(px, py);
  if (pooled_fit.degenerate)
    throw std::runtime_error("thick-points: pooled counts are degenerate");

  const double target = 1.0 - 0.5 * gamma * gamma;
  check_row(out.summary, "pooled_boxcount_dim", pooled_fit.slope, target, tol);
  info_row(out.summary, "median_replica_dim", median(dims));

  io::Csv est{{"replica", "dim_estimate", "degenerate"}, {}};
  io::Csv level_counts{{"replica", "level", "count"}, {}};
  for (std::size_t i = 0; i < replicas; ++i) {
    est.rows.push_back({std::to_string(i), io::fmt17(dims[i]),
                        std::to_string(counts[i].dim_fit.degenerate ? 1 : 0)});
    for (std::size_t li = 0; li < counts[i].levels.size(); ++li)
      level_counts.rows.push_back({std::to_string(i),
                                   std::to_string(counts[i].levels[li]),
                                   std::to_string(counts[i].counts[li])});
  }
  out.files.emplace_back("thick_points.csv", std::move(est));
  out.files.emplace_back("counts.csv", std::move(level_counts));
  return out;
}

// ---- mrw ----

Outputs run_mrw(const ResolvedConfig& cfg, int threads) {
  const double gamma = f64_key(cfg, "gamma");
  const GmcParams params(gamma, 1);
  const std::size_t n = size_key(cfg, "n", 8, 1u << 20);
  const int d_target = static_cast<int>(int_key(cfg, "d_target", 1, 2));
  const std::size_t replicas = size_key(cfg, "replicas", 2, 1u << 20);
  const std::vector<double> qs = list_key(cfg, "qs");
  const std::vector<double> lags = list_key(cfg, "lags");
  const double t_step = f64_key(cfg, "t_step");
  const double tol = f64_key(cfg, "tolerance");

  const Grid grid = Grid::line(0.0, 1.0, n);
  const KernelSpec spec = grid_kernel_spec(cfg, grid, 1);
  Outputs out;
  const std::vector<GridMeasure> ms = gmc_ensemble(cfg, grid, spec, params, replicas,
                                                   threads, cfg.kind + "/field", out);

  auto path_streams =
      replica_streams(cfg.seed, cfg.kind + "/path", replicas, &out.diag);
  std::vector<mrw::PathSeries> paths(replicas);
  for_replicas(replicas, threads, [&](std::size_t i) {
    paths[i] = mrw::simulate_mrw(ms[i], d_target, path_streams[i]);
  });

  io::Csv slopes{{"q", "slope", "se", "target", "abs_err"}, {}};
  io::Csv structure{{"q", "lag", "mean_abs_q"}, {}};
  for (const double q : qs) {
    const mrw::StructureSlope s = mrw::mrw_structure_slope(paths, q, lags, t_step);
    const double target = mfa::theoretical_xi(0.5 * q, gamma, 1.0);
    check_row(out.summary, "slope_q=" + io::fmt17(q), s.fit.slope, target, tol);
    slopes.rows.push_back({io::fmt17(q), io::fmt17(s.fit.slope), io::fmt17(s.fit.se),
                           io::fmt17(target),
                           io::fmt17(std::fabs(s.fit.slope - target))});
    for (std::size_t k = 0; k < lags.size(); ++k)
      structure.rows.push_back(
          {io::fmt17(q), io::fmt17(lags[k]), io::fmt17(s.mean_abs_q[k])});
  }

  if (gamma == 0.0) {
    // bit-identity of the time-changed walk with a plain Brownian walk built
    // from the same widths and the same stream
    rng::Stream s0(cfg.seed, rng::derive_stream(cfg.kind + "/path", 0));
    const double h = grid.spacing(0);
    std::vector<double> times(n + 1);
    for (std::size_t k = 0; k <= n; ++k) times[k] = static_cast<double>(k) * h;
    const mrw::PathSeries plain = mrw::path_from_variances(
        ms[0].mass, times, d_target, s0, mrw::PathSeries::Kind::brownian);
    double worst = 0.0;
    for (std::size_t i = 0; i < paths[0].x.size(); ++i)
      worst = std::max(worst, std::fabs(paths[0].x[i] - plain.x[i]));
    check_row(out.summary, "brownian_reduction_max_abs_diff", worst, 0.0, 0.0);
  }

  io::Csv path_csv{{"t", "x0", "x1"}, {}};
  for (std::size_t k = 0; k < paths[0].knots(); ++k)
    path_csv.rows.push_back(
        {io::fmt17(paths[0].t[k]), io::fmt17(paths[0].coord(k, 0)),
         d_target == 2 ? io::fmt17(paths[0].coord(k, 1)) : std::string("0")});
  out.files.emplace_back("slopes.csv", std::move(slopes));
  out.files.emplace_back("structure.csv", std::move(structure));
  out.files.emplace_back("path.csv", std::move(path_csv));
  return out;
}

// ---- lbm-exit ----

Outputs run_lbm_exit(const ResolvedConfig& cfg, int threads) {
  lbm::ExitExperimentConfig ec;
  ec.gamma = f64_key(cfg, "gamma");
  ec.radii = list_key(cfg, "radii");
  ec.h = f64_key(cfg, "h");
  ec.replicas = size_key(cfg, "replicas", 2, 1u << 20);
  ec.paths_per_replica = size_key(cfg, "paths_per_replica", 1, 64);
  ec.seed = cfg.seed;
  ec.grid_per_side = size_key(cfg, "grid_per_side", 2, 1u << 10);
  ec.domain_half = f64_key(cfg, "domain_half");
  ec.g_const = f64_key(cfg, "g_const");
  const std::vector<double> qs = list_key(cfg, "qs");
  const double tol = f64_key(cfg, "tolerance");
  const double tol_q1 = f64_key(cfg, "tolerance_q1");
  ec.validate();  // throws before the factor build and before any file I/O

  Outputs out;
  {
    njson ids_p = njson::array(), ids_f = njson::array();
    for (std::size_t i = 0; i < ec.replicas; ++i) {
      ids_f.push_back(std::to_string(rng::derive_stream("lbm-exit/field", i)));
      for (std::size_t p = 0; p < ec.paths_per_replica; ++p)
        ids_p.push_back(std::to_string(
            rng::derive_stream("lbm-exit/path", i * ec.paths_per_replica + p)));
    }
    out.diag["replica_streams"]["lbm-exit/path"] = std::move(ids_p);
    out.diag["replica_streams"]["lbm-exit/field"] = std::move(ids_f);
  }

  const lbm::ExitSampler sampler(ec);
  std::vector<std::vector<lbm::ExitReplica>> groups(ec.replicas);
  for_replicas(ec.replicas, threads,
               [&](std::size_t i) { groups[i] = sampler.run_replica(i); });
  std::vector<lbm::ExitReplica> reps;
  reps.reserve(ec.replicas * ec.paths_per_replica);
  for (auto& g : groups)
    for (auto& r : g) reps.push_back(std::move(r));

  std::size_t ok = 0, increasing = 0;
  for (const auto& r : reps) {
    ok += r.ok;
    increasing += r.ok && r.increasing;
  }
  if (ok == 0) throw std::runtime_error("lbm-exit: every walk hit the step cap");

  io::Csv slopes{{"q", "slope", "se", "target", "abs_err", "max_moment", "excluded"}, {}};
  for (const double q : qs) {
    const lbm::ExitMomentResult r = lbm::exit_moment_slope(reps, ec.radii, q);
    const double target = lbm::theoretical_xi_mu(q, ec.gamma);
    check_row(out.summary, "slope_q=" + io::fmt17(q), r.fit.slope, target,
              q == 1.0 ? tol_q1 : tol);
    slopes.rows.push_back({io::fmt17(q), io::fmt17(r.fit.slope), io::fmt17(r.fit.se),
                           io::fmt17(target), io::fmt17(std::fabs(r.fit.slope - target)),
                           io::fmt17(r.max_moment), std::to_string(r.excluded)});
  }
  check_row(out.summary, "clocks_strictly_increasing",
            static_cast<double>(increasing) / static_cast<double>(ok), 1.0, 0.0);
  info_row(out.summary, "excluded_walks",
           static_cast<double>(reps.size() - ok));
  info_row(out.summary, "jitter", sampler.jitter());
  out.diag["jitter"] = sampler.jitter();
  out.diag["excluded_walks"] = reps.size() - ok;

  io::Csv exits{{"replica", "path", "ok", "increasing"}, {}};
  for (const double r : ec.radii) exits.header.push_back("mass_r=" + io::fmt17(r));
  for (std::size_t i = 0; i < reps.size(); ++i) {
    std::vector<std::string> row{std::to_string(i / ec.paths_per_replica),
                                 std::to_string(i % ec.paths_per_replica),
                                 std::to_string(reps[i].ok ? 1 : 0),
                                 std::to_string(reps[i].increasing ? 1 : 0)};
    for (std::size_t k = 0; k < ec.radii.size(); ++k)
      row.push_back(reps[i].ok ? io::fmt17(reps[i].mass[k]) : std::string(""));
    exits.rows.push_back(std::move(row));
  }
  out.files.emplace_back("slopes.csv", std::move(slopes));
  out.files.emplace_back("exits.csv", std::move(exits));
  return out;
}

// ---- lbm-refine ----

Outputs run_lbm_refine(const ResolvedConfig& cfg, int threads) {
  lbm::RefineConfig rc;
  rc.gamma = f64_key(cfg, "gamma");
  rc.m_lo = static_cast<int>(int_key(cfg, "m_lo", 1, 30));
  rc.m_hi = static_cast<int>(int_key(cfg, "m_hi", 1, 30));
  rc.h = f64_key(cfg, "h");
  rc.ball_radius = f64_key(cfg, "ball_radius");
  rc.domain_half = f64_key(cfg, "domain_half");
  rc.replicas = size_key(cfg, "replicas", 1, 1u << 16);
  rc.seed = cfg.seed;
  rc.validate();

  Outputs out;
  {
    njson ids_p = njson::array(), ids_f = njson::array();
    for (std::size_t i = 0; i < rc.replicas; ++i) {
      ids_p.push_back(std::to_string(rng::derive_stream("lbm-refine/path", i)));
      ids_f.push_back(std::to_string(rng::derive_stream("lbm-refine/field", i)));
    }
    out.diag["replica_streams"]["lbm-refine/path"] = std::move(ids_p);
    out.diag["replica_streams"]["lbm-refine/field"] = std::move(ids_f);
  }

  std::vector<lbm::RefineReplica> reps(rc.replicas);
  for_replicas(rc.replicas, threads,
               [&](std::size_t i) { reps[i] = lbm::refine_replica(rc, i); });

  const std::size_t scales = static_cast<std::size_t>(rc.m_hi - rc.m_lo) + 1;
  std::vector<double> diffs(scales - 1, 0.0);
  for (const auto& r : reps)
    for (std::size_t g = 0; g + 1 < scales; ++g)
      diffs[g] += std::fabs(r.F_T[g + 1] - r.F_T[g]);
  for (double& v : diffs) v /= static_cast<double>(rc.replicas);

  bool decreasing = true;
  io::Csv diff_csv{{"m_from", "m_to", "mean_abs_diff"}, {}};
  for (std::size_t g = 0; g < diffs.size(); ++g) {
    if (g > 0 && !(diffs[g] < diffs[g - 1])) decreasing = false;
    info_row(out.summary, "mean_abs_diff_m" + std::to_string(rc.m_lo + (int)g) + "_to_m" +
                              std::to_string(rc.m_lo + (int)g + 1),
             diffs[g]);
    diff_csv.rows.push_back({std::to_string(rc.m_lo + (int)g),
                             std::to_string(rc.m_lo + (int)g + 1), io::fmt17(diffs[g])});
  }
  check_row(out.summary, "refinement_decreasing", decreasing ? 1.0 : 0.0, 1.0, 0.0);

  io::Csv refine{{"replica", "visited_cells"}, {}};
  for (int m = rc.m_lo; m <= rc.m_hi; ++m)
    refine.header.push_back("F_T_m" + std::to_string(m));
  for (std::size_t i = 0; i < reps.size(); ++i) {
    std::vector<std::string> row{std::to_string(i), std::to_string(reps[i].visited_cells)};
    for (const double f : reps[i].F_T) row.push_back(io::fmt17(f));
    refine.rows.push_back(std::move(row));
  }
  out.files.emplace_back("refine.csv", std::move(diff_csv));
  out.files.emplace_back("clock_totals.csv", std::move(refine));
  return out;
}

Outputs dispatch(const ResolvedConfig& cfg, int threads) {
  if (cfg.kind == "field-check") return run_field_check(cfg, threads);
  if (cfg.kind == "gmc-mass") return run_gmc_mass(cfg, threads);
  if (cfg.kind == "moment-scaling") return run_moment_scaling(cfg, threads);
  if (cfg.kind == "tau-estimate") return run_tau_estimate(cfg, threads);
  if (cfg.kind == "spectrum") return run_spectrum(cfg, threads);
  if (cfg.kind == "thick-points") return run_thick_points(cfg, threads);
  if (cfg.kind == "mrw") return run_mrw(cfg, threads);
  if (cfg.kind == "lbm-exit") return run_lbm_exit(cfg, threads);
  if (cfg.kind == "lbm-refine") return run_lbm_refine(cfg, threads);
  throw std::invalid_argument("unknown experiment kind '" + cfg.kind + "'");
}

// ---- table printing / csv parsing ----

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

int print_summary_table(const std::vector<std::vector<std::string>>& rows,
                        std::ostream& os) {
  std::vector<std::size_t> width;
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c >= width.size()) width.resize(c + 1, 0);
      width[c] = std::max(width[c], row[c].size());
    }
  bool any_fail = false;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) line += "  ";
      line += row[c];
      if (c + 1 < row.size()) line.append(width[c] - row[c].size(), ' ');
    }
    os << line << '\n';
    if (!row.empty() && row.back() == "fail") any_fail = true;
  }
  return any_fail ? 2 : 0;
}

const std::vector<std::string> kSummaryHeader = {"name", "estimate", "target",
                                                 "tolerance", "pass"};

}  // namespace

ConfigFile parse_config_text(const std::string& text, const std::string& name) {
  ConfigFile f;
  f.source_path = name;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(name + ":" + std::to_string(lineno) +
                                  ": expected 'key = value'");
    const std::string k = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (k.empty())
      throw std::invalid_argument(name + ":" + std::to_string(lineno) + ": empty key");
    if (!f.values.emplace(k, v).second)
      throw std::invalid_argument(name + ":" + std::to_string(lineno) +
                                  ": duplicate key '" + k + "'");
  }
  return f;
}

ConfigFile parse_config_file(const std::string& path) {
  return parse_config_text(io::read_text(path), path);
}

ResolvedConfig resolve_config(const ConfigFile& file) {
  const auto kit = file.values.find("kind");
  if (kit == file.values.end())
    throw std::invalid_argument(file.source_path + ": missing required key 'kind'");
  const auto& all = schemas();
  const auto sit = all.find(kit->second);
  if (sit == all.end()) {
    std::string msg = file.source_path + ": unknown experiment kind '" + kit->second +
                      "'; valid kinds:";
    for (const auto& [k, schema] : all) msg += " " + k;
    throw std::invalid_argument(msg);
  }
  const Schema& schema = sit->second;
  std::string bad;
  for (const auto& [k, v] : file.values) {
    if (k == "kind") continue;
    const bool known = std::any_of(schema.begin(), schema.end(),
                                   [&k](const KeyDef& kd) { return k == kd.name; });
    if (!known) bad += (bad.empty() ? "" : ", ") + k;
  }
  if (!bad.empty())
    throw std::invalid_argument(file.source_path + ": unknown keys for kind '" +
                                kit->second + "': " + bad);
  ResolvedConfig out;
  out.kind = kit->second;
  for (const KeyDef& kd : schema) {
    const auto it = file.values.find(kd.name);
    out.keys[kd.name] = it == file.values.end() ? kd.def : it->second;
  }
  out.seed = u64_key(out, "seed");
  return out;
}

int run(ResolvedConfig cfg, const RunOptions& opt) {
  if (opt.seed_override) {
    cfg.seed = *opt.seed_override;
    cfg.keys["seed"] = std::to_string(cfg.seed);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const Outputs out = dispatch(cfg, std::max(1, opt.threads));
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::filesystem::create_directories(opt.out_dir);
  for (const auto& [name, csv] : out.files) io::write_csv(opt.out_dir + "/" + name, csv);
  io::write_csv(opt.out_dir + "/summary.csv", out.summary);

  njson manifest;
  manifest["toolkit_version"] = kToolkitVersion;
  manifest["kind"] = cfg.kind;
  manifest["seed"] = std::to_string(cfg.seed);
  njson conf = njson::object();
  for (const auto& [k, v] : cfg.keys) conf[k] = v;
  manifest["config"] = std::move(conf);
  manifest["diagnostics"] = out.diag;
  manifest["wall_clock_seconds"] = wall;
  io::write_text(opt.out_dir + "/manifest.json", manifest.dump(2) + "\n");

  std::vector<std::vector<std::string>> table;
  table.push_back(out.summary.header);
  for (const auto& row : out.summary.rows) table.push_back(row);
  if (opt.print_report) return print_summary_table(table, std::cout);
  bool any_fail = false;
  for (const auto& row : out.summary.rows) any_fail |= row.back() == "fail";
  return any_fail ? 2 : 0;
}

int replay(const std::string& manifest_path, RunOptions opt) {
  const njson j = njson::parse(io::read_text(manifest_path));
  ConfigFile file;
  file.source_path = manifest_path;
  file.values["kind"] = j.at("kind").get<std::string>();
  for (const auto& [k, v] : j.at("config").items())
    file.values[k] = v.get<std::string>();
  ResolvedConfig cfg = resolve_config(file);
  const std::string seed_text = j.at("seed").get<std::string>();
  cfg.keys["seed"] = seed_text;
  cfg.seed = u64_key(cfg, "seed");
  opt.seed_override.reset();  // the manifest's seed is authoritative
  return run(cfg, opt);
}

int report_dir(const std::string& dir) {
  const std::string path = dir + "/summary.csv";
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const std::exception&) {
    throw std::runtime_error("no summary.csv found in '" + dir + "'");
  }
  const auto rows = parse_csv(text);
  if (rows.empty() || rows[0] != kSummaryHeader)
    throw std::runtime_error(path + ": missing required summary columns");
  return print_summary_table(rows, std::cout);
}

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn) {
  const std::size_t want = threads < 1 ? 1 : static_cast<std::size_t>(threads);
  const std::size_t t = std::min(want, n == 0 ? std::size_t{1} : n);
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  const auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (std::size_t k = 0; k < t; ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace gmc::run
