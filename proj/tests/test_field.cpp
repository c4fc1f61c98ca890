#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "gmc/field.hpp"
#include "gmc/grid.hpp"
#include "gmc/rng.hpp"

using namespace gmc;
using rng::derive_stream;
using rng::Stream;

namespace {

KernelSpec line_spec(double eps) {
  KernelSpec s;
  s.dim = 1;
  s.lo = {0.0, 0.0};
  s.hi = {1.0, 0.0};
  s.eps = eps;
  return s;
}

constexpr double kLn2 = 0.6931471805599453;

}  // namespace

TEST_CASE("grid centers, spacing and nearest lookup") {
  const Grid g = Grid::line(0.0, 1.0, 8);
  CHECK(g.size() == 8);
  CHECK(g.spacing(0) == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(g.cell_volume() == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(g.center(0)[0] == doctest::Approx(0.0625).epsilon(1e-15));
  CHECK(g.center(7)[0] == doctest::Approx(0.9375).epsilon(1e-15));
  CHECK(g.nearest({0.0625, 0.0}) == 0);
  CHECK(g.nearest({0.99, 0.0}) == 7);
  CHECK(g.nearest({-5.0, 0.0}) == 0);  // clamped
  CHECK(g.nearest({5.0, 0.0}) == 7);

  const Grid q = Grid::square(-1.0, 1.0, 4);
  CHECK(q.size() == 16);
  CHECK(q.dim == 2);
  CHECK(q.cell_volume() == doctest::Approx(0.25).epsilon(1e-15));
  const Point c = q.center(q.index(1, 2));
  CHECK(c[0] == doctest::Approx(-0.25).epsilon(1e-15));
  CHECK(c[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(q.nearest(c) == q.index(1, 2));
  CHECK(q.contains({0.0, 0.0}));
  CHECK(!q.contains({0.0, 1.5}));
}

TEST_CASE("kernel spec validation") {
  KernelSpec s = line_spec(0.1);
  CHECK_NOTHROW(s.validate());

  KernelSpec bad = s;
  bad.dim = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = s;
  bad.eps = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.eps = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.eps = std::nan("");
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = s;
  bad.hi = {0.0, 0.0};  // empty domain
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = s;
  bad.g = GTerm::table;
  bad.g_table = nullptr;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = s;
  bad.g = GTerm::constant;
  bad.g_const = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("kernel matrix entries and diagnostics") {
  const Grid g = Grid::line(0.0, 1.0, 8);
  KernelSpec s = line_spec(0.0625);  // eps < spacing 0.125
  BuildDiagnostics diag;
  const Eigen::MatrixXd K = build_kernel(s, g, &diag);
  CHECK(diag.eps_below_spacing);
  for (int i = 0; i < 8; ++i)
    CHECK(K(i, i) == doctest::Approx(-std::log(0.0625)).epsilon(1e-15));
  const double d01 = 0.125;
  CHECK(K(0, 1) == doctest::Approx(-std::log(d01 + 0.0625)).epsilon(1e-14));
  CHECK(K(2, 6) == K(6, 2));

  s.eps = 0.25;
  BuildDiagnostics diag2;
  build_kernel(s, g, &diag2);
  CHECK(!diag2.eps_below_spacing);

  // constant g shifts every entry
  KernelSpec sc = line_spec(0.25);
  sc.g = GTerm::constant;
  sc.g_const = 1.5;
  const Eigen::MatrixXd Kc = build_kernel(sc, g);
  const Eigen::MatrixXd K0 = build_kernel(line_spec(0.25), g);
  CHECK((Kc - K0).cwiseAbs().maxCoeff() - 1.5 == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("tabulated g is added entrywise and size-checked") {
  const Grid g = Grid::line(0.0, 1.0, 2);
  std::vector<double> tbl = {0.1, 0.2, 0.2, 0.4};
  KernelSpec s = line_spec(0.5);
  s.g = GTerm::table;
  s.g_table = &tbl;
  const Eigen::MatrixXd K = build_kernel(s, g);
  CHECK(K(0, 0) == doctest::Approx(-std::log(0.5) + 0.1).epsilon(1e-15));
  CHECK(K(0, 1) == doctest::Approx(-std::log(1.0) + 0.2).epsilon(1e-15));
  CHECK(K(1, 1) == doctest::Approx(-std::log(0.5) + 0.4).epsilon(1e-15));

  tbl.resize(2);  // wrong size for a 2x2 kernel
  CHECK_THROWS_AS(build_kernel(s, g), std::invalid_argument);
}

TEST_CASE("factorize: exact 2x2, indefinite rejection, semidefinite jitter") {
  Eigen::MatrixXd K(2, 2);
  K << 4.0, 2.0, 2.0, 5.0;
  const CovarianceFactor f = factorize(K);
  CHECK(f.jitter == 0.0);
  CHECK(f.L(0, 0) == 2.0);
  CHECK(f.L(1, 0) == 1.0);
  CHECK(f.L(1, 1) == 2.0);
  CHECK(f.diag_var[0] == 4.0);
  CHECK(f.diag_var[1] == 5.0);

  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
  CHECK_THROWS_AS(factorize(bad), NotPositiveSemidefinite);

  Eigen::MatrixXd rank1(2, 2);
  rank1 << 1.0, 1.0, 1.0, 1.0;  // positive semidefinite, singular
  const CovarianceFactor r = factorize(rank1);
  CHECK(r.jitter <= 1e-8);
  Eigen::MatrixXd rec = r.L * r.L.transpose();
  rec.diagonal().array() -= r.jitter;
  CHECK((rec - rank1).cwiseAbs().maxCoeff() <= 1e-9);

  Eigen::MatrixXd rect(2, 3);
  CHECK_THROWS_AS(factorize(rect), std::invalid_argument);
  Eigen::MatrixXd empty(0, 0);
  CHECK_THROWS_AS(factorize(empty), std::invalid_argument);
}

TEST_CASE("log kernel on the unit interval factorizes without jitter") {
  const Grid g = Grid::line(0.0, 1.0, 16);
  const Eigen::MatrixXd K = build_kernel(line_spec(0.0625), g);
  const CovarianceFactor f = factorize(K);
  CHECK(f.jitter == 0.0);
  const Eigen::MatrixXd rec = f.L * f.L.transpose();
  CHECK((rec - K).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("sampled grid field matches its kernel covariance") {
  const Grid g = Grid::line(0.0, 1.0, 8);
  const KernelSpec s = line_spec(0.0625);
  const GridFieldSampler sampler(s, g);
  const Eigen::MatrixXd K = build_kernel(s, g);

  const std::size_t R = 2000;
  Stream stream(101, derive_stream("field-mc", 0));
  std::vector<std::vector<double>> reps;
  reps.reserve(R);
  for (std::size_t r = 0; r < R; ++r) reps.push_back(sampler.sample(stream).values);

  const double rootR = std::sqrt(static_cast<double>(R));
  for (std::size_t i = 0; i < 8; ++i) {
    double m = 0.0;
    for (const auto& v : reps) m += v[i];
    m /= static_cast<double>(R);
    CHECK(std::fabs(m) <= 4.0 * std::sqrt(K(static_cast<Eigen::Index>(i),
                                            static_cast<Eigen::Index>(i))) /
                              rootR);
  }
  const std::size_t pairs[][2] = {{0, 0}, {0, 1}, {0, 4}, {3, 7}, {7, 7}};
  for (const auto& p : pairs) {
    const auto i = static_cast<Eigen::Index>(p[0]);
    const auto j = static_cast<Eigen::Index>(p[1]);
    double c = 0.0;
    for (const auto& v : reps) c += v[p[0]] * v[p[1]];
    c /= static_cast<double>(R);
    const double band =
        4.0 * std::sqrt((K(i, i) * K(j, j) + K(i, j) * K(i, j)) / static_cast<double>(R));
    CHECK(std::fabs(c - K(i, j)) <= band);
  }
}

TEST_CASE("stationary lockstep sampler equals the dense factor replica by replica") {
  const Grid g = Grid::line(0.0, 1.0, 512);
  const KernelSpec s = line_spec(0.015625);
  REQUIRE(toeplitz_eligible(s, g));

  std::vector<Stream> batch_streams;
  for (std::uint64_t i = 0; i < 3; ++i)
    batch_streams.emplace_back(77, derive_stream("fld", i));
  BuildDiagnostics diag;
  const auto fast = sample_field_batch(s, g, batch_streams, &diag);
  REQUIRE(fast.size() == 3);
  CHECK(diag.jitter == 0.0);

  const GridFieldSampler dense(s, g);
  for (std::uint64_t i = 0; i < 3; ++i) {
    Stream st(77, derive_stream("fld", i));
    const FieldGrid ref = dense.sample(st);
    REQUIRE(ref.values.size() == fast[i].values.size());
    double worst = 0.0;
    for (std::size_t t = 0; t < ref.values.size(); ++t)
      worst = std::max(worst, std::fabs(ref.values[t] - fast[i].values[t]));
    CHECK(worst <= 1e-9);
    CHECK(fast[i].diag_var[0] == doctest::Approx(-std::log(s.eps)).epsilon(1e-15));
    CHECK(fast[i].seed == 77);
    CHECK(fast[i].stream_id == derive_stream("fld", i));
  }
}

TEST_CASE("toeplitz eligibility and input validation") {
  const Grid g1 = Grid::line(0.0, 1.0, 4);
  const Grid g2 = Grid::square(0.0, 1.0, 4);
  KernelSpec s = line_spec(0.25);
  CHECK(toeplitz_eligible(s, g1));
  std::vector<double> tbl(16, 0.0);
  s.g = GTerm::table;
  s.g_table = &tbl;
  CHECK(!toeplitz_eligible(s, g1));  // pointwise g breaks stationarity

  KernelSpec s2 = s;
  s2.g = GTerm::zero;
  s2.dim = 2;
  s2.hi = {1.0, 1.0};
  CHECK(!toeplitz_eligible(s2, g2));
  CHECK_THROWS_AS(toeplitz_kernel(s2, g2), std::invalid_argument);

  ToeplitzKernel empty;
  std::vector<Stream> streams;
  streams.emplace_back(1, 2);
  double out[4];
  CHECK_THROWS_AS(sample_stationary(empty, streams, out), std::invalid_argument);
  ToeplitzKernel k = toeplitz_kernel(line_spec(0.25), g1);
  std::vector<Stream> none;
  CHECK_THROWS_AS(sample_stationary(k, none, out), std::invalid_argument);
}

TEST_CASE("indefinite planar kernel is rejected, constant shift repairs it") {
  const Grid g = Grid::square(-1.0, 1.0, 8);
  KernelSpec s;
  s.dim = 2;
  s.lo = {-1.0, -1.0};
  s.hi = {1.0, 1.0};
  s.eps = 0.25;
  CHECK_THROWS_AS(factorize(build_kernel(s, g), {}, 2), NotPositiveSemidefinite);

  s.g = GTerm::constant;
  s.g_const = 2.0;
  const GridFieldSampler sampler(s, g);
  CHECK(sampler.factor().jitter == 0.0);
  for (double v : sampler.factor().diag_var)
    CHECK(v == doctest::Approx(-std::log(0.25) + 2.0).epsilon(1e-15));
  Stream st(5, 6);
  const FieldGrid f = sampler.sample(st);
  CHECK(f.values.size() == 64);
  for (double v : f.values) CHECK(std::isfinite(v));
}

TEST_CASE("layered stack: variance ladder, additivity, determinism") {
  const Grid g = Grid::line(0.0, 1.0, 64);
  const KernelSpec s = line_spec(0.03125);
  Stream st(9, 3);
  const LayeredField f = sample_layered(s, g, 5, st);
  REQUIRE(f.depth == 5);
  REQUIRE(f.layer.size() == 5);
  REQUIRE(f.cum.size() == 5);
  for (int m = 1; m <= 5; ++m) {
    CHECK(f.eps_of(m) == std::ldexp(1.0, -m));
    CHECK(std::fabs(f.var[static_cast<std::size_t>(m - 1)] - m * kLn2) <= 1e-12);
  }
  // cumulative fields are the running sums of the layers, in order
  std::vector<double> acc = f.layer[0];
  for (std::size_t m = 1; m < 5; ++m) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += f.layer[m][i];
    for (std::size_t i = 0; i < acc.size(); ++i) REQUIRE(f.cum[m][i] == acc[i]);
  }

  Stream st2(9, 3);
  const LayeredField f2 = sample_layered(s, g, 5, st2);
  for (std::size_t i = 0; i < 64; ++i) REQUIRE(f2.cum[4][i] == f.cum[4][i]);

  CHECK_THROWS_AS(sample_layered(s, g, 0, st), std::invalid_argument);
}

TEST_CASE("layered stack reproduces the log kernel at its depth") {
  const Grid g = Grid::line(0.0, 1.0, 32);
  const KernelSpec s = line_spec(0.125);
  const std::size_t R = 1500;
  std::vector<Stream> streams;
  for (std::uint64_t i = 0; i < R; ++i) streams.emplace_back(31, derive_stream("lmc", i));
  const auto batch = sample_layered_batch(s, g, 3, streams);
  REQUIRE(batch.size() == R);

  const double v = 3.0 * kLn2;  // Var(S_3)
  const std::size_t js[] = {0, 1, 8, 31};
  for (const std::size_t j : js) {
    double c = 0.0;
    for (const auto& rep : batch) c += rep.cum[2][0] * rep.cum[2][j];
    c /= static_cast<double>(R);
    const double dx = static_cast<double>(j) * g.spacing(0);
    const double k = -std::log(dx + 0.125);
    const double band = 4.0 * std::sqrt((v * v + k * k) / static_cast<double>(R));
    CHECK(std::fabs(c - k) <= band);
  }
}

TEST_CASE("layered stack on scattered points") {
  PointSet pts;
  pts.dim = 2;
  pts.pts = {{0.1, 0.2}, {0.3, 0.7}, {0.55, 0.4}, {0.8, 0.85}, {0.25, 0.5}};
  KernelSpec s;
  s.dim = 2;
  s.lo = {0.0, 0.0};
  s.hi = {1.0, 1.0};
  s.eps = 0.015625;

  Stream st(21, 4);
  const LayeredPointField f = sample_layered_points(s, pts, 3, 6, st);
  REQUIRE(f.cum.size() == 4);
  REQUIRE(f.var.size() == 4);
  CHECK(std::fabs(f.var[0] - 3.0 * kLn2) <= 1e-12);
  CHECK(std::fabs(f.var[3] - 6.0 * kLn2) <= 1e-12);
  for (const auto& level : f.cum) {
    REQUIRE(level.size() == 5);
    for (double x : level) CHECK(std::isfinite(x));
  }

  Stream st2(21, 4);
  const LayeredPointField f2 = sample_layered_points(s, pts, 3, 6, st2);
  for (std::size_t m = 0; m < 4; ++m)
    for (std::size_t i = 0; i < 5; ++i) REQUIRE(f2.cum[m][i] == f.cum[m][i]);

  CHECK_THROWS_AS(sample_layered_points(s, pts, 0, 6, st), std::invalid_argument);
  CHECK_THROWS_AS(sample_layered_points(s, pts, 4, 3, st), std::invalid_argument);
  PointSet empty;
  empty.dim = 2;
  CHECK_THROWS_AS(sample_layered_points(s, empty, 3, 6, st), std::invalid_argument);
}
