#include "gmc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gmc {

SlopeFit linfit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("linfit: size mismatch");
  SlopeFit fit;
  fit.points = x.size();
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2) {
    fit.degenerate = true;
    return fit;
  }
  double xbar = 0.0;
  for (const double xi : x) xbar += xi;
  xbar /= n;

  // numerator terms carry (y_i - y_0) so a bit-constant y gives slope == 0.0
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - xbar;
    sxx += dx * dx;
    sxy += dx * (y[i] - y[0]);
  }
  if (sxx == 0.0) {
    fit.degenerate = true;
    return fit;
  }
  fit.slope = sxy / sxx;

  double ybar = 0.0;
  for (const double yi : y) ybar += yi;
  ybar /= n;
  fit.intercept = ybar - fit.slope * xbar;

  if (x.size() < 3) {
    fit.degenerate = true;
    return fit;
  }
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    rss += r * r;
  }
  fit.se = std::sqrt(rss / ((n - 2.0) * sxx));
  return fit;
}

double mean(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean(v);
  double s = 0.0;
  for (const double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo =
      *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace gmc
