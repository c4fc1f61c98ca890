#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gmc {

/// Least-squares line fit y = intercept + slope*x.
/// The slope numerator is computed as sum (x_i - xbar)*(y_i - y_0): when all
/// y_i are bit-identical every term carries an exact 0.0 factor, so a constant
/// series yields slope == 0.0 exactly (several estimators rely on that).
struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double se = 0.0;        // standard error of the slope
  std::size_t points = 0;
  bool degenerate = false;  // < 3 points or zero x-variance
};

SlopeFit linfit(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> v);
double sample_variance(std::span<const double> v);  // unbiased, n-1
double median(std::vector<double> v);               // by copy; nan if empty

}  // namespace gmc
