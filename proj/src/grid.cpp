#include "gmc/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gmc {

Grid Grid::line(double a, double b, std::size_t cells) {
  if (!(a < b) || cells == 0) throw std::invalid_argument("Grid::line: empty domain");
  Grid g;
  g.dim = 1;
  g.lo = {a, 0.0};
  g.hi = {b, 0.0};
  g.n = {cells, 1};
  return g;
}

Grid Grid::square(double a, double b, std::size_t cells_per_side) {
  if (!(a < b) || cells_per_side == 0)
    throw std::invalid_argument("Grid::square: empty domain");
  Grid g;
  g.dim = 2;
  g.lo = {a, a};
  g.hi = {b, b};
  g.n = {cells_per_side, cells_per_side};
  return g;
}

double Grid::spacing(int axis) const {
  return (hi[static_cast<std::size_t>(axis)] - lo[static_cast<std::size_t>(axis)]) /
         static_cast<double>(n[static_cast<std::size_t>(axis)]);
}

double Grid::cell_volume() const {
  double v = spacing(0);
  if (dim == 2) v *= spacing(1);
  return v;
}

Point Grid::center(std::size_t idx) const {
  const std::size_t ix = idx / n[1];
  const std::size_t iy = idx % n[1];
  Point p{lo[0] + (static_cast<double>(ix) + 0.5) * spacing(0), 0.0};
  if (dim == 2) p[1] = lo[1] + (static_cast<double>(iy) + 0.5) * spacing(1);
  return p;
}

bool Grid::contains(const Point& p) const {
  if (p[0] < lo[0] || p[0] > hi[0]) return false;
  if (dim == 2 && (p[1] < lo[1] || p[1] > hi[1])) return false;
  return true;
}

std::size_t Grid::nearest(const Point& p) const {
  std::array<std::size_t, 2> idx{0, 0};
  for (int axis = 0; axis < dim; ++axis) {
    const auto a = static_cast<std::size_t>(axis);
    const double x = std::clamp(p[a], lo[a], hi[a]);
    const double u = (x - lo[a]) / spacing(axis);
    auto i = static_cast<std::ptrdiff_t>(std::floor(u));
    i = std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n[a]) - 1);
    idx[a] = static_cast<std::size_t>(i);
  }
  return index(idx[0], idx[1]);
}

double distance(const Point& a, const Point& b, int dim) {
  const double dx = a[0] - b[0];
  if (dim == 1) return std::fabs(dx);
  const double dy = a[1] - b[1];
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace gmc
