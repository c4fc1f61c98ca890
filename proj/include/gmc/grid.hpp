#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace gmc {

using Point = std::array<double, 2>;  // second coordinate ignored when dim==1

/// Uniform lattice of cell centers over an axis-aligned box. dim is 1 or 2;
/// for dim==1 the y axis has a single degenerate cell.
struct Grid {
  int dim = 1;
  Point lo{0.0, 0.0};
  Point hi{1.0, 0.0};
  std::array<std::size_t, 2> n{0, 1};  // cells per axis; n[1]==1 when dim==1

  static Grid line(double a, double b, std::size_t cells);
  static Grid square(double a, double b, std::size_t cells_per_side);

  std::size_t size() const { return n[0] * n[1]; }
  double spacing(int axis) const;
  double cell_volume() const;
  Point center(std::size_t idx) const;
  std::size_t index(std::size_t ix, std::size_t iy) const { return ix * n[1] + iy; }

  bool contains(const Point& p) const;
  /// Index of the cell whose center is nearest to p (coordinates clamped to
  /// the box first). Nearest-center lookup, no interpolation.
  std::size_t nearest(const Point& p) const;
};

double distance(const Point& a, const Point& b, int dim);

/// Scattered subset of a conceptual fine lattice: explicit center list.
/// Used when a field is only needed on the cells a path actually visits.
struct PointSet {
  int dim = 2;
  std::vector<Point> pts;
  std::size_t size() const { return pts.size(); }
};

}  // namespace gmc
