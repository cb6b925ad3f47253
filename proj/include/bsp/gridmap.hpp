#pragma once

// Occupancy grid, DDA ray casting, exact Euclidean distance transform and
// covariance-normalized obstacle distance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "bsp/lie_se2.hpp"

namespace bsp {

enum class Cell : std::uint8_t { Free, Occupied, Unknown };

class OccupancyGrid {
 public:
  OccupancyGrid() = default;

  OccupancyGrid(int width, int height, double resolution, Vec2 origin,
                std::vector<Cell> cells)
      : width_(width), height_(height), resolution_(resolution), origin_(origin),
        cells_(std::move(cells)) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("grid dimensions must be positive");
    if (!(resolution > 0.0)) throw std::invalid_argument("grid resolution must be positive");
    if (cells_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw std::invalid_argument("cell count does not match width*height");
    }
  }

  OccupancyGrid(int width, int height, double resolution, Vec2 origin = Vec2::Zero())
      : OccupancyGrid(width, height, resolution, origin,
                      std::vector<Cell>(static_cast<std::size_t>(std::max(width, 0)) *
                                            static_cast<std::size_t>(std::max(height, 0)),
                                        Cell::Free)) {}

  int width() const { return width_; }
  int height() const { return height_; }
  double resolution() const { return resolution_; }
  const Vec2& origin() const { return origin_; }
  const std::vector<Cell>& cells() const { return cells_; }

  bool in_bounds(int ix, int iy) const { return ix >= 0 && iy >= 0 && ix < width_ && iy < height_; }

  Cell at(int ix, int iy) const { return cells_[index(ix, iy)]; }
  void set(int ix, int iy, Cell c) { cells_[index(ix, iy)] = c; }

  /// Half-open cells: x in [i*res, (i+1)*res) belongs to column i.
  int column_of(double x) const { return static_cast<int>(std::floor((x - origin_.x()) / resolution_)); }
  int row_of(double y) const { return static_cast<int>(std::floor((y - origin_.y()) / resolution_)); }

  bool contains(const Vec2& p) const { return in_bounds(column_of(p.x()), row_of(p.y())); }

  Vec2 cell_center(int ix, int iy) const {
    return origin_ + resolution_ * Vec2(ix + 0.5, iy + 0.5);
  }

  double diagonal() const { return std::hypot(width_, height_) * resolution_; }

  bool operator==(const OccupancyGrid&) const = default;

 private:
  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(ix);
  }

  int width_ = 0;
  int height_ = 0;
  double resolution_ = 1.0;
  Vec2 origin_ = Vec2::Zero();
  std::vector<Cell> cells_;
};

// ---------------------------------------------------------------------------
// Text map format
//
//   OCCGRID v1
//   width height resolution origin_x origin_y
//   <height rows of width chars from {'.', '#', '?'}>, first row is y-min

inline OccupancyGrid read_grid(std::istream& in) {
  auto fail = [](int line, const std::string& what) {
    throw std::runtime_error("map line " + std::to_string(line) + ": " + what);
  };
  std::string line;
  if (!std::getline(in, line)) fail(1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "OCCGRID v1") fail(1, "expected 'OCCGRID v1'");

  if (!std::getline(in, line)) fail(2, "missing dimensions");
  std::istringstream dims(line);
  long long w = 0, h = 0;
  double res = 0, ox = 0, oy = 0;
  if (!(dims >> w >> h >> res >> ox >> oy)) fail(2, "expected 'width height resolution origin_x origin_y'");
  std::string extra;
  if (dims >> extra) fail(2, "trailing tokens after dimensions");
  if (w <= 0 || h <= 0 || w > 100000 || h > 100000) fail(2, "malformed dimensions");
  if (!(res > 0.0) || !std::isfinite(res)) fail(2, "resolution must be positive");

  std::vector<Cell> cells(static_cast<std::size_t>(w * h));
  for (long long row = 0; row < h; ++row) {
    const int lineno = static_cast<int>(row) + 3;
    if (!std::getline(in, line)) fail(lineno, "missing map row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (static_cast<long long>(line.size()) != w) {
      fail(lineno, "row has " + std::to_string(line.size()) + " cells, expected " + std::to_string(w));
    }
    for (long long col = 0; col < w; ++col) {
      Cell c;
      switch (line[static_cast<std::size_t>(col)]) {
        case '.': c = Cell::Free; break;
        case '#': c = Cell::Occupied; break;
        case '?': c = Cell::Unknown; break;
        default: fail(lineno, std::string("invalid cell character '") + line[static_cast<std::size_t>(col)] + "'");
      }
      cells[static_cast<std::size_t>(row * w + col)] = c;
    }
  }
  while (std::getline(in, line)) {
    if (!line.empty() && line != "\r") fail(static_cast<int>(h) + 3, "extra rows after map");
  }
  return {static_cast<int>(w), static_cast<int>(h), res, Vec2(ox, oy), std::move(cells)};
}

inline void write_grid(std::ostream& out, const OccupancyGrid& g) {
  out << "OCCGRID v1\n";
  std::ostringstream dims;
  dims.precision(17);
  dims << g.width() << ' ' << g.height() << ' ' << g.resolution() << ' ' << g.origin().x() << ' '
       << g.origin().y();
  out << dims.str() << '\n';
  for (int iy = 0; iy < g.height(); ++iy) {
    std::string row(static_cast<std::size_t>(g.width()), '.');
    for (int ix = 0; ix < g.width(); ++ix) {
      const Cell c = g.at(ix, iy);
      row[static_cast<std::size_t>(ix)] = c == Cell::Occupied ? '#' : (c == Cell::Unknown ? '?' : '.');
    }
    out << row << '\n';
  }
}

// ---------------------------------------------------------------------------
// Ray casting

inline bool blocks_ray(Cell c, bool unknown_blocks) {
  return c == Cell::Occupied || (unknown_blocks && c == Cell::Unknown);
}

/// Range along a beam at `beam_angle` in the pose frame to the first blocking
/// cell boundary, or `r_max` if nothing blocks within `r_max`. Amanatides-Woo
/// traversal; leaving the grid counts as no hit.
inline double ray_cast(const OccupancyGrid& grid, const Pose& pose, double beam_angle, double r_max,
                       bool unknown_blocks = false) {
  const double res = grid.resolution();
  const double gx = (pose.x() - grid.origin().x()) / res;
  const double gy = (pose.y() - grid.origin().y()) / res;
  int ix = static_cast<int>(std::floor(gx));
  int iy = static_cast<int>(std::floor(gy));
  if (!grid.in_bounds(ix, iy) || !std::isfinite(gx) || !std::isfinite(gy)) {
    throw std::out_of_range("pose out of map");
  }
  if (blocks_ray(grid.at(ix, iy), unknown_blocks)) return 0.0;

  const double a = pose.theta + beam_angle;
  const double dx = std::cos(a), dy = std::sin(a);
  constexpr double inf = std::numeric_limits<double>::infinity();

  const int step_x = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int step_y = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
  double t_max_x = dx > 0 ? (ix + 1 - gx) / dx : (dx < 0 ? (gx - ix) / -dx : inf);
  double t_max_y = dy > 0 ? (iy + 1 - gy) / dy : (dy < 0 ? (gy - iy) / -dy : inf);
  const double t_delta_x = step_x != 0 ? 1.0 / std::abs(dx) : inf;
  const double t_delta_y = step_y != 0 ? 1.0 / std::abs(dy) : inf;
  const double t_limit = r_max / res;

  while (true) {
    double t;
    if (t_max_x < t_max_y) {
      t = t_max_x;
      ix += step_x;
      t_max_x += t_delta_x;
    } else {
      t = t_max_y;
      iy += step_y;
      t_max_y += t_delta_y;
    }
    if (t >= t_limit) return r_max;
    if (!grid.in_bounds(ix, iy)) return r_max;
    if (blocks_ray(grid.at(ix, iy), unknown_blocks)) return t * res;
  }
}

// ---------------------------------------------------------------------------
// Distance field

inline bool blocks_robot(Cell c, bool unknown_as_occupied) {
  return c == Cell::Occupied || (unknown_as_occupied && c == Cell::Unknown);
}

class DistanceField {
 public:
  DistanceField() = default;
  DistanceField(int width, int height, double resolution, Vec2 origin, std::vector<double> d)
      : width_(width), height_(height), resolution_(resolution), origin_(origin), dist_(std::move(d)) {}

  int width() const { return width_; }
  int height() const { return height_; }
  double resolution() const { return resolution_; }
  const std::vector<double>& values() const { return dist_; }

  /// Distance (m) from the center of cell (ix, iy) to the nearest blocking cell center.
  double at(int ix, int iy) const {
    return dist_[static_cast<std::size_t>(iy) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(ix)];
  }

  /// Bilinear interpolation between cell centers, clamped at the border.
  double interpolate(const Vec2& p) const {
    const double fx = (p.x() - origin_.x()) / resolution_ - 0.5;
    const double fy = (p.y() - origin_.y()) / resolution_ - 0.5;
    const double cx = std::clamp(fx, 0.0, static_cast<double>(width_ - 1));
    const double cy = std::clamp(fy, 0.0, static_cast<double>(height_ - 1));
    const int x0 = std::min(static_cast<int>(std::floor(cx)), std::max(width_ - 2, 0));
    const int y0 = std::min(static_cast<int>(std::floor(cy)), std::max(height_ - 2, 0));
    const int x1 = std::min(x0 + 1, width_ - 1);
    const int y1 = std::min(y0 + 1, height_ - 1);
    const double tx = cx - x0, ty = cy - y0;
    const double top = (1 - tx) * at(x0, y1) + tx * at(x1, y1);
    const double bottom = (1 - tx) * at(x0, y0) + tx * at(x1, y0);
    return (1 - ty) * bottom + ty * top;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  double resolution_ = 1.0;
  Vec2 origin_ = Vec2::Zero();
  std::vector<double> dist_;
};

namespace detail {

// Felzenszwalb-Huttenlocher lower envelope of parabolas over squared
// distances; infinite entries are skipped. Exact for integer inputs.
inline void squared_edt_1d(const std::vector<double>& f, std::vector<double>& out,
                           std::vector<int>& v, std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(f.size());
  auto at = [](auto& c, int i) -> auto& { return c[static_cast<std::size_t>(i)]; };
  auto intersect = [&](int p, int q) {
    return ((at(f, q) + double(q) * q) - (at(f, p) + double(p) * p)) / (2.0 * (q - p));
  };
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (at(f, q) == inf) continue;
    double s = -inf;
    while (k >= 0) {
      s = intersect(at(v, k), q);
      if (s <= at(z, k)) {
        --k;
      } else {
        break;
      }
    }
    if (k < 0) {
      k = 0;
      at(v, 0) = q;
      at(z, 0) = -inf;
    } else {
      ++k;
      at(v, k) = q;
      at(z, k) = s;
    }
    at(z, k + 1) = inf;
  }
  if (k < 0) {
    std::fill(out.begin(), out.end(), inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (at(z, j + 1) < q) ++j;
    const int p = at(v, j);
    at(out, q) = double(q - p) * (q - p) + at(f, p);
  }
}

}  // namespace detail

/// Exact Euclidean distance transform over cell centers. A grid without any
/// blocking cell stores the grid diagonal everywhere.
inline DistanceField build_distance_field(const OccupancyGrid& grid, bool treat_unknown_as_occupied) {
  const int w = grid.width(), h = grid.height();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> sq(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), inf);
  bool any = false;
  for (int iy = 0; iy < h; ++iy) {
    for (int ix = 0; ix < w; ++ix) {
      if (blocks_robot(grid.at(ix, iy), treat_unknown_as_occupied)) {
        sq[static_cast<std::size_t>(iy) * w + ix] = 0.0;
        any = true;
      }
    }
  }
  if (!any) {
    return {w, h, grid.resolution(), grid.origin(),
            std::vector<double>(sq.size(), grid.diagonal())};
  }

  const int n = std::max(w, h);
  std::vector<double> f(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);

  // Columns first.
  f.resize(static_cast<std::size_t>(h));
  out.resize(static_cast<std::size_t>(h));
  for (int ix = 0; ix < w; ++ix) {
    for (int iy = 0; iy < h; ++iy) f[static_cast<std::size_t>(iy)] = sq[static_cast<std::size_t>(iy) * w + ix];
    detail::squared_edt_1d(f, out, v, z);
    for (int iy = 0; iy < h; ++iy) sq[static_cast<std::size_t>(iy) * w + ix] = out[static_cast<std::size_t>(iy)];
  }
  f.resize(static_cast<std::size_t>(w));
  out.resize(static_cast<std::size_t>(w));
  for (int iy = 0; iy < h; ++iy) {
    for (int ix = 0; ix < w; ++ix) f[static_cast<std::size_t>(ix)] = sq[static_cast<std::size_t>(iy) * w + ix];
    detail::squared_edt_1d(f, out, v, z);
    for (int ix = 0; ix < w; ++ix) sq[static_cast<std::size_t>(iy) * w + ix] = out[static_cast<std::size_t>(ix)];
  }

  std::vector<double> d(sq.size());
  for (std::size_t i = 0; i < sq.size(); ++i) d[i] = std::sqrt(sq[i]) * grid.resolution();
  return {w, h, grid.resolution(), grid.origin(), std::move(d)};
}

/// Marks every cell whose center lies closer than `radius` to a blocking cell
/// center as occupied. Unknown cells that block stay as they are.
inline OccupancyGrid inflate(const OccupancyGrid& grid, double radius, bool treat_unknown_as_occupied) {
  if (!(radius > 0.0)) return grid;
  const DistanceField d = build_distance_field(grid, treat_unknown_as_occupied);
  OccupancyGrid out = grid;
  for (int iy = 0; iy < grid.height(); ++iy) {
    for (int ix = 0; ix < grid.width(); ++ix) {
      if (grid.at(ix, iy) == Cell::Free && d.at(ix, iy) < radius) out.set(ix, iy, Cell::Occupied);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Covariance-normalized obstacle distance

/// Blocking cells bucketed by row for windowed queries.
class ObstacleIndex {
 public:
  ObstacleIndex() = default;
  ObstacleIndex(const OccupancyGrid& grid, bool treat_unknown_as_occupied)
      : resolution_(grid.resolution()), origin_(grid.origin()),
        rows_(static_cast<std::size_t>(grid.height())) {
    for (int iy = 0; iy < grid.height(); ++iy) {
      for (int ix = 0; ix < grid.width(); ++ix) {
        if (blocks_robot(grid.at(ix, iy), treat_unknown_as_occupied)) {
          rows_[static_cast<std::size_t>(iy)].push_back(ix);
        }
      }
    }
  }

  double resolution() const { return resolution_; }

  /// Visits the center of every blocking cell whose center lies within
  /// `radius` of `p`.
  template <class Visitor>
  void for_each_within(const Vec2& p, double radius, Visitor&& visit) const {
    const double gx = (p.x() - origin_.x()) / resolution_ - 0.5;
    const double gy = (p.y() - origin_.y()) / resolution_ - 0.5;
    const double rc = radius / resolution_;
    const int y_lo = std::max(0, static_cast<int>(std::ceil(gy - rc)));
    const int y_hi = std::min(static_cast<int>(rows_.size()) - 1, static_cast<int>(std::floor(gy + rc)));
    const double r2 = radius * radius;
    for (int iy = y_lo; iy <= y_hi; ++iy) {
      const auto& cols = rows_[static_cast<std::size_t>(iy)];
      if (cols.empty()) continue;
      const double dy = (iy - gy);
      const double half = std::sqrt(std::max(0.0, rc * rc - dy * dy));
      const int x_lo = static_cast<int>(std::ceil(gx - half));
      const int x_hi = static_cast<int>(std::floor(gx + half));
      auto it = std::lower_bound(cols.begin(), cols.end(), x_lo);
      for (; it != cols.end() && *it <= x_hi; ++it) {
        const Vec2 c = origin_ + resolution_ * Vec2(*it + 0.5, iy + 0.5);
        if ((c - p).squaredNorm() <= r2) visit(c);
      }
    }
  }

 private:
  double resolution_ = 1.0;
  Vec2 origin_ = Vec2::Zero();
  std::vector<std::vector<int>> rows_;
};

/// Search radius used by min_mahalanobis_to_occupied.
inline double mahalanobis_search_radius(const Mat2& pos_cov, double resolution) {
  const double lmax = Eigen::SelfAdjointEigenSolver<Mat2>(pos_cov, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  return std::max(5.0 * std::sqrt(std::max(lmax, 0.0)), 10.0 * resolution);
}

/// min over blocking cell centers c within the search radius of
/// sqrt((p - c)^T cov^-1 (p - c)); +inf when none is in range.
inline double min_mahalanobis_to_occupied(const ObstacleIndex& index, const Vec2& position, const Mat2& pos_cov) {
  const Mat2 sym = 0.5 * (pos_cov + pos_cov.transpose());
  Eigen::LLT<Mat2> llt(sym);
  if (llt.info() != Eigen::Success || !(sym.determinant() > 0.0)) {
    throw std::invalid_argument("degenerate covariance");
  }
  const Mat2 info = llt.solve(Mat2::Identity());
  double best = std::numeric_limits<double>::infinity();
  index.for_each_within(position, mahalanobis_search_radius(sym, index.resolution()), [&](const Vec2& c) {
    const Vec2 d = position - c;
    best = std::min(best, d.dot(info * d));
  });
  return std::sqrt(best);
}

inline double min_mahalanobis_to_occupied(const OccupancyGrid& grid, const Vec2& position, const Mat2& pos_cov,
                                          bool treat_unknown_as_occupied = true) {
  return min_mahalanobis_to_occupied(ObstacleIndex(grid, treat_unknown_as_occupied), position, pos_cov);
}

}  // namespace bsp
