#pragma once

// Generated fixture maps.

#include <cstdint>
#include <random>

#include "bsp/gridmap.hpp"

namespace bsp {

/// Free interior enclosed by one-cell perimeter walls.
inline OccupancyGrid boundary_map(int width = 100, int height = 100, double resolution = 0.1) {
  OccupancyGrid g(width, height, resolution);
  for (int ix = 0; ix < width; ++ix) {
    g.set(ix, 0, Cell::Occupied);
    g.set(ix, height - 1, Cell::Occupied);
  }
  for (int iy = 0; iy < height; ++iy) {
    g.set(0, iy, Cell::Occupied);
    g.set(width - 1, iy, Cell::Occupied);
  }
  return g;
}

inline void fill_rect(OccupancyGrid& g, int x0, int y0, int x1, int y1, Cell c) {
  for (int iy = std::max(0, y0); iy < std::min(g.height(), y1); ++iy) {
    for (int ix = std::max(0, x0); ix < std::min(g.width(), x1); ++ix) g.set(ix, iy, c);
  }
}

/// A room on the left opening through a narrow doorway into a corridor
/// lined with pillars, with an unknown patch beyond the corridor's wall.
/// Dimensions in cells at 0.1 m.
inline OccupancyGrid corridor_map(std::uint64_t seed = 7) {
  constexpr int w = 120, h = 60;
  OccupancyGrid g = boundary_map(w, h, 0.1);
  // Room/corridor divider with a doorway at y in [2.4, 3.6) m.
  fill_rect(g, 40, 0, 42, 24, Cell::Occupied);
  fill_rect(g, 40, 36, 42, h, Cell::Occupied);
  // Corridor walls: y in [1.6, 4.4) m is free, the rest of the right side is blocked.
  fill_rect(g, 42, 0, w, 16, Cell::Occupied);
  fill_rect(g, 42, 44, w, h, Cell::Occupied);
  fill_rect(g, 60, 48, 100, 56, Cell::Unknown);
  // Staggered pillars inside the corridor.
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> jitter(-2, 2);
  for (int k = 0; k < 4; ++k) {
    const int cx = 55 + 16 * k + jitter(rng);
    const bool low = k % 2 == 0;
    if (low) {
      fill_rect(g, cx, 16, cx + 3, 19, Cell::Occupied);
    } else {
      fill_rect(g, cx, 41, cx + 3, 44, Cell::Occupied);
    }
  }
  return g;
}

}  // namespace bsp
