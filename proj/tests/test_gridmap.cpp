#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "bsp/gridmap.hpp"
#include "bsp/maps.hpp"
#include "oracles.hpp"

using namespace bsp;
using namespace bsp::oracle;

TEST(GridMap, RejectsBadDimensions) {
  EXPECT_THROW(OccupancyGrid(0, 3, 0.1), std::invalid_argument);
  EXPECT_THROW(OccupancyGrid(3, 3, 0.0), std::invalid_argument);
  EXPECT_THROW(OccupancyGrid(2, 2, 0.1, Vec2::Zero(), std::vector<Cell>(3)), std::invalid_argument);
}

TEST(GridMap, HalfOpenCells) {
  OccupancyGrid g(10, 10, 0.5);
  EXPECT_EQ(g.column_of(0.0), 0);
  EXPECT_EQ(g.column_of(0.4999), 0);
  EXPECT_EQ(g.column_of(0.5), 1);
  EXPECT_FALSE(g.contains(Vec2(5.0, 1.0)));
  EXPECT_TRUE(g.contains(Vec2(4.999, 1.0)));
}

TEST(GridMap, TextRoundTrip) {
  std::mt19937_64 rng(4);
  const OccupancyGrid g = random_grid(rng, 13, 7, 0.25, 0.2, 0.1);
  std::stringstream ss;
  write_grid(ss, g);
  EXPECT_EQ(read_grid(ss), g);
}

TEST(GridMap, ReaderReportsLine) {
  std::stringstream bad("OCCGRID v1\n3 2 0.1 0 0\n...\n.x.\n");
  try {
    read_grid(bad);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
  std::stringstream short_rows("OCCGRID v1\n3 2 0.1 0 0\n...\n");
  EXPECT_THROW(read_grid(short_rows), std::runtime_error);
  std::stringstream bad_dims("OCCGRID v1\n-3 2 0.1 0 0\n");
  EXPECT_THROW(read_grid(bad_dims), std::runtime_error);
}

TEST(RayCast, EmptyGridReturnsRange) {
  OccupancyGrid g(100, 100, 0.1);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> pos(0.5, 9.5), ang(-3.0, 3.0);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(ray_cast(g, Pose(pos(rng), pos(rng), ang(rng)), ang(rng), 2.0), 2.0);
}

TEST(RayCast, WallAhead) {
  OccupancyGrid g(100, 100, 0.1);
  for (int iy = 0; iy < 100; ++iy) {
    for (int ix = 20; ix < 100; ++ix) g.set(ix, iy, Cell::Occupied);
  }
  EXPECT_NEAR(ray_cast(g, Pose(1.0, 1.0, 0.0), 0.0, 5.0), 1.0, 0.1);
  EXPECT_NEAR(ray_cast(g, Pose(1.0, 1.0, 0.0), std::numbers::pi / 4, 5.0), std::sqrt(2.0), 0.1);
}

TEST(RayCast, PoseOutOfMap) {
  OccupancyGrid g(10, 10, 0.1);
  EXPECT_THROW(ray_cast(g, Pose(-0.1, 0.5, 0.0), 0.0, 1.0), std::out_of_range);
  try {
    ray_cast(g, Pose(2.0, 0.5, 0.0), 0.0, 1.0);
  } catch (const std::out_of_range& e) {
    EXPECT_STREQ(e.what(), "pose out of map");
  }
}

TEST(RayCast, MatchesMarchingOracle) {
  const auto check = ray_cast_check();
  EXPECT_EQ(check.scenes, 200);
  EXPECT_LE(check.worst_excess, 0.0);
}

TEST(RayCast, MonotoneInRange) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const OccupancyGrid g = random_grid(rng, 40, 40, 0.1, 0.05);
  for (int i = 0; i < 100; ++i) {
    const Pose p(g.origin().x() + 4 * u(rng), g.origin().y() + 4 * u(rng), 6 * u(rng));
    const double a = 6 * u(rng);
    const double r1 = ray_cast(g, p, a, 1.0), r2 = ray_cast(g, p, a, 2.0);
    EXPECT_LE(r1, r2);
    if (r1 < 1.0) EXPECT_DOUBLE_EQ(r1, r2);
  }
}

TEST(RayCast, SubdividedGridAgrees) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int s = 0; s < 30; ++s) {
    const OccupancyGrid coarse = random_grid(rng, 30, 30, 0.2, 0.05);
    OccupancyGrid fine(60, 60, 0.1, coarse.origin());
    for (int iy = 0; iy < 60; ++iy) {
      for (int ix = 0; ix < 60; ++ix) fine.set(ix, iy, coarse.at(ix / 2, iy / 2));
    }
    const Pose p(coarse.origin().x() + 6 * u(rng), coarse.origin().y() + 6 * u(rng), 6 * u(rng));
    const double a = 6 * u(rng);
    EXPECT_LE(std::abs(ray_cast(coarse, p, a, 3.0) - ray_cast(fine, p, a, 3.0)), 0.2);
  }
}

TEST(RayCast, UnknownCellsFreeByDefault) {
  OccupancyGrid g(50, 10, 0.1);
  for (int iy = 0; iy < 10; ++iy) g.set(20, iy, Cell::Unknown);
  EXPECT_EQ(ray_cast(g, Pose(0.55, 0.55, 0.0), 0.0, 3.0), 3.0);
  EXPECT_NEAR(ray_cast(g, Pose(0.55, 0.55, 0.0), 0.0, 3.0, true), 1.45, 1e-9);
}

TEST(DistanceField, AllFreeUsesDiagonal) {
  OccupancyGrid g(7, 5, 0.2);
  const DistanceField d = build_distance_field(g, true);
  for (double v : d.values()) EXPECT_DOUBLE_EQ(v, g.diagonal());
}

TEST(DistanceField, SingleCellClosedForm) {
  OccupancyGrid g(9, 6, 0.5);
  g.set(3, 2, Cell::Occupied);
  const DistanceField d = build_distance_field(g, true);
  for (int iy = 0; iy < 6; ++iy) {
    for (int ix = 0; ix < 9; ++ix) EXPECT_DOUBLE_EQ(d.at(ix, iy), std::hypot(ix - 3, iy - 2) * 0.5);
  }
}

TEST(DistanceField, MatchesBruteForceExactly) { EXPECT_EQ(distance_field_mismatches(), 0); }

TEST(DistanceField, BoundaryMapSpotValues) {
  const OccupancyGrid g = boundary_map();
  const DistanceField d = build_distance_field(g, true);
  EXPECT_DOUBLE_EQ(d.at(0, 50), 0.0);
  EXPECT_DOUBLE_EQ(d.at(10, 50), 1.0);
  EXPECT_NEAR(d.interpolate(Vec2(5.0, 5.0)), 4.9 - 0.0, 0.1);
}

TEST(DistanceField, LipschitzBound) {
  std::mt19937_64 rng(3);
  const OccupancyGrid g = random_grid(rng, 40, 30, 0.1, 0.05);
  const DistanceField d = build_distance_field(g, true);
  for (int iy = 0; iy + 1 < 30; ++iy) {
    for (int ix = 0; ix + 1 < 40; ++ix) {
      EXPECT_LE(std::abs(d.at(ix + 1, iy) - d.at(ix, iy)), 0.1 * std::sqrt(2.0) + 1e-12);
      EXPECT_LE(std::abs(d.at(ix, iy + 1) - d.at(ix, iy)), 0.1 * std::sqrt(2.0) + 1e-12);
    }
  }
}

TEST(Mahalanobis, IdentityCovarianceIsEuclidean) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const OccupancyGrid g = random_grid(rng, 40, 40, 0.1, 0.02);
  const DistanceField d = build_distance_field(g, true);
  for (int i = 0; i < 50; ++i) {
    const int ix = static_cast<int>(40 * u(rng)), iy = static_cast<int>(40 * u(rng));
    const Vec2 p = g.cell_center(ix, iy);
    const double sigma = min_mahalanobis_to_occupied(g, p, Mat2::Identity());
    if (d.at(ix, iy) <= 5.0) EXPECT_NEAR(sigma, d.at(ix, iy), 1e-12);
  }
}

TEST(Mahalanobis, ClosedFormAnisotropic) {
  OccupancyGrid g(20, 20, 1.0);
  g.set(11, 10, Cell::Occupied);
  const Vec2 p = g.cell_center(10, 10);
  EXPECT_DOUBLE_EQ(min_mahalanobis_to_occupied(g, p, Vec2(4.0, 1.0).asDiagonal()), 0.5);
}

TEST(Mahalanobis, MatchesExhaustiveScanWithinRadius) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const OccupancyGrid g = random_grid(rng, 25, 25, 0.1, 0.03);
    const ObstacleIndex index(g, true);
    const Vec2 p = g.origin() + Vec2(2.5 * u(rng), 2.5 * u(rng));
    const double a = 0.01 + 0.2 * u(rng), b = 0.01 + 0.2 * u(rng), c = (2 * u(rng) - 1) * 0.9 * std::sqrt(a * b);
    Mat2 cov;
    cov << a, c, c, b;
    const Mat2 info = cov.inverse();
    const double radius = mahalanobis_search_radius(cov, g.resolution());
    double want = std::numeric_limits<double>::infinity();
    for (int iy = 0; iy < 25; ++iy) {
      for (int ix = 0; ix < 25; ++ix) {
        if (g.at(ix, iy) != Cell::Occupied) continue;
        const Vec2 dlt = p - g.cell_center(ix, iy);
        if (dlt.norm() <= radius) want = std::min(want, std::sqrt(dlt.dot(info * dlt)));
      }
    }
    const double got = min_mahalanobis_to_occupied(index, p, cov);
    if (std::isinf(want)) {
      EXPECT_TRUE(std::isinf(got));
    } else {
      EXPECT_NEAR(got, want, 1e-12 * want);
    }
  }
}

TEST(Mahalanobis, DegenerateCovarianceThrows) {
  OccupancyGrid g(5, 5, 1.0);
  try {
    min_mahalanobis_to_occupied(g, Vec2(2, 2), Vec2(1.0, 0.0).asDiagonal());
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "degenerate covariance");
  }
}

TEST(Mahalanobis, NothingInRangeIsInfinite) {
  OccupancyGrid g(100, 100, 0.1);
  g.set(0, 0, Cell::Occupied);
  EXPECT_TRUE(std::isinf(min_mahalanobis_to_occupied(g, Vec2(8, 8), 0.01 * Mat2::Identity())));
}
