#include <sika/dyadic_grid.hpp>
#include <sika/errors.hpp>

#include <doctest.h>

#include <cmath>

using namespace sika;

TEST_CASE("grid size and point order") {
  const DyadicGrid g(3);
  CHECK(g.size() == 9);
  CHECK(grid_size(10) == 1025);
  const std::vector<double> expected{0, 1, 0.5, 0.25, 0.75, 0.125, 0.375, 0.625, 0.875};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(g.points()(static_cast<Eigen::Index>(i)) == expected[i]);
  }
}

TEST_CASE("positions follow level blocks") {
  const DyadicGrid g(4);
  CHECK(g.position(1, 1) == 2);
  CHECK(g.position(2, 1) == 3);
  CHECK(g.position(2, 3) == 4);
  CHECK(g.position(3, 1) == 5);
  CHECK(g.position(4, 15) == 16);
  CHECK_THROWS_AS(g.position(2, 2), ParameterError);
  CHECK_THROWS_AS(g.position(5, 1), ParameterError);
  CHECK_THROWS_AS(g.position(0, 1), ParameterError);
}

TEST_CASE("level_index inverts position") {
  const DyadicGrid g(6);
  CHECK(g.level_index(0) == LevelIndex{0, 0});
  CHECK(g.level_index(1) == LevelIndex{0, 1});
  for (int l = 1; l <= 6; ++l) {
    for (long long m = 1; m < (1LL << l); m += 2) {
      const Eigen::Index p = g.position(l, m);
      CHECK(g.level_index(p) == LevelIndex{l, m});
      CHECK(g.points()(p) == std::ldexp(static_cast<double>(m), -l));
    }
  }
}

TEST_CASE("level range is enforced") {
  CHECK_THROWS_AS(DyadicGrid(0), ParameterError);
  CHECK_THROWS_AS(DyadicGrid(kMaxLevel + 1), ParameterError);
  CHECK(build_grid(1).size() == 3);
}
