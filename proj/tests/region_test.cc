#include <doctest.h>

#include <random>

#include "oracles.h"
#include "partatlas/error.h"
#include "partatlas/region.h"

using namespace partatlas;

TEST_CASE("degenerate boxes are rejected") {
  CHECK_THROWS_AS(Region(0, 0, 0, 1), InvalidInput);
  CHECK_THROWS_AS(Region(0, 0, 1, -1), InvalidInput);
  CHECK_THROWS_AS(Region(2, 0, 1, 1), InvalidInput);
  CHECK_NOTHROW(Region(0, 0, 1e-6, 1e-6));
}

TEST_CASE("iou agrees with the corner formula") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 2000; ++t) {
    const Region a = oracle::random_box(rng, 10, 0.1);
    const Region b = oracle::random_box(rng, 10, 0.1);
    CHECK(iou(a, b) == doctest::Approx(oracle::box_iou(a, b)).epsilon(1e-12));
    CHECK(iou(a, b) == iou(b, a));
  }
}

TEST_CASE("iou of hand-worked pairs") {
  CHECK(iou(Region(0, 0, 2, 2), Region(1, 1, 3, 3)) == doctest::Approx(1.0 / 7));
  CHECK(iou(Region(0, 0, 1, 1), Region(1, 0, 2, 1)) == 0.0);
  CHECK(iou(Region(0, 0, 4, 4), Region(0, 0, 4, 4)) == 1.0);
  CHECK(iou(Region(0, 0, 4, 4), Region(1, 1, 3, 3)) == doctest::Approx(0.25));
}

TEST_CASE("context region doubles the sides about the center and clips") {
  const Region c = context_region(Region(40, 40, 60, 60), 2.0, 100, 100);
  CHECK(c == Region(30, 30, 70, 70));
  const Region clipped = context_region(Region(0, 0, 20, 10), 2.0, 100, 100);
  CHECK(clipped == Region(0, 0, 30, 15));
  const Region full = context_region(Region(0, 0, 100, 100), 2.0, 100, 100);
  CHECK(full == Region(0, 0, 100, 100));
}

TEST_CASE("similarity transform scales both corners") {
  const Region r(1, 2, 3, 5);
  const Region t = r.transformed(2.0, 10, -1);
  CHECK(t == Region(12, 3, 16, 9));
  CHECK(t.area() == doctest::Approx(4 * r.area()));
  CHECK(r.max_side() == 3);
}
