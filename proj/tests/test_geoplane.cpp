#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rfloss/common.hpp"
#include "rfloss/geoplane.hpp"

using namespace rfloss;
using geoplane::Point;
using geoplane::Polygon;

namespace {

Polygon rect(double x0, double y0, double x1, double y1) {
  return Polygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

// same region as rect() but with a redundant edge midpoint so the
// axis-aligned fast path is bypassed and the quasi-random estimator runs
Polygon rect5(double x0, double y0, double x1, double y1) {
  return Polygon({{x0, y0}, {0.5 * (x0 + x1), y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

}  // namespace

TEST_CASE("footprint metrics on reference shapes") {
  auto m = geoplane::footprintMetrics(rect(0, 0, 1, 1));
  CHECK(m.area == doctest::Approx(1.0));
  CHECK(m.perimeter == doctest::Approx(4.0));
  CHECK(m.compactness == doctest::Approx(2.0 * std::sqrt(M_PI) / 4.0).epsilon(1e-9));
  CHECK(m.vertex_count == 4);

  std::vector<Point> circle;
  for (int i = 0; i < 4096; ++i) {
    double a = 2.0 * M_PI * i / 4096;
    circle.push_back({std::cos(a), std::sin(a)});
  }
  CHECK(geoplane::footprintMetrics(Polygon(circle)).compactness ==
        doctest::Approx(1.0).epsilon(1e-3));

  auto thin = geoplane::footprintMetrics(rect(0, 0, 10, 0.1));
  CHECK(thin.area == doctest::Approx(1.0));
  CHECK(thin.perimeter == doctest::Approx(20.2));
  CHECK(thin.compactness == doctest::Approx(2.0 * std::sqrt(M_PI) / 20.2).epsilon(1e-6));
}

TEST_CASE("compactness is translation, rotation and scale invariant") {
  std::vector<Point> base = {{0, 0}, {3, 0}, {4, 2}, {1, 3}};
  auto m0 = geoplane::footprintMetrics(Polygon(base));
  const double c = std::cos(0.7), s = std::sin(0.7);
  std::vector<Point> moved, scaled;
  for (auto p : base) {
    moved.push_back({c * p.x - s * p.y + 17.0, s * p.x + c * p.y - 5.0});
    scaled.push_back({3.5 * p.x, 3.5 * p.y});
  }
  auto m1 = geoplane::footprintMetrics(Polygon(moved));
  auto m2 = geoplane::footprintMetrics(Polygon(scaled));
  CHECK(m1.area == doctest::Approx(m0.area).epsilon(1e-9));
  CHECK(m1.compactness == doctest::Approx(m0.compactness).epsilon(1e-9));
  CHECK(m2.compactness == doctest::Approx(m0.compactness).epsilon(1e-9));
}

TEST_CASE("degenerate polygons are rejected") {
  CHECK_THROWS_AS(Polygon({{0, 0}, {1, 1}}), DegenerateGeometry);
  CHECK_THROWS_AS(Polygon({{0, 0}, {1, 1}, {2, 2}}), DegenerateGeometry);
  CHECK_THROWS_AS(Polygon({{0, 0}, {1, 1}, {1, 0}, {0, 1}}), DegenerateGeometry);
}

TEST_CASE("point containment with boundary counted inside") {
  auto sq = rect(0, 0, 1, 1);
  CHECK(geoplane::containsPoint(sq, {0.5, 0.5}));
  CHECK_FALSE(geoplane::containsPoint(sq, {2, 2}));
  CHECK(geoplane::containsPoint(sq, {1.0, 0.5}));

  Polygon holed({{0, 0}, {10, 0}, {10, 10}, {0, 10}},
                {{{4, 4}, {6, 4}, {6, 6}, {4, 6}}});
  CHECK(geoplane::containsPoint(holed, {1, 1}));
  CHECK_FALSE(geoplane::containsPoint(holed, {5, 5}));
}

TEST_CASE("gaussian overlap limit and symmetry cases") {
  auto big = rect(0, 0, 100, 100);
  CHECK(geoplane::gaussianOverlap({{50, 50}, 0.01}, big, 4096) ==
        doctest::Approx(1.0).epsilon(0.001));
  // mean on the straight edge of a huge rectangle: half the mass inside
  auto half = rect(0, -500, 1000, 500);
  CHECK(geoplane::gaussianOverlap({{0, 0}, 1.0}, half, 4096) ==
        doctest::Approx(0.5).epsilon(0.04));
  double got = geoplane::gaussianOverlap({{0, 5}, 2.0}, rect5(0, 0, 10, 10), 4096);
  CHECK(std::fabs(got - oracles::rectOverlap(0, 0, 10, 10, 0, 5, 2)) <= 0.02);
}

TEST_CASE("gaussian overlap matches the analytic rectangle oracle") {
  Rng rng(99);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    double x0 = rng.uniform(-50, 50), y0 = rng.uniform(-50, 50);
    double w = rng.uniform(5, 60), h = rng.uniform(5, 60);
    double mx = rng.uniform(x0 - 20, x0 + w + 20);
    double my = rng.uniform(y0 - 20, y0 + h + 20);
    double sigma = rng.uniform(1, 12);
    // alternate between the exact fast path and the estimator path
    Polygon poly = (i % 2 == 0) ? rect(x0, y0, x0 + w, y0 + h)
                                : rect5(x0, y0, x0 + w, y0 + h);
    double got = geoplane::gaussianOverlap({{mx, my}, sigma}, poly, 4096);
    double want = oracles::rectOverlap(x0, y0, x0 + w, y0 + h, mx, my, sigma);
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
    worst = std::max(worst, std::fabs(got - want));
  }
  CHECK(worst <= 0.02);
}

TEST_CASE("gaussian overlap is deterministic for a fixed seed") {
  auto poly = rect5(0, 0, 13, 7);
  double a = geoplane::gaussianOverlap({{2, 3}, 4.0}, poly, 2048);
  double b = geoplane::gaussianOverlap({{2, 3}, 4.0}, poly, 2048);
  CHECK(a == b);
}

TEST_CASE("boundary distance gives interior depth") {
  auto sq = rect(0, 0, 10, 10);
  CHECK(geoplane::boundaryDistance(sq, {5, 5}) == doctest::Approx(5.0));
  CHECK(geoplane::boundaryDistance(sq, {1, 5}) == doctest::Approx(1.0));
  CHECK(geoplane::boundaryDistance(sq, {13, 14}) == doctest::Approx(5.0));
  CHECK(geoplane::boundaryDistance(sq, {10, 10}) == doctest::Approx(0.0));
}
