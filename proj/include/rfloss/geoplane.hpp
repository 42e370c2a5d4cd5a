#pragma once

#include <cstdint>
#include <vector>

#include "rfloss/common.hpp"

namespace rfloss::geoplane {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct BoundingBox {
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;

  bool contains(const Point& p) const {
    return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
  }
  BoundingBox inflated(double m) const {
    return {min_x - m, min_y - m, max_x + m, max_y + m};
  }
};

// Planar polygon in local meters. Rings are stored open (no closing
// duplicate); the exterior must be non-self-intersecting with area > 0,
// holes strictly inside the exterior.
class Polygon {
 public:
  Polygon(std::vector<Point> exterior, std::vector<std::vector<Point>> holes = {});

  const std::vector<Point>& exterior() const { return exterior_; }
  const std::vector<std::vector<Point>>& holes() const { return holes_; }
  const BoundingBox& bbox() const { return bbox_; }

  // axis-aligned 4-vertex rectangle, hole-free (enables the exact
  // Gaussian-overlap fast path)
  bool isAxisAlignedRect() const { return axis_rect_; }

  Point centroid() const;

 private:
  std::vector<Point> exterior_;
  std::vector<std::vector<Point>> holes_;
  BoundingBox bbox_;
  bool axis_rect_ = false;
};

struct FootprintMetrics {
  double area = 0.0;         // m^2, holes subtracted
  double perimeter = 0.0;    // m, exterior + hole rings
  double compactness = 0.0;  // 2*sqrt(pi*A)/P, in (0, 1]
  int vertex_count = 0;      // exterior vertices, closing duplicate excluded
};

struct GaussianPosition {
  Point mean;
  double sigma = 0.0;  // isotropic std in meters, > 0
};

FootprintMetrics footprintMetrics(const Polygon& poly);

// Even-odd rule; boundary points count as inside.
bool containsPoint(const Polygon& poly, const Point& pt);

// Probability mass of N(mean, sigma^2 I) over the polygon. Exact for
// axis-aligned rectangles, otherwise a seeded Halton point set pushed
// through the Gaussian quantile; deterministic for a fixed seed.
double gaussianOverlap(const GaussianPosition& pos, const Polygon& poly,
                       int budget, std::uint64_t seed = 0x5eed);

// Distance from a point to the exterior ring (interior depth for points
// inside the polygon).
double boundaryDistance(const Polygon& poly, const Point& p);

// Shoelace area of a single ring (positive regardless of orientation).
double ringArea(const std::vector<Point>& ring);
double ringPerimeter(const std::vector<Point>& ring);

}  // namespace rfloss::geoplane
