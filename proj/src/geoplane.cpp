#include "rfloss/geoplane.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rfloss {

double normQuantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw std::invalid_argument("normQuantile: p outside [0,1]");
  }
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // one Halley refinement
  double e = normCdf(x) - p;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

}  // namespace rfloss

namespace rfloss::geoplane {

namespace {

constexpr double kBoundaryEps = 1e-12;

bool segmentsIntersect(const Point& a, const Point& b, const Point& c, const Point& d) {
  auto cross = [](const Point& o, const Point& p, const Point& q) {
    return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
  };
  double d1 = cross(c, d, a);
  double d2 = cross(c, d, b);
  double d3 = cross(a, b, c);
  double d4 = cross(a, b, d);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
         ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

bool ringSelfIntersects(const std::vector<Point>& ring) {
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % n];
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;  // adjacent through the closure
      if (segmentsIntersect(a, b, ring[j], ring[(j + 1) % n])) return true;
    }
  }
  return false;
}

bool pointOnSegment(const Point& p, const Point& a, const Point& b) {
  double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
  double scale = std::max({1.0, std::fabs(a.x), std::fabs(a.y), std::fabs(b.x),
                           std::fabs(b.y)});
  if (std::fabs(cross) > kBoundaryEps * scale * scale) return false;
  double dot = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
  double len2 = (b.x - a.x) * (b.x - a.x) + (b.y - a.y) * (b.y - a.y);
  return dot >= -kBoundaryEps && dot <= len2 + kBoundaryEps;
}

bool ringContains(const std::vector<Point>& ring, const Point& pt, bool* on_boundary) {
  const std::size_t n = ring.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    if (pointOnSegment(pt, ring[j], ring[i])) {
      if (on_boundary) *on_boundary = true;
      return true;
    }
    if (((ring[i].y > pt.y) != (ring[j].y > pt.y)) &&
        (pt.x < (ring[j].x - ring[i].x) * (pt.y - ring[i].y) / (ring[j].y - ring[i].y) +
                    ring[i].x))
      inside = !inside;
  }
  return inside;
}

// Halton low-discrepancy sequence with a seeded Cranley-Patterson shift.
double halton(std::uint64_t index, std::uint64_t base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

}  // namespace

Polygon::Polygon(std::vector<Point> exterior, std::vector<std::vector<Point>> holes)
    : exterior_(std::move(exterior)), holes_(std::move(holes)) {
  // drop an explicit closing duplicate if the caller supplied one
  auto stripClosure = [](std::vector<Point>& ring) {
    if (ring.size() >= 2 && std::fabs(ring.front().x - ring.back().x) < kBoundaryEps &&
        std::fabs(ring.front().y - ring.back().y) < kBoundaryEps)
      ring.pop_back();
  };
  stripClosure(exterior_);
  for (auto& h : holes_) stripClosure(h);

  if (exterior_.size() < 3) throw DegenerateGeometry("polygon with < 3 vertices");
  if (ringArea(exterior_) <= 0.0) throw DegenerateGeometry("polygon area <= 0");
  if (ringSelfIntersects(exterior_))
    throw DegenerateGeometry("self-intersecting exterior ring");
  for (const auto& h : holes_) {
    if (h.size() < 3) throw DegenerateGeometry("hole with < 3 vertices");
    for (const auto& p : h)
      if (!ringContains(exterior_, p, nullptr))
        throw DegenerateGeometry("hole vertex outside exterior");
  }

  bbox_.min_x = bbox_.max_x = exterior_[0].x;
  bbox_.min_y = bbox_.max_y = exterior_[0].y;
  for (const auto& p : exterior_) {
    bbox_.min_x = std::min(bbox_.min_x, p.x);
    bbox_.max_x = std::max(bbox_.max_x, p.x);
    bbox_.min_y = std::min(bbox_.min_y, p.y);
    bbox_.max_y = std::max(bbox_.max_y, p.y);
  }

  if (exterior_.size() == 4 && holes_.empty()) {
    axis_rect_ = true;
    for (std::size_t i = 0; i < 4; ++i) {
      const Point& a = exterior_[i];
      const Point& b = exterior_[(i + 1) % 4];
      if (std::fabs(a.x - b.x) > kBoundaryEps && std::fabs(a.y - b.y) > kBoundaryEps) {
        axis_rect_ = false;
        break;
      }
    }
  }
}

Point Polygon::centroid() const {
  // area-weighted centroid of the exterior ring
  double cx = 0.0, cy = 0.0, a2 = 0.0;
  const std::size_t n = exterior_.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    double w = exterior_[j].x * exterior_[i].y - exterior_[i].x * exterior_[j].y;
    a2 += w;
    cx += (exterior_[j].x + exterior_[i].x) * w;
    cy += (exterior_[j].y + exterior_[i].y) * w;
  }
  return {cx / (3.0 * a2), cy / (3.0 * a2)};
}

double ringArea(const std::vector<Point>& ring) {
  double s = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++)
    s += ring[j].x * ring[i].y - ring[i].x * ring[j].y;
  return std::fabs(s) * 0.5;
}

double ringPerimeter(const std::vector<Point>& ring) {
  double s = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++)
    s += std::hypot(ring[i].x - ring[j].x, ring[i].y - ring[j].y);
  return s;
}

FootprintMetrics footprintMetrics(const Polygon& poly) {
  FootprintMetrics m;
  m.area = ringArea(poly.exterior());
  m.perimeter = ringPerimeter(poly.exterior());
  for (const auto& h : poly.holes()) {
    m.area -= ringArea(h);
    m.perimeter += ringPerimeter(h);
  }
  if (m.area <= 0.0) throw DegenerateGeometry("footprint area <= 0");
  m.compactness = 2.0 * std::sqrt(M_PI * m.area) / m.perimeter;
  m.vertex_count = static_cast<int>(poly.exterior().size());
  return m;
}

bool containsPoint(const Polygon& poly, const Point& pt) {
  if (!poly.bbox().inflated(kBoundaryEps).contains(pt)) return false;
  bool on_boundary = false;
  if (!ringContains(poly.exterior(), pt, &on_boundary)) return false;
  if (on_boundary) return true;
  for (const auto& h : poly.holes()) {
    bool on_hole_edge = false;
    if (ringContains(h, pt, &on_hole_edge)) return on_hole_edge;
  }
  return true;
}

double gaussianOverlap(const GaussianPosition& pos, const Polygon& poly, int budget,
                       std::uint64_t seed) {
  if (pos.sigma <= 0.0) throw std::invalid_argument("gaussianOverlap: sigma <= 0");
  if (budget < 256) throw std::invalid_argument("gaussianOverlap: budget < 256");

  if (poly.isAxisAlignedRect()) {
    const BoundingBox& b = poly.bbox();
    double px = normCdf((b.max_x - pos.mean.x) / pos.sigma) -
                normCdf((b.min_x - pos.mean.x) / pos.sigma);
    double py = normCdf((b.max_y - pos.mean.y) / pos.sigma) -
                normCdf((b.min_y - pos.mean.y) / pos.sigma);
    return px * py;
  }

  Rng rng(seed);
  const double shift_x = rng.uniform();
  const double shift_y = rng.uniform();
  int hits = 0;
  for (int i = 0; i < budget; ++i) {
    double u = halton(static_cast<std::uint64_t>(i) + 1, 2) + shift_x;
    double v = halton(static_cast<std::uint64_t>(i) + 1, 3) + shift_y;
    u -= std::floor(u);
    v -= std::floor(v);
    if (u <= 0.0 || u >= 1.0) u = 0.5;
    if (v <= 0.0 || v >= 1.0) v = 0.5;
    Point p{pos.mean.x + pos.sigma * normQuantile(u),
            pos.mean.y + pos.sigma * normQuantile(v)};
    if (containsPoint(poly, p)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(budget);
}

double boundaryDistance(const Polygon& poly, const Point& p) {
  const auto& ring = poly.exterior();
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point& a = ring[j];
    const Point& b = ring[i];
    double vx = b.x - a.x, vy = b.y - a.y;
    double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy)));
  }
  return best;
}

}  // namespace rfloss::geoplane
