#include "stalm/geom.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stalm::geom {
namespace {

constexpr double kDegenerateEps = 1e-9;
constexpr double kConvexityEps = 1e-12;

double clamp01(double t) { return std::clamp(t, 0.0, 1.0); }

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len_sq = ab.norm_sq();
  if (len_sq <= 0.0) {
    return (p - a).norm();
  }
  const double t = clamp01((p - a).dot(ab) / len_sq);
  return (p - (a + ab * t)).norm();
}

bool segments_intersect(const Vec2& a0, const Vec2& a1, const Vec2& b0,
                        const Vec2& b1) {
  const auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    const double c = (q - p).cross(r - p);
    if (c > 0.0) return 1;
    if (c < 0.0) return -1;
    return 0;
  };
  const auto on_segment = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return std::min(p.x, r.x) <= q.x && q.x <= std::max(p.x, r.x) &&
           std::min(p.y, r.y) <= q.y && q.y <= std::max(p.y, r.y);
  };
  const int o1 = orient(a0, a1, b0);
  const int o2 = orient(a0, a1, b1);
  const int o3 = orient(b0, b1, a0);
  const int o4 = orient(b0, b1, a1);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a0, b0, a1)) return true;
  if (o2 == 0 && on_segment(a0, b1, a1)) return true;
  if (o3 == 0 && on_segment(b0, a0, b1)) return true;
  if (o4 == 0 && on_segment(b0, a1, b1)) return true;
  return false;
}

struct Interval {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
};

Interval project(const ConvexPolygon& poly, const Vec2& axis) {
  Interval out;
  for (const Vec2& v : poly.vertices()) {
    const double d = v.dot(axis);
    out.lo = std::min(out.lo, d);
    out.hi = std::max(out.hi, d);
  }
  return out;
}

}  // namespace

double wrap_angle(double radians) {
  if (!std::isfinite(radians)) {
    throw std::invalid_argument("wrap_angle: non-finite angle");
  }
  double a = std::fmod(radians + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

double Vec2::norm() const { return std::hypot(x, y); }

Vec2 rotate(const Vec2& v, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

Pose2::Pose2(double px, double py, double ptheta)
    : x(px), y(py), theta(wrap_angle(ptheta)) {
  if (!std::isfinite(x) || !std::isfinite(y)) {
    throw std::invalid_argument("Pose2: non-finite translation");
  }
}

Vec2 Pose2::apply(const Vec2& local) const {
  return rotate(local, theta) + xy();
}

Pose2 compose(const Pose2& outer, const Pose2& inner) {
  const Vec2 t = outer.apply(inner.xy());
  return Pose2(t.x, t.y, outer.theta + inner.theta);
}

bool almost_equal(const Pose2& a, const Pose2& b, double tol) {
  return std::fabs(a.x - b.x) <= tol && std::fabs(a.y - b.y) <= tol &&
         std::fabs(wrap_angle(a.theta - b.theta)) <= tol;
}

ConvexPolygon ConvexPolygon::from_points(std::vector<Vec2> points) {
  if (points.size() < 3) {
    throw std::invalid_argument("ConvexPolygon: fewer than 3 vertices");
  }
  const std::size_t n = points.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = points[i];
    if (!std::isfinite(a.x) || !std::isfinite(a.y)) {
      throw std::invalid_argument("ConvexPolygon: non-finite vertex");
    }
    const Vec2& b = points[(i + 1) % n];
    if ((b - a).norm_sq() < kDegenerateEps * kDegenerateEps) {
      throw std::invalid_argument("ConvexPolygon: repeated vertex");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = points[i];
    const Vec2& b = points[(i + 1) % n];
    const Vec2& c = points[(i + 2) % n];
    if ((b - a).cross(c - b) <= kConvexityEps) {
      throw std::invalid_argument(
          "ConvexPolygon: vertices not strictly convex counter-clockwise");
    }
  }
  ConvexPolygon poly;
  poly.verts_ = std::move(points);
  poly.finish();
  return poly;
}

void ConvexPolygon::finish() {
  aabb_min_ = {std::numeric_limits<double>::infinity(),
               std::numeric_limits<double>::infinity()};
  aabb_max_ = {-std::numeric_limits<double>::infinity(),
               -std::numeric_limits<double>::infinity()};
  for (const Vec2& v : verts_) {
    aabb_min_.x = std::min(aabb_min_.x, v.x);
    aabb_min_.y = std::min(aabb_min_.y, v.y);
    aabb_max_.x = std::max(aabb_max_.x, v.x);
    aabb_max_.y = std::max(aabb_max_.y, v.y);
  }
}

double ConvexPolygon::area() const {
  double twice = 0.0;
  const std::size_t n = verts_.size();
  for (std::size_t i = 0; i < n; ++i) {
    twice += verts_[i].cross(verts_[(i + 1) % n]);
  }
  return 0.5 * twice;
}

Vec2 ConvexPolygon::centroid() const {
  double twice_area = 0.0;
  Vec2 acc;
  const std::size_t n = verts_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = verts_[i];
    const Vec2& b = verts_[(i + 1) % n];
    const double c = a.cross(b);
    twice_area += c;
    acc = acc + (a + b) * c;
  }
  return acc * (1.0 / (3.0 * twice_area));
}

bool ConvexPolygon::contains(const Vec2& p) const {
  if (p.x < aabb_min_.x - kConvexityEps || p.x > aabb_max_.x + kConvexityEps ||
      p.y < aabb_min_.y - kConvexityEps || p.y > aabb_max_.y + kConvexityEps) {
    return false;
  }
  const std::size_t n = verts_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = verts_[i];
    const Vec2& b = verts_[(i + 1) % n];
    if ((b - a).cross(p - a) < -kConvexityEps) {
      return false;
    }
  }
  return true;
}

bool ConvexPolygon::contains(const ConvexPolygon& inner) const {
  for (const Vec2& v : inner.vertices()) {
    if (!contains(v)) return false;
  }
  return true;
}

Corridor::Corridor(const Vec2& s, const Vec2& e, double w)
    : start(s), end(e), width(w) {
  if (width <= 0.0) {
    throw std::invalid_argument("Corridor: width must be positive");
  }
  if ((end - start).norm() < kDegenerateEps) {
    throw std::invalid_argument("Corridor: start and end coincide");
  }
}

ConvexPolygon transform(const ConvexPolygon& poly, const Pose2& pose) {
  std::vector<Vec2> out;
  out.reserve(poly.vertices().size());
  for (const Vec2& v : poly.vertices()) {
    out.push_back(pose.apply(v));
  }
  return ConvexPolygon::from_points(std::move(out));
}

bool intersects(const ConvexPolygon& a, const ConvexPolygon& b) {
  if (a.aabb_min().x > b.aabb_max().x || b.aabb_min().x > a.aabb_max().x ||
      a.aabb_min().y > b.aabb_max().y || b.aabb_min().y > a.aabb_max().y) {
    return false;
  }
  // A strictly separating axis exists among the edge normals of either
  // polygon; touching intervals do not separate.
  const auto separated_by_edges = [](const ConvexPolygon& edges,
                                     const ConvexPolygon& other) {
    const auto& verts = edges.vertices();
    const std::size_t n = verts.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 axis = (verts[(i + 1) % n] - verts[i]).perp();
      const Interval pa = project(edges, axis);
      const Interval pb = project(other, axis);
      if (pa.hi < pb.lo || pb.hi < pa.lo) {
        return true;
      }
    }
    return false;
  };
  return !separated_by_edges(a, b) && !separated_by_edges(b, a);
}

ConvexPolygon convex_hull(std::vector<Vec2> points) {
  std::sort(points.begin(), points.end(), [](const Vec2& a, const Vec2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  points.erase(std::unique(points.begin(), points.end()), points.end());
  const std::size_t n = points.size();
  if (n < 3) {
    throw std::invalid_argument("convex_hull: degenerate point set");
  }
  std::vector<Vec2> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 && (hull[k - 1] - hull[k - 2]).cross(points[i] - hull[k - 2]) <=
                         kConvexityEps) {
      --k;
    }
    hull[k++] = points[i];
  }
  const std::size_t lower = k + 1;
  for (std::size_t i = n - 1; i-- > 0;) {
    while (k >= lower && (hull[k - 1] - hull[k - 2]).cross(points[i] - hull[k - 2]) <=
                             kConvexityEps) {
      --k;
    }
    hull[k++] = points[i];
  }
  hull.resize(k - 1);
  return ConvexPolygon::from_points(std::move(hull));
}

std::vector<ConvexPolygon> sweep(const ConvexPolygon& footprint,
                                 const std::vector<Pose2>& path) {
  if (path.empty()) {
    throw std::invalid_argument("sweep: empty path");
  }
  if (path.size() == 1) {
    return {transform(footprint, path.front())};
  }
  std::vector<ConvexPolygon> out;
  out.reserve(path.size() - 1);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (path[i] == path[i + 1]) {
      out.push_back(transform(footprint, path[i]));
      continue;
    }
    const ConvexPolygon a = transform(footprint, path[i]);
    const ConvexPolygon b = transform(footprint, path[i + 1]);
    std::vector<Vec2> pts = a.vertices();
    pts.insert(pts.end(), b.vertices().begin(), b.vertices().end());
    out.push_back(convex_hull(std::move(pts)));
  }
  return out;
}

ConvexPolygon corridor_polygon(const Corridor& c) {
  const Vec2 dir = c.end - c.start;
  const double len = dir.norm();
  const Vec2 u = dir * (1.0 / len);
  const Vec2 half = u.perp() * (0.5 * c.width);
  return ConvexPolygon::from_points(
      {c.start - half, c.end - half, c.end + half, c.start + half});
}

double distance(const ConvexPolygon& a, const ConvexPolygon& b) {
  if (intersects(a, b)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  const auto& va = a.vertices();
  const auto& vb = b.vertices();
  for (std::size_t i = 0; i < va.size(); ++i) {
    const Vec2& a0 = va[i];
    const Vec2& a1 = va[(i + 1) % va.size()];
    for (std::size_t j = 0; j < vb.size(); ++j) {
      const Vec2& b0 = vb[j];
      const Vec2& b1 = vb[(j + 1) % vb.size()];
      best = std::min(best, segment_distance(a0, a1, b0, b1));
    }
  }
  return best;
}

double penetration_depth(const ConvexPolygon& a, const ConvexPolygon& b) {
  if (!intersects(a, b)) return 0.0;
  double depth = std::numeric_limits<double>::infinity();
  const auto scan = [&](const ConvexPolygon& edges, const ConvexPolygon& other) {
    const auto& verts = edges.vertices();
    const std::size_t n = verts.size();
    for (std::size_t i = 0; i < n; ++i) {
      Vec2 axis = (verts[(i + 1) % n] - verts[i]).perp();
      const double len = axis.norm();
      if (len <= 0.0) continue;
      axis = axis * (1.0 / len);
      const Interval pa = project(edges, axis);
      const Interval pb = project(other, axis);
      depth = std::min(depth, std::min(pa.hi, pb.hi) - std::max(pa.lo, pb.lo));
    }
  };
  scan(a, b);
  scan(b, a);
  return std::max(depth, 0.0);
}

double segment_distance(const Vec2& a0, const Vec2& a1, const Vec2& b0,
                        const Vec2& b1) {
  if (segments_intersect(a0, a1, b0, b1)) return 0.0;
  return std::min(std::min(point_segment_distance(a0, b0, b1),
                           point_segment_distance(a1, b0, b1)),
                  std::min(point_segment_distance(b0, a0, a1),
                           point_segment_distance(b1, a0, a1)));
}

ConvexPolygon regular_polygon(int sides, double circumradius) {
  if (sides < 3 || circumradius <= 0.0) {
    throw std::invalid_argument("regular_polygon: bad parameters");
  }
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(sides));
  for (int i = 0; i < sides; ++i) {
    const double a = 2.0 * kPi * static_cast<double>(i) / sides;
    pts.emplace_back(circumradius * std::cos(a), circumradius * std::sin(a));
  }
  return ConvexPolygon::from_points(std::move(pts));
}

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
  // splitmix64-style mixing.
  std::uint64_t z = seed ^ (value + 0x9e3779b97f4a7c15ull + (seed << 6) + (seed >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t hash_double(double v) { return std::bit_cast<std::uint64_t>(v); }

}  // namespace stalm::geom
