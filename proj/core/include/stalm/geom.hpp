#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace stalm::geom {

constexpr double kPi = 3.141592653589793238462643383279502884;

/// Wraps an angle into [-pi, pi).
double wrap_angle(double radians);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double px, double py) : x(px), y(py) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2& o) const { return x == o.x && y == o.y; }

  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const;
  double norm_sq() const { return x * x + y * y; }
  Vec2 perp() const { return {-y, x}; }
};

Vec2 rotate(const Vec2& v, double theta);

/// SE(2) pose. theta is normalized into [-pi, pi) at construction.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose2() = default;
  Pose2(double px, double py, double ptheta);

  Vec2 xy() const { return {x, y}; }
  /// Maps a point from this pose's frame into the parent frame.
  Vec2 apply(const Vec2& local) const;
  bool operator==(const Pose2& o) const {
    return x == o.x && y == o.y && theta == o.theta;
  }
};

/// Frame composition: applying compose(outer, inner) equals applying inner
/// first, then outer.
Pose2 compose(const Pose2& outer, const Pose2& inner);

bool almost_equal(const Pose2& a, const Pose2& b, double tol = 1e-9);

/// Closed convex polygon with counter-clockwise, strictly convex vertices.
/// Construction validates the invariants and throws std::invalid_argument on
/// violation.
class ConvexPolygon {
 public:
  /// Empty placeholder; only from_points yields a usable polygon.
  ConvexPolygon() = default;

  static ConvexPolygon from_points(std::vector<Vec2> points);

  const std::vector<Vec2>& vertices() const { return verts_; }
  double area() const;
  Vec2 centroid() const;
  /// Boundary-inclusive point containment.
  bool contains(const Vec2& p) const;
  /// True iff every vertex of inner lies inside this polygon (sufficient for
  /// convex shapes, boundary-inclusive).
  bool contains(const ConvexPolygon& inner) const;

  Vec2 aabb_min() const { return aabb_min_; }
  Vec2 aabb_max() const { return aabb_max_; }

  bool operator==(const ConvexPolygon& o) const { return verts_ == o.verts_; }

 private:
  void finish();

  std::vector<Vec2> verts_;
  Vec2 aabb_min_;
  Vec2 aabb_max_;
};

/// Rectangle swept by a segment of the given width. start and end must be at
/// least 1e-9 apart; width must be positive.
struct Corridor {
  Vec2 start;
  Vec2 end;
  double width = 0.0;

  Corridor() = default;
  Corridor(const Vec2& s, const Vec2& e, double w);
};

/// Places the polygon at the pose: rotate by theta, then translate.
ConvexPolygon transform(const ConvexPolygon& poly, const Pose2& pose);

/// Boundary-inclusive intersection test (separating axes). Touching counts
/// as intersecting.
bool intersects(const ConvexPolygon& a, const ConvexPolygon& b);

/// Convex hull (monotone chain). Collinear points are dropped so the result
/// satisfies the ConvexPolygon invariants. Throws if the hull is degenerate.
ConvexPolygon convex_hull(std::vector<Vec2> points);

/// Conservative swept volume: one hull per path segment of the footprint
/// placed at both endpoints; a single placed footprint for a 1-pose path.
std::vector<ConvexPolygon> sweep(const ConvexPolygon& footprint,
                                 const std::vector<Pose2>& path);

ConvexPolygon corridor_polygon(const Corridor& c);

/// Exact distance between convex polygons; 0 when they intersect.
double distance(const ConvexPolygon& a, const ConvexPolygon& b);

/// Minimum translation depth along a face normal when the polygons overlap;
/// 0 when they are disjoint or merely touching.
double penetration_depth(const ConvexPolygon& a, const ConvexPolygon& b);

double segment_distance(const Vec2& a0, const Vec2& a1, const Vec2& b0,
                        const Vec2& b1);

/// Regular n-gon of the given circumradius, first vertex on +x.
ConvexPolygon regular_polygon(int sides, double circumradius);

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);
std::uint64_t hash_double(double v);

}  // namespace stalm::geom
