#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace reldyn {

// All recoverable failures surface as this; messages carry the offending
// values so callers never have to reconstruct context.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  throw Error(os.str());
}

template <typename... Args>
void check(bool cond, const Args&... args) {
  if (!cond) fail(args...);
}

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    double n = norm();
    return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{};
  }
};

inline double dist(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

// Closed axis-aligned interval box.
struct Aabb {
  Vec3 lo, hi;

  static Aabb from_center(const Vec3& c, const Vec3& half) {
    return {c - half, c + half};
  }
  Vec3 center() const { return (lo + hi) * 0.5; }
  bool contains(const Vec3& p, double tol = 0.0) const {
    return p.x >= lo.x - tol && p.x <= hi.x + tol && p.y >= lo.y - tol &&
           p.y <= hi.y + tol && p.z >= lo.z - tol && p.z <= hi.z + tol;
  }
};

// Signed separation along one axis; negative means overlap of that depth.
inline double interval_gap(double lo_a, double hi_a, double lo_b, double hi_b) {
  return std::max(lo_b - hi_a, lo_a - hi_b);
}

inline double overlap_len(double lo_a, double hi_a, double lo_b, double hi_b) {
  return std::min(hi_a, hi_b) - std::max(lo_a, lo_b);
}

// Area of the xy-footprint intersection; zero when disjoint.
inline double footprint_overlap_area(const Aabb& a, const Aabb& b) {
  double ox = overlap_len(a.lo.x, a.hi.x, b.lo.x, b.hi.x);
  double oy = overlap_len(a.lo.y, a.hi.y, b.lo.y, b.hi.y);
  if (ox <= 0.0 || oy <= 0.0) return 0.0;
  return ox * oy;
}

// Depth of 3-D interpenetration (0 when merely touching or apart).
inline double penetration_depth(const Aabb& a, const Aabb& b) {
  double gx = interval_gap(a.lo.x, a.hi.x, b.lo.x, b.hi.x);
  double gy = interval_gap(a.lo.y, a.hi.y, b.lo.y, b.hi.y);
  double gz = interval_gap(a.lo.z, a.hi.z, b.lo.z, b.hi.z);
  double g = std::max(gx, std::max(gy, gz));
  return g < 0.0 ? -g : 0.0;
}

}  // namespace reldyn
