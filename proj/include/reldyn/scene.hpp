#pragma once

#include <map>
#include <set>
#include <vector>

#include <json.hpp>

#include "reldyn/common.hpp"
#include "reldyn/rng.hpp"

namespace reldyn {

inline constexpr int kMaxObjectIds = 16;
inline constexpr int kPointsPerObject = 128;

struct Cuboid {
  int object_id = 0;          // unique within a scene, in [0, 16)
  Vec3 center;                // world frame, meters
  Vec3 half_extents;          // each in [0.015, 0.06]

  Aabb aabb() const { return Aabb::from_center(center, half_extents); }
  double bottom() const { return center.z - half_extents.z; }
  double top() const { return center.z + half_extents.z; }
  double footprint_area() const {
    return 4.0 * half_extents.x * half_extents.y;
  }
};

struct Camera {
  Vec3 position{0.0, -0.9, 0.55};
  Vec3 look_at{0.0, 0.0, 0.05};
  double horizontal_fov = 60.0 * std::numbers::pi / 180.0;
  int width = 160;
  int height = 120;
};

struct Scene {
  std::vector<Cuboid> objects;
  Camera camera;
  static constexpr double kGroundZ = 0.0;

  const Cuboid* find(int object_id) const {
    for (const Cuboid& c : objects)
      if (c.object_id == object_id) return &c;
    return nullptr;
  }
  Cuboid* find(int object_id) {
    for (Cuboid& c : objects)
      if (c.object_id == object_id) return &c;
    return nullptr;
  }
};

// Partial-view observation: exactly 128 world-frame surface points per
// object. Objects with no camera-visible points keep a zero-point
// placeholder cloud and are listed in off_view.
struct SegmentedCloud {
  std::map<int, std::vector<Vec3>> per_object;
  std::set<int> off_view;
  Camera camera_pose;

  std::vector<int> object_ids() const {
    std::vector<int> ids;
    for (const auto& [id, _] : per_object) ids.push_back(id);
    return ids;
  }
};

// Rotation (about world z) + translation into camera-aligned axes:
// +x camera-right, +y horizontal viewing direction, +z up.
struct CameraFrame {
  Vec3 right, forward, up;
  Vec3 origin;

  static CameraFrame from(const Camera& cam);
  Vec3 to_camera(const Vec3& p) const {
    Vec3 d = p - origin;
    return {right.dot(d), forward.dot(d), up.dot(d)};
  }
  Vec3 to_world(const Vec3& q) const {
    return origin + right * q.x + forward * q.y + up * q.z;
  }
};

std::vector<Vec3> to_camera_frame(const std::vector<Vec3>& points,
                                  const Camera& camera);

// Axis-aligned bounds of the cuboid expressed in camera axes.
Aabb camera_frame_aabb(const Cuboid& c, const Camera& camera);

// Ray-cast every pixel, assign first-hit points to objects, then
// farthest-point-resample each set to exactly 128 points (duplicating when
// fewer hits exist). Deterministic for a fixed scene and camera.
SegmentedCloud render_cloud(const Scene& scene);

// First cuboid hit by a ray, or -1. Exposed for the render oracle tests.
int first_hit(const Scene& scene, const Vec3& origin, const Vec3& dir,
              double* t_out = nullptr);

std::vector<Vec3> farthest_point_resample(const std::vector<Vec3>& points,
                                          int target);

struct SceneSampleConfig {
  double min_half_extent = 0.015;
  double max_half_extent = 0.06;
  double workspace_x = 0.22;   // base centers drawn in +/- this range
  double workspace_y = 0.14;
  double min_support_overlap = 0.25;
  int max_rejections = 100;
};

// Settled scene of n_objects cuboids arranged in n_stacks support chains.
Scene sample_scene(Rng& rng, int n_objects, int n_stacks,
                   const SceneSampleConfig& cfg = {});

// JSON round trip for the CLI `plan --scene` schema.
nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);
nlohmann::json camera_to_json(const Camera& cam);
Camera camera_from_json(const nlohmann::json& j);

}  // namespace reldyn
