#include "reldyn/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace reldyn {

CameraFrame CameraFrame::from(const Camera& cam) {
  Vec3 view = cam.look_at - cam.position;
  Vec3 horiz{view.x, view.y, 0.0};
  check(horiz.norm() > 1e-12,
        "camera view direction has no horizontal component");
  CameraFrame f;
  f.forward = horiz.normalized();
  f.up = {0.0, 0.0, 1.0};
  f.right = f.forward.cross(f.up);  // right-handed: x = y cross z
  f.origin = cam.position;
  return f;
}

std::vector<Vec3> to_camera_frame(const std::vector<Vec3>& points,
                                  const Camera& camera) {
  CameraFrame f = CameraFrame::from(camera);
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(f.to_camera(p));
  return out;
}

Aabb camera_frame_aabb(const Cuboid& c, const Camera& camera) {
  CameraFrame f = CameraFrame::from(camera);
  Aabb world = c.aabb();
  Aabb out;
  out.lo = {std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
  out.hi = {-out.lo.x, -out.lo.y, -out.lo.z};
  // z is unchanged by the yaw-only rotation; corners cover x/y.
  for (double cx : {world.lo.x, world.hi.x})
    for (double cy : {world.lo.y, world.hi.y})
      for (double cz : {world.lo.z, world.hi.z}) {
        Vec3 q = f.to_camera({cx, cy, cz});
        out.lo.x = std::min(out.lo.x, q.x);
        out.lo.y = std::min(out.lo.y, q.y);
        out.lo.z = std::min(out.lo.z, q.z);
        out.hi.x = std::max(out.hi.x, q.x);
        out.hi.y = std::max(out.hi.y, q.y);
        out.hi.z = std::max(out.hi.z, q.z);
      }
  return out;
}

namespace {
// Slab-method ray/AABB intersection; returns entry distance or nullopt.
bool ray_aabb(const Vec3& o, const Vec3& d, const Aabb& box, double* t_hit) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  const double od[3] = {o.x, o.y, o.z};
  const double dd[3] = {d.x, d.y, d.z};
  const double lo[3] = {box.lo.x, box.lo.y, box.lo.z};
  const double hi[3] = {box.hi.x, box.hi.y, box.hi.z};
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dd[a]) < 1e-15) {
      if (od[a] < lo[a] || od[a] > hi[a]) return false;
      continue;
    }
    double inv = 1.0 / dd[a];
    double ta = (lo[a] - od[a]) * inv;
    double tb = (hi[a] - od[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  *t_hit = t0;
  return true;
}
}  // namespace

int first_hit(const Scene& scene, const Vec3& origin, const Vec3& dir,
              double* t_out) {
  int best = -1;
  double best_t = std::numeric_limits<double>::infinity();
  for (const Cuboid& c : scene.objects) {
    double t;
    if (ray_aabb(origin, dir, c.aabb(), &t) && t < best_t) {
      best_t = t;
      best = c.object_id;
    }
  }
  if (t_out) *t_out = best_t;
  return best;
}

std::vector<Vec3> farthest_point_resample(const std::vector<Vec3>& points,
                                          int target) {
  std::vector<Vec3> out;
  out.reserve(static_cast<size_t>(target));
  if (points.empty()) {
    out.assign(static_cast<size_t>(target), Vec3{});
    return out;
  }
  if (static_cast<int>(points.size()) <= target) {
    out = points;
    // pad by cycling through the existing hits
    size_t i = 0;
    while (static_cast<int>(out.size()) < target)
      out.push_back(points[i++ % points.size()]);
    return out;
  }
  // Greedy FPS seeded at the first hit; ties resolved by lowest index so the
  // result is a pure function of the input ordering.
  std::vector<double> min_d2(points.size(),
                             std::numeric_limits<double>::infinity());
  size_t cur = 0;
  out.push_back(points[cur]);
  for (int k = 1; k < target; ++k) {
    size_t far_idx = 0;
    double far_d2 = -1.0;
    const Vec3 p = points[cur];
    for (size_t i = 0; i < points.size(); ++i) {
      Vec3 d = points[i] - p;
      double d2 = d.dot(d);
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (min_d2[i] > far_d2) {
        far_d2 = min_d2[i];
        far_idx = i;
      }
    }
    cur = far_idx;
    out.push_back(points[cur]);
  }
  return out;
}

SegmentedCloud render_cloud(const Scene& scene) {
  const Camera& cam = scene.camera;
  // Pinhole pointing at look_at (the true view direction, including pitch).
  Vec3 view = (cam.look_at - cam.position).normalized();
  Vec3 right = view.cross(Vec3{0.0, 0.0, 1.0}).normalized();
  Vec3 up = right.cross(view);
  double half_w = std::tan(cam.horizontal_fov / 2.0);
  double half_h = half_w * cam.height / cam.width;

  std::map<int, std::vector<Vec3>> hits;
  for (const Cuboid& c : scene.objects) hits[c.object_id] = {};

  for (int py = 0; py < cam.height; ++py) {
    for (int px = 0; px < cam.width; ++px) {
      double u = ((px + 0.5) / cam.width * 2.0 - 1.0) * half_w;
      double v = (1.0 - (py + 0.5) / cam.height * 2.0) * half_h;
      Vec3 dir = (view + right * u + up * v).normalized();
      double t;
      int id = first_hit(scene, cam.position, dir, &t);
      if (id >= 0) hits[id].push_back(cam.position + dir * t);
    }
  }

  SegmentedCloud cloud;
  cloud.camera_pose = cam;
  for (auto& [id, pts] : hits) {
    if (pts.empty()) {
      cloud.off_view.insert(id);
      cloud.per_object[id] =
          std::vector<Vec3>(static_cast<size_t>(kPointsPerObject), Vec3{});
    } else {
      cloud.per_object[id] = farthest_point_resample(pts, kPointsPerObject);
    }
  }
  return cloud;
}

namespace {
bool scene_penetrates(const Scene& s, double tol) {
  for (size_t i = 0; i < s.objects.size(); ++i)
    for (size_t j = i + 1; j < s.objects.size(); ++j)
      if (penetration_depth(s.objects[i].aabb(), s.objects[j].aabb()) > tol)
        return true;
  return false;
}
}  // namespace

Scene sample_scene(Rng& rng, int n_objects, int n_stacks,
                   const SceneSampleConfig& cfg) {
  check(n_objects >= 2 && n_objects <= 5, "n_objects must be in [2,5], got ",
        n_objects);
  check(n_stacks >= 1 && n_stacks <= 2, "n_stacks must be 1 or 2, got ",
        n_stacks);
  check(n_stacks <= n_objects, "more stacks than objects");

  for (int attempt = 0; attempt < cfg.max_rejections; ++attempt) {
    Scene scene;
    // Split objects across stacks; every stack gets at least one.
    std::vector<int> stack_sizes(static_cast<size_t>(n_stacks), 1);
    for (int k = n_stacks; k < n_objects; ++k)
      stack_sizes[static_cast<size_t>(rng.uniform_int(n_stacks))] += 1;

    int next_id = 0;
    bool ok = true;
    for (int s = 0; s < n_stacks && ok; ++s) {
      double bx = rng.uniform(-cfg.workspace_x, cfg.workspace_x);
      double by = rng.uniform(-cfg.workspace_y, cfg.workspace_y);
      const Cuboid* below = nullptr;
      for (int k = 0; k < stack_sizes[static_cast<size_t>(s)]; ++k) {
        Cuboid c;
        c.object_id = next_id++;
        c.half_extents = {rng.uniform(cfg.min_half_extent, cfg.max_half_extent),
                          rng.uniform(cfg.min_half_extent, cfg.max_half_extent),
                          rng.uniform(cfg.min_half_extent, cfg.max_half_extent)};
        if (below == nullptr) {
          c.center = {bx, by, c.half_extents.z};
        } else {
          // jitter within the support footprint, then verify overlap ratio
          double jx = rng.uniform(-below->half_extents.x, below->half_extents.x);
          double jy = rng.uniform(-below->half_extents.y, below->half_extents.y);
          c.center = {below->center.x + jx, below->center.y + jy,
                      below->top() + c.half_extents.z};
          double ratio =
              footprint_overlap_area(c.aabb(), below->aabb()) /
              c.footprint_area();
          if (ratio < cfg.min_support_overlap) {
            ok = false;
            break;
          }
        }
        scene.objects.push_back(c);
        below = &scene.objects.back();
      }
    }
    if (!ok || scene_penetrates(scene, 1e-9)) continue;
    return scene;
  }
  fail("sample_scene: exceeded ", cfg.max_rejections, " rejection attempts");
}

nlohmann::json scene_to_json(const Scene& scene) {
  nlohmann::json j;
  j["objects"] = nlohmann::json::array();
  for (const Cuboid& c : scene.objects) {
    j["objects"].push_back(
        {{"id", c.object_id},
         {"center", {c.center.x, c.center.y, c.center.z}},
         {"half_extents",
          {c.half_extents.x, c.half_extents.y, c.half_extents.z}}});
  }
  j["camera"] = camera_to_json(scene.camera);
  return j;
}

nlohmann::json camera_to_json(const Camera& cam) {
  return {{"position", {cam.position.x, cam.position.y, cam.position.z}},
          {"look_at", {cam.look_at.x, cam.look_at.y, cam.look_at.z}},
          {"horizontal_fov", cam.horizontal_fov},
          {"resolution", {cam.width, cam.height}}};
}

namespace {
Vec3 vec3_from(const nlohmann::json& a) {
  check(a.is_array() && a.size() == 3, "expected 3-vector in scene JSON");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}
}  // namespace

Scene scene_from_json(const nlohmann::json& j) {
  Scene scene;
  for (const auto& o : j.at("objects")) {
    Cuboid c;
    c.object_id = o.at("id").get<int>();
    c.center = vec3_from(o.at("center"));
    c.half_extents = vec3_from(o.at("half_extents"));
    check(c.half_extents.x > 0 && c.half_extents.y > 0 && c.half_extents.z > 0,
          "half_extents must be positive for object ", c.object_id);
    check(c.object_id >= 0 && c.object_id < kMaxObjectIds, "object id ",
          c.object_id, " out of [0,16)");
    check(scene.objects.size() < 1 ||
              std::none_of(scene.objects.begin(), scene.objects.end(),
                           [&](const Cuboid& x) {
                             return x.object_id == c.object_id;
                           }),
          "duplicate object id ", c.object_id);
    scene.objects.push_back(c);
  }
  if (j.contains("camera")) scene.camera = camera_from_json(j.at("camera"));
  return scene;
}

Camera camera_from_json(const nlohmann::json& cj) {
  Camera cam;
  if (cj.contains("position")) cam.position = vec3_from(cj.at("position"));
  if (cj.contains("look_at")) cam.look_at = vec3_from(cj.at("look_at"));
  if (cj.contains("horizontal_fov"))
    cam.horizontal_fov = cj.at("horizontal_fov").get<double>();
  if (cj.contains("resolution")) {
    cam.width = cj.at("resolution")[0].get<int>();
    cam.height = cj.at("resolution")[1].get<int>();
  }
  return cam;
}

}  // namespace reldyn
