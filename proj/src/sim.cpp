#include "reldyn/sim.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace reldyn {

const char* skill_name(Skill s) {
  return s == Skill::Push ? "push" : "pick_place";
}

Skill skill_from_name(const std::string& name) {
  if (name == "push") return Skill::Push;
  if (name == "pick_place") return Skill::PickPlace;
  fail("unknown skill \"", name, "\"");
}

void validate_action(const SkillAction& a) {
  check(a.target >= 0 && a.target < kMaxObjectIds, "action target ", a.target,
        " out of [0,16)");
  check(a.norm() <= kMaxActionNorm, "action displacement ", a.norm(),
        " exceeds ", kMaxActionNorm, " m");
}

nlohmann::json action_to_json(const SkillAction& a) {
  return {{"skill", skill_name(a.skill)},
          {"target", a.target},
          {"params", {a.dx, a.dy}}};
}

SkillAction action_from_json(const nlohmann::json& j) {
  SkillAction a;
  a.skill = skill_from_name(j.at("skill").get<std::string>());
  a.target = j.at("target").get<int>();
  a.dx = j.at("params")[0].get<double>();
  a.dy = j.at("params")[1].get<double>();
  validate_action(a);
  return a;
}

namespace {

constexpr double kAreaEps = 1e-12;

// Objects sorted bottom-up, ties by id, for deterministic processing.
std::vector<size_t> bottom_up_order(const Scene& s) {
  std::vector<size_t> order(s.objects.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    double ba = s.objects[a].bottom(), bb = s.objects[b].bottom();
    if (ba != bb) return ba < bb;
    return s.objects[a].object_id < s.objects[b].object_id;
  });
  return order;
}

bool rests_on(const Cuboid& upper, const Cuboid& lower) {
  return std::abs(upper.bottom() - lower.top()) <= kContactTol &&
         footprint_overlap_area(upper.aabb(), lower.aabb()) > kAreaEps;
}

}  // namespace

std::vector<int> rest_group(const Scene& scene, int object_id) {
  check(scene.find(object_id) != nullptr, "rest_group: no object ", object_id);
  std::vector<int> group = {object_id};
  bool grew = true;
  while (grew) {
    grew = false;
    for (const Cuboid& c : scene.objects) {
      if (std::find(group.begin(), group.end(), c.object_id) != group.end())
        continue;
      for (int gid : group) {
        if (rests_on(c, *scene.find(gid))) {
          group.push_back(c.object_id);
          grew = true;
          break;
        }
      }
    }
  }
  std::sort(group.begin(), group.end());
  return group;
}

Scene settle(const Scene& scene, SettleReport* report,
             double min_support_overlap) {
  Scene out = scene;
  if (report) *report = {};
  std::vector<size_t> order = bottom_up_order(out);
  std::vector<bool> placed(out.objects.size(), false);

  for (size_t idx : order) {
    Cuboid& obj = out.objects[idx];
    for (int guard = 0; guard < 100; ++guard) {
      // highest placed surface under the footprint
      double support_z = Scene::kGroundZ;
      const Cuboid* support = nullptr;
      for (size_t j = 0; j < out.objects.size(); ++j) {
        if (!placed[j]) continue;
        const Cuboid& other = out.objects[j];
        if (footprint_overlap_area(obj.aabb(), other.aabb()) <= kAreaEps)
          continue;
        if (other.top() > support_z ||
            (support && other.top() == support_z &&
             footprint_overlap_area(obj.aabb(), other.aabb()) >
                 footprint_overlap_area(obj.aabb(), support->aabb()))) {
          support_z = other.top();
          support = &other;
        }
      }
      if (support == nullptr) {
        obj.center.z = Scene::kGroundZ + obj.half_extents.z;
        break;
      }
      double ratio = footprint_overlap_area(obj.aabb(), support->aabb()) /
                     obj.footprint_area();
      if (ratio >= min_support_overlap) {
        obj.center.z = support_z + obj.half_extents.z;
        break;
      }
      // Unstable: slide horizontally away from the support centroid until
      // clear of every placed footprint, then fall through to re-drop.
      Vec3 away = {obj.center.x - support->center.x,
                   obj.center.y - support->center.y, 0.0};
      if (away.norm() < 1e-12) away = {1.0, 0.0, 0.0};
      away = away.normalized();
      for (int hop = 0; hop < 100; ++hop) {
        const Cuboid* blocker = nullptr;
        for (size_t j = 0; j < out.objects.size(); ++j) {
          if (!placed[j]) continue;
          if (footprint_overlap_area(obj.aabb(), out.objects[j].aabb()) >
              kAreaEps) {
            blocker = &out.objects[j];
            break;
          }
        }
        if (!blocker) break;
        // minimal slide along `away` that separates the footprints
        Aabb ob = obj.aabb(), bb = blocker->aabb();
        double t = std::numeric_limits<double>::infinity();
        if (away.x > 1e-12) t = std::min(t, (bb.hi.x - ob.lo.x) / away.x);
        if (away.x < -1e-12) t = std::min(t, (bb.lo.x - ob.hi.x) / away.x);
        if (away.y > 1e-12) t = std::min(t, (bb.hi.y - ob.lo.y) / away.y);
        if (away.y < -1e-12) t = std::min(t, (bb.lo.y - ob.hi.y) / away.y);
        check(std::isfinite(t), "settle: cannot slide object ",
              obj.object_id, " clear of object ", blocker->object_id);
        obj.center.x += away.x * t;
        obj.center.y += away.y * t;
      }
      if (report) report->slid_objects.push_back(obj.object_id);
      // loop re-drops from the new horizontal position
    }
    placed[idx] = true;
  }
  return out;
}

namespace {

// Transitive riders of `seed_ids` in the current state (excluding seeds).
std::vector<size_t> rider_closure(const Scene& s,
                                  const std::vector<size_t>& seeds) {
  std::vector<bool> in(s.objects.size(), false);
  for (size_t i : seeds) in[i] = true;
  bool grew = true;
  while (grew) {
    grew = false;
    for (size_t i = 0; i < s.objects.size(); ++i) {
      if (in[i]) continue;
      for (size_t j = 0; j < s.objects.size(); ++j) {
        if (!in[j]) continue;
        if (rests_on(s.objects[i], s.objects[j])) {
          in[i] = true;
          grew = true;
          break;
        }
      }
    }
  }
  std::vector<size_t> out;
  for (size_t i = 0; i < s.objects.size(); ++i)
    if (in[i] && std::find(seeds.begin(), seeds.end(), i) == seeds.end())
      out.push_back(i);
  return out;
}

size_t index_of(const Scene& s, int object_id) {
  for (size_t i = 0; i < s.objects.size(); ++i)
    if (s.objects[i].object_id == object_id) return i;
  fail("no object with id ", object_id);
}

}  // namespace

Scene apply_push(const Scene& scene, const SkillAction& action,
                 SettleReport* report) {
  check(action.skill == Skill::Push, "apply_push on non-push action");
  validate_action(action);
  Scene out = scene;
  size_t target = index_of(out, action.target);

  double total = action.norm();
  if (total <= 0.0) return settle(out, report);
  Vec3 u = {action.dx / total, action.dy / total, 0.0};
  int n_steps = static_cast<int>(std::ceil(total / kPushSubstep));

  for (int step = 0; step < n_steps; ++step) {
    double len = std::min(kPushSubstep, total - step * kPushSubstep);
    Vec3 delta = u * len;

    // target plus whatever currently rides on the moving set
    std::vector<bool> moving(out.objects.size(), false);
    moving[target] = true;
    for (size_t r : rider_closure(out, {target})) moving[r] = true;
    for (size_t i = 0; i < out.objects.size(); ++i)
      if (moving[i]) {
        out.objects[i].center.x += delta.x;
        out.objects[i].center.y += delta.y;
      }

    // chained resolution: overlapped cuboids shift minimally along u
    for (int guard = 0; guard < 1000; ++guard) {
      bool dirty = false;
      for (size_t i = 0; i < out.objects.size() && !dirty; ++i) {
        if (!moving[i]) continue;
        for (size_t j = 0; j < out.objects.size() && !dirty; ++j) {
          if (i == j) continue;
          Aabb a = out.objects[i].aabb(), b = out.objects[j].aabb();
          if (penetration_depth(a, b) <= 1e-12) continue;
          // move the box that sits farther along the push direction
          double si = out.objects[i].center.x * u.x + out.objects[i].center.y * u.y;
          double sj = out.objects[j].center.x * u.x + out.objects[j].center.y * u.y;
          size_t front = (moving[j] && !moving[i]) ? i
                         : (moving[i] && !moving[j]) ? j
                         : (si > sj ? i : j);
          size_t back = front == i ? j : i;
          Aabb fb = out.objects[front].aabb(), bb = out.objects[back].aabb();
          double t = std::numeric_limits<double>::infinity();
          if (u.x > 1e-12) t = std::min(t, (bb.hi.x - fb.lo.x) / u.x);
          if (u.x < -1e-12) t = std::min(t, (bb.lo.x - fb.hi.x) / u.x);
          if (u.y > 1e-12) t = std::min(t, (bb.hi.y - fb.lo.y) / u.y);
          if (u.y < -1e-12) t = std::min(t, (bb.lo.y - fb.hi.y) / u.y);
          check(std::isfinite(t) && t >= 0.0, "push: cannot separate objects ",
                out.objects[front].object_id, " and ",
                out.objects[back].object_id);
          std::vector<size_t> pushed = {front};
          for (size_t r : rider_closure(out, pushed)) pushed.push_back(r);
          for (size_t p : pushed) {
            out.objects[p].center.x += u.x * t;
            out.objects[p].center.y += u.y * t;
            moving[p] = true;
          }
          dirty = true;
        }
      }
      if (!dirty) break;
    }
  }
  return settle(out, report);
}

Scene apply_pick_place(const Scene& scene, const SkillAction& action,
                       SettleReport* report) {
  check(action.skill == Skill::PickPlace, "apply_pick_place on non-pick_place action");
  validate_action(action);
  Scene out = scene;
  size_t target = index_of(out, action.target);

  std::vector<size_t> group = {target};
  for (size_t r : rider_closure(out, {target})) group.push_back(r);
  std::vector<bool> in_group(out.objects.size(), false);
  for (size_t g : group) in_group[g] = true;

  // translate, raised above everything else
  double others_top = Scene::kGroundZ;
  for (size_t i = 0; i < out.objects.size(); ++i)
    if (!in_group[i]) others_top = std::max(others_top, out.objects[i].top());
  double group_bottom = std::numeric_limits<double>::infinity();
  for (size_t g : group) group_bottom = std::min(group_bottom, out.objects[g].bottom());
  double raise = std::max(0.0, others_top - group_bottom) + 0.2;
  for (size_t g : group) {
    out.objects[g].center.x += action.dx;
    out.objects[g].center.y += action.dy;
    out.objects[g].center.z += raise;
  }

  // rigid drop: smallest per-member fall distance onto non-group surfaces
  double dz = std::numeric_limits<double>::infinity();
  for (size_t g : group) {
    const Cuboid& c = out.objects[g];
    double floor_z = Scene::kGroundZ;
    for (size_t i = 0; i < out.objects.size(); ++i) {
      if (in_group[i]) continue;
      if (footprint_overlap_area(c.aabb(), out.objects[i].aabb()) > kAreaEps)
        floor_z = std::max(floor_z, out.objects[i].top());
    }
    dz = std::min(dz, c.bottom() - floor_z);
  }
  for (size_t g : group) out.objects[g].center.z -= dz;

  return settle(out, report);
}

Scene apply_action(const Scene& scene, const SkillAction& action,
                   SettleReport* report) {
  return action.skill == Skill::Push ? apply_push(scene, action, report)
                                     : apply_pick_place(scene, action, report);
}

nlohmann::json DataGenConfig::to_json() const {
  return {{"min_objects", min_objects},
          {"max_objects", max_objects},
          {"min_horizon", min_horizon},
          {"max_horizon", max_horizon},
          {"push_fraction", push_fraction},
          {"push_min_norm", bounds.push_min_norm},
          {"push_max_norm", bounds.push_max_norm},
          {"push_axis_bound", bounds.push_axis_bound},
          {"pick_place_axis_bound", bounds.pick_place_axis_bound}};
}

DataGenConfig DataGenConfig::from_json(const nlohmann::json& j) {
  DataGenConfig c;
  c.min_objects = j.value("min_objects", c.min_objects);
  c.max_objects = j.value("max_objects", c.max_objects);
  c.min_horizon = j.value("min_horizon", c.min_horizon);
  c.max_horizon = j.value("max_horizon", c.max_horizon);
  c.push_fraction = j.value("push_fraction", c.push_fraction);
  c.bounds.push_min_norm = j.value("push_min_norm", c.bounds.push_min_norm);
  c.bounds.push_max_norm = j.value("push_max_norm", c.bounds.push_max_norm);
  c.bounds.push_axis_bound = j.value("push_axis_bound", c.bounds.push_axis_bound);
  c.bounds.pick_place_axis_bound =
      j.value("pick_place_axis_bound", c.bounds.pick_place_axis_bound);
  return c;
}

SkillAction sample_action(Rng& rng, const Scene& scene,
                          const std::set<int>& off_view,
                          const DataGenConfig& cfg) {
  std::vector<int> candidates;
  for (const Cuboid& c : scene.objects)
    if (!off_view.count(c.object_id)) candidates.push_back(c.object_id);
  check(!candidates.empty(), "sample_action: every object is off-view");

  SkillAction a;
  a.skill = rng.bernoulli(cfg.push_fraction) ? Skill::Push : Skill::PickPlace;
  a.target = candidates[static_cast<size_t>(rng.uniform_int(
      static_cast<int>(candidates.size())))];
  if (a.skill == Skill::Push) {
    double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double mag = rng.uniform(cfg.bounds.push_min_norm, cfg.bounds.push_max_norm);
    a.dx = mag * std::cos(angle);
    a.dy = mag * std::sin(angle);
  } else {
    a.dx = rng.uniform(-cfg.bounds.pick_place_axis_bound,
                       cfg.bounds.pick_place_axis_bound);
    a.dy = rng.uniform(-cfg.bounds.pick_place_axis_bound,
                       cfg.bounds.pick_place_axis_bound);
  }
  return a;
}

Episode generate_episode(Rng& rng, const DataGenConfig& cfg) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    int n_objects = cfg.min_objects + rng.uniform_int(cfg.max_objects - cfg.min_objects + 1);
    int n_stacks = 1 + rng.uniform_int(std::min(2, n_objects) == 1 ? 1 : 2);
    int horizon = cfg.min_horizon + rng.uniform_int(cfg.max_horizon - cfg.min_horizon + 1);

    Episode ep;
    Scene scene;
    try {
      scene = sample_scene(rng, n_objects, n_stacks, cfg.scene);
    } catch (const Error&) {
      continue;
    }
    ep.camera = scene.camera;

    bool ok = true;
    for (int t = 0; t <= horizon; ++t) {
      EpisodeStep step;
      step.cloud = render_cloud(scene);
      step.relations = label_scene(scene, scene.camera, step.cloud.off_view);
      step.poses = scene.objects;
      ep.steps.push_back(std::move(step));
      if (t == horizon) break;
      std::set<int> off = ep.steps.back().cloud.off_view;
      if (off.size() == scene.objects.size()) {
        ok = false;
        break;
      }
      SkillAction a = sample_action(rng, scene, off, cfg);
      scene = apply_action(scene, a);
      ep.actions.push_back(a);
    }
    if (ok) return ep;
  }
  fail("generate_episode: could not build a feasible episode in 100 attempts");
}

std::vector<Episode> generate_dataset(const Rng& rng, int n_episodes,
                                      const DataGenConfig& cfg, int n_threads) {
  std::vector<Episode> out(static_cast<size_t>(n_episodes));
  auto work = [&](int begin, int stride) {
    for (int k = begin; k < n_episodes; k += stride) {
      Rng child = rng.child(static_cast<uint64_t>(k));
      out[static_cast<size_t>(k)] = generate_episode(child, cfg);
    }
  };
  if (n_threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work, t, n_threads);
    for (auto& th : pool) th.join();
  }
  return out;
}

}  // namespace reldyn
