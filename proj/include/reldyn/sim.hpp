#pragma once

#include <optional>
#include <vector>

#include "reldyn/relations.hpp"
#include "reldyn/scene.hpp"

namespace reldyn {

enum class Skill : int { Push = 0, PickPlace = 1 };

inline constexpr int kNumSkills = 2;
inline constexpr double kMaxActionNorm = 1.2;  // meters
inline constexpr double kContactTol = 1e-3;    // resting-contact threshold
inline constexpr double kPushSubstep = 1e-3;   // sweep granularity

const char* skill_name(Skill s);
Skill skill_from_name(const std::string& name);

struct SkillAction {
  Skill skill = Skill::Push;
  int target = 0;  // object_id; encoded one-hot of width 16 for the network
  double dx = 0.0, dy = 0.0;  // planar displacement, world frame

  double norm() const { return std::sqrt(dx * dx + dy * dy); }
};

void validate_action(const SkillAction& a);

nlohmann::json action_to_json(const SkillAction& a);
SkillAction action_from_json(const nlohmann::json& j);

// Per-skill parameter ranges; data generation samples inside these and the
// planner clamps to them.
struct SkillBounds {
  double push_min_norm = 0.03;
  double push_max_norm = 0.3;
  double push_axis_bound = 0.3;        // theta_min/max for the planner
  double pick_place_axis_bound = 0.4;  // per-axis, both sampling and planning

  double axis_bound(Skill s) const {
    return s == Skill::Push ? push_axis_bound : pick_place_axis_bound;
  }
};

struct SettleReport {
  std::vector<int> slid_objects;  // lost their support and slid to ground
  bool any_slid() const { return !slid_objects.empty(); }
};

// Support-resolution fixpoint: objects drop bottom-up onto the highest
// overlapped surface; an object whose footprint-overlap ratio with its
// chosen support is < 0.25 slides away from the support centroid until
// clear of everything, then drops to ground. Idempotent.
Scene settle(const Scene& scene, SettleReport* report = nullptr,
             double min_support_overlap = 0.25);

// Objects resting on `object_id`, transitively (the co-moved rigid group,
// including the target itself).
std::vector<int> rest_group(const Scene& scene, int object_id);

// Sweeps the target along (dx, dy) in 1 mm substeps; swept-over cuboids are
// chained along the push direction, riders travel with their supports;
// settles afterwards.
Scene apply_push(const Scene& scene, const SkillAction& action,
                 SettleReport* report = nullptr);

// Lifts the target and everything resting on it as a rigid group,
// translates by (dx, dy), drops from above, settles.
Scene apply_pick_place(const Scene& scene, const SkillAction& action,
                       SettleReport* report = nullptr);

Scene apply_action(const Scene& scene, const SkillAction& action,
                   SettleReport* report = nullptr);

// One training episode: H+1 observations interleaved with H actions.
struct EpisodeStep {
  SegmentedCloud cloud;
  RelationMatrix relations;
  std::vector<Cuboid> poses;  // world-frame object states at this step
};

struct Episode {
  std::vector<EpisodeStep> steps;    // length H+1
  std::vector<SkillAction> actions;  // length H
  Camera camera;

  int horizon() const { return static_cast<int>(actions.size()); }
};

struct DataGenConfig {
  int min_objects = 2;
  int max_objects = 5;
  int min_horizon = 1;
  int max_horizon = 1;
  double push_fraction = 0.5;
  SkillBounds bounds;
  SceneSampleConfig scene;

  nlohmann::json to_json() const;
  static DataGenConfig from_json(const nlohmann::json& j);
};

// Samples a uniformly random feasible action for the scene: skill by
// push_fraction, target uniform over on-view objects, params uniform in the
// skill's range.
SkillAction sample_action(Rng& rng, const Scene& scene,
                          const std::set<int>& off_view,
                          const DataGenConfig& cfg);

// Scene -> H random actions, rendering and labeling every step.
Episode generate_episode(Rng& rng, const DataGenConfig& cfg);

// Deterministic stream: episode k uses rng.child(k) regardless of threads.
std::vector<Episode> generate_dataset(const Rng& rng, int n_episodes,
                                      const DataGenConfig& cfg,
                                      int n_threads = 1);

}  // namespace reldyn
