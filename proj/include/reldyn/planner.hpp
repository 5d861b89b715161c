#pragma once

#include <vector>

#include "reldyn/metrics.hpp"
#include "reldyn/model.hpp"

namespace reldyn {

struct CemConfig {
  int n_samples = 200;
  int n_elites = 3;
  int n_iterations = 2;
  double init_mean[2] = {0.0, 0.0};
  double push_init_std[2] = {0.05, 0.3};
  double pick_place_init_std[2] = {0.3, 1.1};
  double std_floor = 1e-4;
  SkillBounds bounds;
  std::vector<Skill> skills = {Skill::Push, Skill::PickPlace};
  int n_threads = 1;

  enum class ExecutionMode { Mean, Sample3Sigma };
  ExecutionMode execution_mode = ExecutionMode::Mean;

  void validate() const;
  const double* init_std(Skill s) const {
    return s == Skill::Push ? push_init_std : pick_place_init_std;
  }
};

// Ordered list of subgoals, one per plan step.
struct PlanSkeleton {
  std::vector<Goal> subgoals;
  int length() const { return static_cast<int>(subgoals.size()); }
};

struct PlanStep {
  SkillAction action;
  double predicted_score = 0.0;  // log-probability of the subgoal
  double final_std[2] = {0.0, 0.0};
  std::vector<double> conjunct_probs;  // per subgoal conjunct, planner view
  bool achieved_analytic = false;
  bool achieved_learned = false;
};

struct PlanResult {
  std::vector<PlanStep> steps;
  bool executed = false;
  Scene final_scene;
};

// Everything scoring needs besides the latent itself; half extents feed the
// analytic readout used by the pose-supervised ablations.
struct PlanContext {
  Camera camera;
  std::map<int, Vec3> half_extents;
};

// Predicted per-relation probabilities for every ordered pair of the latent
// graph under the model's readout.
std::vector<Tensor> predicted_relation_probs(RdGnnModel& model,
                                             const LatentState& latent,
                                             const PlanContext& ctx);

// log P(goal | dynamics(latent, action)): sum of log p / log(1-p) over
// conjuncts, probabilities clipped as in training.
double score_action(RdGnnModel& model, const LatentState& latent,
                    const SkillAction& action, const Goal& goal,
                    const PlanContext& ctx);

struct CemResult {
  double params[2] = {0.0, 0.0};
  double score = 0.0;
  double final_std[2] = {0.0, 0.0};
};

// Diagonal-Gaussian CEM over the skill's 2-d parameters for a fixed
// (skill, target); samples clamped to bounds, elites refit mean/std.
CemResult cem_optimize(RdGnnModel& model, const LatentState& latent,
                       Skill skill, int target, const Goal& goal,
                       const CemConfig& cfg, const PlanContext& ctx, Rng& rng);

struct PlanStepResult {
  PlanStep step;
  LatentState next_latent;
};

// Enumerates every (skill, target) pair, runs CEM for each, keeps the
// global best, and rolls the latent forward through the chosen action.
PlanStepResult plan_step(RdGnnModel& model, const LatentState& latent,
                         const Goal& goal, const CemConfig& cfg,
                         const PlanContext& ctx, Rng& rng);

// Greedy subgoal chaining on pure latent rollouts; consults only the
// initial observation. No replanning.
PlanResult plan_skeleton(RdGnnModel& model, const SegmentedCloud& cloud,
                         const PlanSkeleton& skeleton, const CemConfig& cfg,
                         Rng& rng);

// Executes the plan in the simulator and verifies each subgoal against both
// the learned detector and the analytic labeler (the analytic verdict is
// the success metric).
PlanResult execute_and_verify(RdGnnModel& model, const Scene& scene,
                              const PlanSkeleton& skeleton, PlanResult result,
                              const CemConfig& cfg, Rng& rng);

nlohmann::json plan_result_to_json(const PlanResult& r,
                                   const PlanSkeleton& skeleton);
PlanSkeleton skeleton_from_json(const nlohmann::json& j);
nlohmann::json skeleton_to_json(const PlanSkeleton& s);

}  // namespace reldyn
